//! The base dynamics `ω ↦ 4ω` on the circle and the exponent curve `α(ω)`.
//!
//! Iterating `4ω mod 1` in floating point shifts two bits out of the
//! mantissa per step and collapses every orbit onto 0 within ~27 steps.
//! [`OmegaState`] instead stores ω as a stream of base-4 digits: the leading
//! 32 digits live in a `u64` window and further digits are produced on
//! demand by a deterministic tail, so one application of the map is an
//! exact digit shift for any number of iterations.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate, Integral};

/// Number of base-4 digits held in the window.
pub const WINDOW_DIGITS: u32 = 32;
/// Default number of digits used when reading the value of ω.
pub const DEFAULT_PRECISION: u32 = 32;

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Source of the digits that follow the window.
#[derive(Clone, Debug)]
enum DigitTail {
    /// Uniform i.i.d. digits; `buffer` holds `left` unread digits in its top bits.
    Random { rng: Box<ChaCha8Rng>, buffer: u64, left: u32 },
    /// Eventually periodic expansion, e.g. `1/3 = 0.111…₄`.
    Cycle { digits: Arc<[u8]>, pos: usize },
}

impl DigitTail {
    #[inline]
    fn next_digit(&mut self) -> u8 {
        match self {
            DigitTail::Random { rng, buffer, left } => {
                if *left == 0 {
                    *buffer = rng.next_u64();
                    *left = WINDOW_DIGITS;
                }
                let d = (*buffer >> 62) as u8;
                *buffer <<= 2;
                *left -= 1;
                d
            }
            DigitTail::Cycle { digits, pos } => {
                let d = digits[*pos];
                *pos = (*pos + 1) % digits.len();
                d
            }
        }
    }
}

/// A point of the circle `[0,1)` stored as its base-4 expansion.
#[derive(Clone, Debug)]
pub struct OmegaState {
    /// Leading 32 digits, most significant digit in the top two bits.
    window: u64,
    /// Explicit digits waiting to enter the window before the tail is used.
    queued: VecDeque<u8>,
    tail: DigitTail,
    precision: u32,
}

impl OmegaState {
    fn build(prefix: &[u8], tail: DigitTail, precision: u32) -> Result<Self> {
        if precision == 0 || precision > WINDOW_DIGITS {
            return Err(Error::InvalidParams(format!(
                "digit precision must lie in 1..={WINDOW_DIGITS}, got {precision}"
            )));
        }
        if let Some(&d) = prefix.iter().find(|&&d| d > 3) {
            return Err(Error::InvalidParams(format!("base-4 digit out of range: {d}")));
        }
        let mut state = OmegaState { window: 0, queued: prefix.iter().copied().collect(), tail, precision };
        for _ in 0..WINDOW_DIGITS {
            let d = state.pull();
            state.window = (state.window << 2) | d as u64;
        }
        Ok(state)
    }

    #[inline]
    fn pull(&mut self) -> u8 {
        match self.queued.pop_front() {
            Some(d) => d,
            None => self.tail.next_digit(),
        }
    }

    /// Lebesgue-distributed point whose digits come from `rng`.
    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        let tail = DigitTail::Random { rng: Box::new(rng), buffer: 0, left: 0 };
        Self::build(&[], tail, DEFAULT_PRECISION).expect("default precision is valid")
    }

    /// Explicit leading digits followed by uniform random digits.
    pub fn with_prefix(prefix: &[u8], rng: ChaCha8Rng) -> Result<Self> {
        let tail = DigitTail::Random { rng: Box::new(rng), buffer: 0, left: 0 };
        Self::build(prefix, tail, DEFAULT_PRECISION)
    }

    /// Explicit leading digits followed by a repeating block.
    ///
    /// `periodic(&[], &[1])` is exactly 1/3, `periodic(&[], &[0])` is 0.
    pub fn periodic(prefix: &[u8], cycle: &[u8]) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::InvalidParams("empty digit cycle".into()));
        }
        if let Some(&d) = cycle.iter().find(|&&d| d > 3) {
            return Err(Error::InvalidParams(format!("base-4 digit out of range: {d}")));
        }
        let tail = DigitTail::Cycle { digits: cycle.into(), pos: 0 };
        Self::build(prefix, tail, DEFAULT_PRECISION)
    }

    /// Parse `"0.2031(12)"`-style base-4 literals: digits after the point,
    /// with an optional parenthesised repeating block. Without a block the
    /// expansion continues with zeros.
    pub fn parse_base4(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed base-4 literal {text:?}"));
        let body = text.trim().strip_prefix("0.").ok_or_else(bad)?;
        let (prefix, cycle) = match body.find('(') {
            Some(open) => {
                let inner = body[open + 1..].strip_suffix(')').ok_or_else(bad)?;
                (&body[..open], inner)
            }
            None => (body, "0"),
        };
        let digits = |s: &str| -> Result<Vec<u8>> {
            s.chars()
                .map(|c| match c {
                    '0'..='3' => Ok(c as u8 - b'0'),
                    _ => Err(bad()),
                })
                .collect()
        };
        let prefix = digits(prefix)?;
        let cycle = digits(cycle)?;
        if cycle.is_empty() {
            return Err(bad());
        }
        Self::periodic(&prefix, &cycle)
    }

    /// Change the number of leading digits used by [`OmegaState::value`].
    pub fn with_precision(mut self, precision: u32) -> Result<Self> {
        if precision == 0 || precision > WINDOW_DIGITS {
            return Err(Error::InvalidParams(format!(
                "digit precision must lie in 1..={WINDOW_DIGITS}, got {precision}"
            )));
        }
        self.precision = precision;
        Ok(self)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Apply `ω ↦ 4ω mod 1`: drop the leading digit.
    #[inline]
    pub fn advance(&mut self) {
        let d = self.pull();
        self.window = (self.window << 2) | d as u64;
    }

    /// Leading `k ≤ 32` digits as an integer, i.e. `⌊4^k ω⌋`.
    #[inline]
    pub fn leading(&self, k: u32) -> u64 {
        debug_assert!(k <= WINDOW_DIGITS);
        if k == 0 {
            0
        } else {
            self.window >> (64 - 2 * k)
        }
    }

    /// The `i`-th digit (1-based, `i ≤ 32`).
    pub fn digit(&self, i: u32) -> u8 {
        assert!((1..=WINDOW_DIGITS).contains(&i), "digit index {i} outside 1..=32");
        ((self.window >> (64 - 2 * i)) & 3) as u8
    }

    /// The raw 64-bit window `⌊2^64 ω⌋`.
    #[inline]
    pub fn window(&self) -> u64 {
        self.window
    }

    /// Value of the leading `precision` digits, rounded down to a double.
    ///
    /// With the default 32 digits this is `⌊2^53 ω⌋ / 2^53`, so the result
    /// is always strictly below 1.
    #[inline]
    pub fn value(&self) -> f64 {
        let truncated = if self.precision >= WINDOW_DIGITS {
            self.window
        } else {
            self.window & !(u64::MAX >> (2 * self.precision))
        };
        (truncated >> 11) as f64 * TWO_POW_M53
    }
}

/// Lebesgue sample of the circle keyed by `seed`, read with `precision` digits.
pub fn omega_from_seed(seed: u64, precision: u32) -> Result<OmegaState> {
    OmegaState::from_rng(ChaCha8Rng::seed_from_u64(seed)).with_precision(precision)
}

/// The canonical exponent curve
/// `α(ω) = α_min + ε (1 + sin 2π(ω − x₀ − 1/4))`, minimal at `x₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCurve {
    pub alpha_min: f64,
    pub epsilon: f64,
    pub x0: f64,
}

impl ParamCurve {
    /// Validated curve: `0 < α_min < α_max < 1` and `α_max < 3/2 α_min`.
    pub fn new(alpha_min: f64, epsilon: f64, x0: f64) -> Result<Self> {
        Self::build(alpha_min, epsilon, x0, false)
    }

    /// Curve that skips the `α_max < 3/2 α_min` and `ε > 0` checks
    /// (the `--unsafe-params` override). `0 < α_min ≤ α_max < 1` is still
    /// required since the fibre maps are undefined otherwise.
    pub fn new_unchecked(alpha_min: f64, epsilon: f64, x0: f64) -> Result<Self> {
        Self::build(alpha_min, epsilon, x0, true)
    }

    fn build(alpha_min: f64, epsilon: f64, x0: f64, allow_unsafe: bool) -> Result<Self> {
        let finite = alpha_min.is_finite() && epsilon.is_finite() && x0.is_finite();
        if !finite || alpha_min <= 0.0 || epsilon < 0.0 || alpha_min + 2.0 * epsilon >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "need 0 < alpha_min < alpha_max < 1, got alpha_min={alpha_min}, epsilon={epsilon}"
            )));
        }
        if !allow_unsafe {
            if epsilon <= 0.0 {
                return Err(Error::InvalidParams("epsilon must be positive (alpha'' > 0 at the minimum)".into()));
            }
            if epsilon >= alpha_min / 4.0 {
                return Err(Error::InvalidParams(format!(
                    "alpha_max = {} must stay below 3/2 alpha_min = {}",
                    alpha_min + 2.0 * epsilon,
                    1.5 * alpha_min
                )));
            }
        }
        Ok(ParamCurve { alpha_min, epsilon, x0: x0.rem_euclid(1.0) })
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_min + 2.0 * self.epsilon
    }

    /// `α''(x₀) = 4π² ε`.
    pub fn second_deriv(&self) -> f64 {
        4.0 * PI * PI * self.epsilon
    }

    /// `sup |α'| = 2π ε`.
    pub fn max_slope(&self) -> f64 {
        2.0 * PI * self.epsilon
    }

    #[inline]
    pub fn alpha(&self, omega: f64) -> f64 {
        // sin 2π(ω − x₀ − 1/4) = −cos 2π(ω − x₀)
        self.alpha_min + self.epsilon * (1.0 - (2.0 * PI * (omega - self.x0)).cos())
    }

    pub fn alpha_deriv(&self, omega: f64) -> f64 {
        2.0 * PI * self.epsilon * (2.0 * PI * (omega - self.x0)).sin()
    }
}

/// Convenience form of [`ParamCurve::alpha`].
pub fn alpha_eval(curve: &ParamCurve, omega: f64) -> f64 {
    curve.alpha(omega)
}

/// `E(e^{−(α−α_min) w})` over Lebesgue ω, by adaptive Gauss-Kronrod
/// quadrature with dyadic breakpoints accumulating at `x₀`.
pub fn laplace_moment(curve: &ParamCurve, w: f64) -> Result<Integral> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::Domain { what: "laplace_moment weight", value: w });
    }
    let beta = |u: f64| curve.alpha(curve.x0 + u) - curve.alpha_min;
    let integrand = |u: f64| (-beta(u) * w).exp();
    // integrand is concentrated in |u| ≲ 1/(2π sqrt(ε w)); refine down well below that
    let width = if curve.epsilon * w > 0.0 { 1.0 / (2.0 * PI * (curve.epsilon * w).sqrt()) } else { 0.5 };
    let mut cuts = vec![0.0];
    let mut h = 0.5;
    while h > width * 1e-3 && cuts.len() < 60 {
        cuts.push(h);
        h *= 0.5;
    }
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut breakpoints: Vec<f64> = cuts.iter().rev().map(|c| -c).collect();
    breakpoints.extend(cuts.iter().skip(1));
    integrate(integrand, &breakpoints, 1e-10, 4000)
}
