//! Fibre maps `T_α`, their left inverse branch and the skew-product step.

use crate::circle::{OmegaState, ParamCurve};
use crate::error::{Error, Result};

/// `T_α(x) = x(1 + (2x)^α)` on `[0, 1/2]`, `2x − 1` on `(1/2, 1]`.
#[inline]
pub fn t_alpha(x: f64, alpha: f64) -> f64 {
    if x <= 0.5 {
        if x <= 0.0 {
            return 0.0;
        }
        x * (1.0 + (2.0 * x).powf(alpha))
    } else {
        2.0 * x - 1.0
    }
}

/// Derivative of [`t_alpha`]; the point `x = 1/2` belongs to the left branch.
#[inline]
pub fn t_alpha_deriv(x: f64, alpha: f64) -> f64 {
    if x <= 0.5 {
        if x <= 0.0 {
            return 1.0;
        }
        1.0 + (alpha + 1.0) * (2.0 * x).powf(alpha)
    } else {
        2.0
    }
}

/// The unique `x ∈ [0, 1/2]` with `T_α(x) = y`.
///
/// The left branch is convex and increasing, so Newton started to the right
/// of the root decreases monotonically onto it. Steps leaving the bracket
/// fall back to bisection.
pub fn t_alpha_left_inverse(y: f64, alpha: f64) -> Result<f64> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(Error::Domain { what: "t_alpha_left_inverse", value: y });
    }
    if y == 1.0 {
        return Ok(0.5);
    }
    let mut lo = 0.0;
    let mut hi = 0.5f64;
    // g(x) >= x, so the root is at most y; y/(1+(2y)^α) is at most the root
    let mut x = (y / (1.0 + (2.0 * y).powf(alpha))).min(0.5);
    for _ in 0..100 {
        let p = (2.0 * x).powf(alpha);
        let g = x * (1.0 + p) - y;
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dg = 1.0 + (alpha + 1.0) * p;
        let mut next = x - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::InverseSolver { depth: 0, target: y })
}

/// Right inverse branch: the `x ∈ [1/2, 1]` with `2x − 1 = y`.
#[inline]
pub fn t_alpha_right_inverse(y: f64) -> f64 {
    0.5 * (y + 1.0)
}

/// A point of `S¹ × [0,1]`.
#[derive(Clone, Debug)]
pub struct SkewPoint {
    pub omega: OmegaState,
    pub x: f64,
}

impl SkewPoint {
    pub fn new(omega: OmegaState, x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain { what: "fibre coordinate", value: x });
        }
        Ok(SkewPoint { omega, x })
    }

    #[inline]
    pub fn in_y(&self) -> bool {
        self.x > 0.5
    }

    /// `(ω, x) ↦ (4ω, T_{α(ω)}(x))` in place.
    #[inline]
    pub fn step(&mut self, curve: &ParamCurve) {
        self.x = t_alpha(self.x, curve.alpha(self.omega.value()));
        self.omega.advance();
    }

    /// Like [`SkewPoint::step`], returning `ln T'_{α(ω)}(x)` at the old point.
    #[inline]
    pub fn step_log_deriv(&mut self, curve: &ParamCurve) -> f64 {
        let alpha = curve.alpha(self.omega.value());
        let d = t_alpha_deriv(self.x, alpha).ln();
        self.x = t_alpha(self.x, alpha);
        self.omega.advance();
        d
    }
}

pub fn skew_step(mut p: SkewPoint, curve: &ParamCurve) -> SkewPoint {
    p.step(curve);
    p
}

/// Birkhoff statistics of one orbit segment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OrbitAccumulator {
    pub steps: u64,
    pub sum: f64,
    /// `max_{k ≤ n} |S_k f|`.
    pub max_abs: f64,
    /// `#{k < n : T^k p ∈ Y}`.
    pub time_in_y: u64,
}

impl OrbitAccumulator {
    #[inline]
    pub fn push(&mut self, value: f64, in_y: bool) {
        self.steps += 1;
        self.sum += value;
        self.max_abs = self.max_abs.max(self.sum.abs());
        self.time_in_y += in_y as u64;
    }
}

/// Run `n` steps from `p`, accumulating `f(ω, x)` at times `0..n`.
/// The point is left at `T^n p`.
pub fn orbit<F>(p: &mut SkewPoint, curve: &ParamCurve, n: u64, f: &F) -> OrbitAccumulator
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    let mut acc = OrbitAccumulator::default();
    for _ in 0..n {
        let w = p.omega.value();
        acc.push(f(w, p.x), p.x > 0.5);
        p.x = t_alpha(p.x, curve.alpha(w));
        p.omega.advance();
    }
    acc
}
