//! Stable laws with characteristic function
//! `exp(−c|t|^p (1 − iβ sgn(t) tan(pπ/2)))`, `p ∈ (1, 2]`.
//!
//! This is the `S_p(σ, β, 0)` form of Samorodnitsky and Taqqu with
//! `σ^p = c`. Every other parameterisation in the crate converts through
//! [`StableLaw::new`].

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::circle::ParamCurve;
use crate::error::{Error, Result};
use crate::numerics::{gamma, integrate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableLaw {
    pub p: f64,
    /// `c` in the exponent, i.e. `σ^p`.
    pub scale: f64,
    pub beta: f64,
}

impl StableLaw {
    pub fn new(p: f64, scale: f64, beta: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) || !(scale > 0.0 && scale.is_finite()) || !(-1.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParams(format!(
                "stable law needs p in (1,2], scale > 0, beta in [-1,1]; got p={p}, scale={scale}, beta={beta}"
            )));
        }
        Ok(StableLaw { p, scale, beta })
    }

    fn tau(&self) -> f64 {
        // tan(π) is −1.2e−16, not 0; the Gaussian case must be exactly symmetric
        if self.p == 2.0 {
            0.0
        } else {
            (self.p * FRAC_PI_2).tan()
        }
    }

    /// `σ = c^{1/p}`.
    pub fn sigma(&self) -> f64 {
        self.scale.powf(1.0 / self.p)
    }

    /// `lim x^p P(X > x)`, and the same for the left tail with `−β`.
    fn tail_constant(&self, beta: f64) -> f64 {
        gamma(self.p) * (self.p * FRAC_PI_2).sin() / PI * (1.0 + beta) * self.scale
    }
}

pub fn stable_cf(law: &StableLaw, t: f64) -> Complex64 {
    if t == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let mag = law.scale * t.abs().powf(law.p);
    let phase = mag * law.beta * t.signum() * law.tau();
    Complex64::from_polar((-mag).exp(), phase)
}

const CDF_TOL: f64 = 1e-9;
/// Beyond this many σ the one-term tail expansion is used.
const TAIL_SWITCH: f64 = 2000.0;

/// Gil-Pelaez inversion
/// `F(x) = 1/2 − (1/π) ∫₀^∞ e^{−ct^p} sin(cβτ t^p − tx) / t dt`, `τ = tan(pπ/2)`,
/// truncated where `e^{−ct^p} < 1e−12`.
pub fn stable_cdf(law: &StableLaw, x: f64) -> Result<f64> {
    let sigma = law.sigma();
    if x.abs() > TAIL_SWITCH * sigma && law.p < 2.0 {
        return Ok(if x > 0.0 {
            1.0 - law.tail_constant(law.beta) * x.powf(-law.p)
        } else {
            law.tail_constant(-law.beta) * (-x).powf(-law.p)
        });
    }
    let (c, p, bt) = (law.scale, law.p, law.scale * law.beta * law.tau());
    let integrand = |t: f64| {
        if t == 0.0 {
            return -x;
        }
        let tp = t.powf(p);
        (-c * tp).exp() * (bt * tp - t * x).sin() / t
    };
    let upper = (27.64 / c).powf(1.0 / p);
    let breaks = panel_breaks(upper, x);
    let r = integrate(integrand, &breaks, CDF_TOL, 200_000)?;
    Ok((0.5 - r.value / PI).clamp(0.0, 1.0))
}

/// Density by the same inversion: `(1/π) ∫₀^∞ e^{−ct^p} cos(cβτ t^p − tx) dt`.
pub fn stable_pdf(law: &StableLaw, x: f64) -> Result<f64> {
    let (c, p, bt) = (law.scale, law.p, law.scale * law.beta * law.tau());
    let integrand = |t: f64| {
        let tp = t.powf(p);
        (-c * tp).exp() * (bt * tp - t * x).cos()
    };
    let upper = (27.64 / c).powf(1.0 / p);
    let r = integrate(integrand, &panel_breaks(upper, x), CDF_TOL, 200_000)?;
    Ok((r.value / PI).max(0.0))
}

/// Geometric panels towards 0 plus panels spanning at most ~4 periods of `tx`.
fn panel_breaks(upper: f64, x: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut h = upper * 2f64.powi(-20);
    while h < upper / 16.0 {
        b.push(h);
        h *= 2.0;
    }
    let start = *b.last().unwrap();
    let period = 2.0 * PI / x.abs().max(1e-12);
    let panels = (((upper - start) / (4.0 * period)).ceil() as usize).clamp(16, 100_000);
    for k in 1..=panels {
        b.push(start + (upper - start) * k as f64 / panels as f64);
    }
    b
}

/// One draw by the Chambers-Mallows-Stuck transform (Weron's form for
/// `p ≠ 1`), scaled to the crate's parameterisation.
pub fn stable_sample<R: Rng + ?Sized>(law: &StableLaw, rng: &mut R) -> f64 {
    let p = law.p;
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let zeta = law.beta * law.tau();
    let b = zeta.atan() / p;
    let s = (1.0 + zeta * zeta).powf(1.0 / (2.0 * p));
    let x = s * (p * (v + b)).sin() / v.cos().powf(1.0 / p) * ((v - p * (v + b)).cos() / w).powf((1.0 - p) / p);
    law.sigma() * x
}

/// Monotone table of [`stable_cdf`] on an asinh-spaced grid, with cubic
/// Hermite interpolation using the density as slope. Used where millions
/// of CDF evaluations are needed (KS distances).
#[derive(Debug, Clone)]
pub struct CdfTable {
    law: StableLaw,
    sigma: f64,
    u_max: f64,
    du: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CdfTable {
    pub fn new(law: &StableLaw, points: usize) -> Result<Self> {
        let sigma = law.sigma();
        // x = σ sinh(u); covers |x| ≤ 200σ
        let u_max = 200f64.asinh();
        let du = 2.0 * u_max / (points - 1) as f64;
        let mut values = Vec::with_capacity(points);
        let mut slopes = Vec::with_capacity(points);
        for k in 0..points {
            let u = -u_max + k as f64 * du;
            let x = sigma * u.sinh();
            values.push(stable_cdf(law, x)?);
            // dF/du = f(x) σ cosh(u)
            slopes.push(stable_pdf(law, x)? * sigma * u.cosh());
        }
        Ok(CdfTable { law: *law, sigma, u_max, du, values, slopes })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let u = (x / self.sigma).asinh();
        if u <= -self.u_max || u >= self.u_max {
            return stable_cdf(&self.law, x);
        }
        let pos = (u + self.u_max) / self.du;
        let k = (pos as usize).min(self.values.len() - 2);
        let t = pos - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.du, self.slopes[k + 1] * self.du);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        Ok(v.clamp(y0.min(y1), y0.max(y1)))
    }
}

/// The limit law of the stable regime:
/// `p = 1/α_min`, `scale = A |c|^{1/α_min} Γ(1 − 1/α_min) cos(π/(2α_min))`,
/// `β = sgn c`.
pub fn theorem_params(curve: &ParamCurve, a: f64, c_obs: f64) -> Result<StableLaw> {
    let am = curve.alpha_min;
    if !(am > 0.5 && am < 1.0) {
        return Err(Error::InvalidParams(format!("stable regime needs 1/2 < alpha_min < 1, got {am}")));
    }
    if c_obs == 0.0 || !c_obs.is_finite() {
        return Err(Error::InvalidParams("stable regime needs c != 0".into()));
    }
    if !(a > 0.0) {
        return Err(Error::Domain { what: "theorem_params A", value: a });
    }
    let p = 1.0 / am;
    let scale = a * c_obs.abs().powf(p) * gamma(1.0 - p) * (PI / (2.0 * am)).cos();
    if !(scale > 0.0) {
        return Err(Error::Convention(format!("computed stable scale {scale} is not positive")));
    }
    StableLaw::new(p, scale, c_obs.signum())
}
