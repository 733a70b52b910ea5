//! Birkhoff-sum moments and correlations for the base map `F(ω) = 4ω`
//! under Lebesgue measure.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::circle::OmegaState;
use crate::error::{Error, Result};
use crate::numerics::{integrate, mean, variance, weighted_line_fit};
use crate::rng::{sample_rng, Stream};

use std::f64::consts::PI;

/// A mean-zero observable on the circle.
#[derive(Clone)]
pub struct BaseObservable {
    pub name: String,
    raw: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub mean: f64,
    pub lipschitz: f64,
}

impl fmt::Debug for BaseObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaseObservable").field("name", &self.name).field("mean", &self.mean).finish()
    }
}

impl BaseObservable {
    /// Subtracts `∫ χ dω` computed by quadrature.
    pub fn centered(name: &str, raw: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lipschitz: f64) -> Result<Self> {
        let breaks: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        let m = integrate(|w| raw(w), &breaks, 1e-13, 4000)?.value;
        Ok(BaseObservable { name: name.into(), raw, mean: m, lipschitz })
    }

    #[inline]
    pub fn eval(&self, omega: f64) -> f64 {
        (self.raw)(omega) - self.mean
    }

    /// `‖χ‖₂` by quadrature.
    pub fn l2_norm(&self) -> Result<f64> {
        let breaks: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        Ok(integrate(|w| self.eval(w).powi(2), &breaks, 1e-13, 4000)?.value.sqrt())
    }
}

pub const BUILTIN_BASE_OBSERVABLES: [&str; 3] = ["sin", "zero", "parabola"];

pub fn builtin_base_observable(name: &str) -> Result<BaseObservable> {
    match name {
        "sin" => BaseObservable::centered(name, Arc::new(|w| (2.0 * PI * w).sin()), 2.0 * PI),
        "zero" => BaseObservable::centered(name, Arc::new(|_| 0.0), 0.0),
        "parabola" => BaseObservable::centered(name, Arc::new(|w| w * (1.0 - w)), 1.0),
        other => Err(Error::Config(format!(
            "unknown base observable {other:?}; expected one of {}",
            BUILTIN_BASE_OBSERVABLES.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRow {
    pub n: u64,
    pub p: f64,
    /// `‖S_n χ‖_p`.
    pub norm: f64,
    /// `‖S_n χ‖_p / √n`.
    pub ratio: f64,
    /// `‖M_n χ‖_p`.
    pub max_norm: f64,
    /// `‖M_n χ‖_p / ((ln n)^{(p−1)/p} √n)`.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub observable: String,
    pub samples: u64,
    pub rows: Vec<NormRow>,
    /// Number of sampled `(orbit, n)` with `M_n < |S_n|`.
    pub max_below_sum: u64,
    pub sum_trend_bounded: bool,
    pub max_trend_bounded: bool,
    /// Empirical `sup_n ‖S_n χ‖_p / √n`.
    pub k_hat: f64,
}

/// Max over the last three entries is at most 1.2 times the max over the
/// first three.
pub fn trend_bounded(values: &[f64]) -> bool {
    if values.len() < 6 {
        return false;
    }
    let head = values[..3].iter().copied().fold(0.0, f64::max);
    let tail = values[values.len() - 3..].iter().copied().fold(0.0, f64::max);
    tail <= 1.2 * head
}

/// `2^lo, …, 2^hi`.
pub fn dyadic(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}

/// `‖S_n χ‖_p` and `‖M_n χ‖_p` for every `n` in `ns`, from shared orbits
/// of Lebesgue-distributed `ω`.
pub fn birkhoff_norms(chi: &BaseObservable, ns: &[u64], p: f64, n_samples: u64, master: u64) -> Result<NormReport> {
    if !(1.0..=8.0).contains(&p) {
        return Err(Error::InvalidParams(format!("p = {p} outside [1, 8]")));
    }
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let n_max = ns.last().copied().unwrap_or(0);
    let per: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut w = OmegaState::from_rng(sample_rng(master, Stream::Omega, i));
            let (mut s, mut m) = (0.0f64, 0.0f64);
            let mut sums = Vec::with_capacity(ns.len());
            let mut maxs = Vec::with_capacity(ns.len());
            let mut bad = 0;
            let mut next = 0;
            for k in 1..=n_max {
                s += chi.eval(w.value());
                m = m.max(s.abs());
                w.advance();
                if next < ns.len() && ns[next] == k {
                    sums.push(s.abs().powf(p));
                    maxs.push(m.powf(p));
                    bad += u64::from(m < s.abs());
                    next += 1;
                }
            }
            (sums, maxs, bad)
        })
        .collect();
    let count = n_samples.max(1) as f64;
    let rows: Vec<NormRow> = ns
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let norm = (per.iter().map(|r| r.0[j]).sum::<f64>() / count).powf(1.0 / p);
            let max_norm = (per.iter().map(|r| r.1[j]).sum::<f64>() / count).powf(1.0 / p);
            let nf = n as f64;
            let log_factor = if n >= 2 { nf.ln().powf((p - 1.0) / p) } else { 1.0 };
            NormRow { n, p, norm, ratio: norm / nf.sqrt(), max_norm, max_ratio: max_norm / (log_factor * nf.sqrt()) }
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let max_ratios: Vec<f64> = rows.iter().map(|r| r.max_ratio).collect();
    Ok(NormReport {
        observable: chi.name.clone(),
        samples: n_samples,
        max_below_sum: per.iter().map(|r| r.2).sum(),
        sum_trend_bounded: trend_bounded(&ratios),
        max_trend_bounded: trend_bounded(&max_ratios),
        k_hat: ratios.iter().copied().fold(0.0, f64::max),
        rows,
    })
}

pub fn lp_birkhoff_norm(chi: &BaseObservable, n: u64, p: f64, n_samples: u64, master: u64) -> Result<f64> {
    Ok(birkhoff_norms(chi, &[n], p, n_samples, master)?.rows.first().map_or(0.0, |r| r.norm))
}

pub fn max_birkhoff_norm(chi: &BaseObservable, n: u64, p: f64, n_samples: u64, master: u64) -> Result<f64> {
    Ok(birkhoff_norms(chi, &[n], p, n_samples, master)?.rows.first().map_or(0.0, |r| r.max_norm))
}

/// Fourier coefficients `ĝ(k)` of a real function on the circle, either a
/// trigonometric polynomial of known degree or an infinite series.
#[derive(Clone)]
pub struct Fourier {
    coeff: Arc<dyn Fn(i128) -> Complex64 + Send + Sync>,
    pub degree: Option<u64>,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("degree", &self.degree).finish()
    }
}

impl Fourier {
    /// `Σ a_k cos 2πkω + b_k sin 2πkω` for `k = 0, 1, …`, with `a_0` the constant.
    pub fn trig(cos: &[f64], sin: &[f64]) -> Self {
        let (a, b) = (cos.to_vec(), sin.to_vec());
        let degree = a.len().max(b.len()).saturating_sub(1) as u64;
        Fourier {
            coeff: Arc::new(move |k| {
                let j = k.unsigned_abs() as usize;
                if k == 0 {
                    return Complex64::new(a.first().copied().unwrap_or(0.0), 0.0);
                }
                let ak = a.get(j).copied().unwrap_or(0.0);
                let bk = b.get(j).copied().unwrap_or(0.0);
                // a cos + b sin = Σ_{±} (a ∓ i b)/2 · e^{±2πikω}
                Complex64::new(ak / 2.0, -(k.signum() as f64) * bk / 2.0)
            }),
            degree: Some(degree),
        }
    }

    pub fn series(coeff: Arc<dyn Fn(i128) -> Complex64 + Send + Sync>) -> Self {
        Fourier { coeff, degree: None }
    }

    /// `ω(1 − ω) − 1/6`, with `ĝ(k) = −1/(2π²k²)`.
    pub fn parabola() -> Self {
        Self::series(Arc::new(|k| {
            if k == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                let kf = k as f64;
                Complex64::new(-1.0 / (2.0 * PI * PI * kf * kf), 0.0)
            }
        }))
    }

    pub fn coefficient(&self, k: i128) -> Complex64 {
        match self.degree {
            Some(d) if k.unsigned_abs() > d as u128 => Complex64::new(0.0, 0.0),
            _ => (self.coeff)(k),
        }
    }
}

/// Terms kept from an infinite series on the `H` side.
pub const SERIES_TERMS: u64 = 100_000;

/// `Cov(G, H∘F^N) = Σ_{k≠0} Ĝ(−4^N k) Ĥ(k)`.
pub fn correlation_exact(g: &Fourier, h: &Fourier, n: u32) -> Result<f64> {
    let scale = 4i128.checked_pow(n).ok_or_else(|| Error::InvalidParams(format!("4^{n} overflows")))?;
    let terms = h.degree.unwrap_or(SERIES_TERMS);
    let mut sum = Complex64::new(0.0, 0.0);
    // small terms first
    for k in (1..=terms as i128).rev() {
        for k in [k, -k] {
            let hk = h.coefficient(k);
            if hk.norm() == 0.0 {
                continue;
            }
            sum += g.coefficient(-scale * k) * hk;
        }
    }
    Ok(sum.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McCorrelation {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// `Cov(G, H∘F^N)` by sampling Lebesgue `ω` on the digit stream.
pub fn correlation_mc<G, H>(g: G, h: H, n: u32, n_samples: u64, master: u64) -> McCorrelation
where
    G: Fn(f64) -> f64 + Sync,
    H: Fn(f64) -> f64 + Sync,
{
    let triples: Vec<(f64, f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut w = OmegaState::from_rng(sample_rng(master, Stream::Omega, i));
            let gv = g(w.value());
            for _ in 0..n {
                w.advance();
            }
            let hv = h(w.value());
            (gv, hv, gv * hv)
        })
        .collect();
    let gs: Vec<f64> = triples.iter().map(|t| t.0).collect();
    let hs: Vec<f64> = triples.iter().map(|t| t.1).collect();
    let (mg, mh) = (mean(&gs), mean(&hs));
    let centered: Vec<f64> = triples.iter().map(|t| (t.0 - mg) * (t.1 - mh)).collect();
    McCorrelation {
        value: mean(&centered),
        stderr: (variance(&centered) / n_samples as f64).sqrt(),
        samples: n_samples,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// `(N, |Cov(G, H∘F^N)|)`.
    pub values: Vec<(u32, f64)>,
    pub delta: f64,
    pub constant: f64,
}

/// Log-linear fit `|Cov| ≈ C δ^N` over `ns`, dropping exact zeros.
pub fn decay_fit(g: &Fourier, h: &Fourier, ns: &[u32]) -> Result<DecayFit> {
    let values: Vec<(u32, f64)> =
        ns.iter().map(|&n| Ok((n, correlation_exact(g, h, n)?.abs()))).collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = values.iter().filter(|v| v.1 > 0.0).map(|v| (v.0 as f64, v.1.ln())).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = weighted_line_fit(&xs, &ys, &vec![1.0; xs.len()])
        .ok_or_else(|| Error::Starved("fewer than two nonzero correlations".into()))?;
    Ok(DecayFit { values, delta: fit.slope.exp(), constant: fit.intercept.exp() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_observable_norms_vanish() {
        let z = builtin_base_observable("zero").unwrap();
        let r = birkhoff_norms(&z, &dyadic(1, 6), 4.0, 100, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.norm == 0.0 && row.max_norm == 0.0));
        assert!(birkhoff_norms(&z, &[4], 9.0, 10, 1).is_err());
    }

    #[test]
    fn sin_l2_norm_quadrature() {
        let s = builtin_base_observable("sin").unwrap();
        assert!(s.mean.abs() < 1e-14);
        assert!((s.l2_norm().unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        // frequencies 4^k are orthogonal, so ‖S_n‖₂² = n/2
        let r = birkhoff_norms(&s, &[1, 64], 2.0, 20_000, 2).unwrap();
        assert!((r.rows[0].norm - 0.5f64.sqrt()).abs() < 0.01);
        assert!((r.rows[1].ratio - 0.5f64.sqrt()).abs() < 0.02);
        assert_eq!(r.max_below_sum, 0);
    }

    #[test]
    fn parabola_mean_removed() {
        let p = builtin_base_observable("parabola").unwrap();
        assert!((p.mean - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn trend_rule() {
        assert!(trend_bounded(&[1.0, 1.0, 1.0, 1.1, 1.2, 1.2]));
        assert!(!trend_bounded(&[1.0, 1.0, 1.0, 1.1, 1.3, 1.2]));
        assert!(!trend_bounded(&[1.0, 1.0]));
    }

    #[test]
    fn sin_one_step_covariance_is_exactly_zero() {
        let s = Fourier::trig(&[0.0], &[0.0, 1.0]);
        assert!(correlation_exact(&s, &s, 1).unwrap().abs() <= 1e-12);
        // N = 0 gives the variance
        assert!((correlation_exact(&s, &s, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn aliasing_pair_matches_monte_carlo() {
        let g = Fourier::trig(&[0.0], &[0.0, 0.0, 0.0, 0.0, 1.0]);
        let h = Fourier::trig(&[0.0], &[0.0, 1.0]);
        let exact = correlation_exact(&g, &h, 1).unwrap();
        assert!((exact - 0.5).abs() < 1e-15);
        let mc = correlation_mc(|w| (8.0 * PI * w).sin(), |w| (2.0 * PI * w).sin(), 1, 200_000, 3);
        assert!((mc.value - exact).abs() <= 3.0 * mc.stderr, "{mc:?}");
    }

    #[test]
    fn parabola_series_covariance() {
        let g = Fourier::parabola();
        for n in [0u32, 1, 2, 5] {
            let exact = 1.0 / (180.0 * 16f64.powi(n as i32));
            let v = correlation_exact(&g, &g, n).unwrap();
            assert!((v / exact - 1.0).abs() < 1e-12, "N={n}: {v} vs {exact}");
        }
        let mc = correlation_mc(|w| w * (1.0 - w), |w| w * (1.0 - w), 1, 400_000, 4);
        assert!((mc.value - 1.0 / 2880.0).abs() <= 3.0 * mc.stderr, "{mc:?}");
        let fit = decay_fit(&g, &g, &(1..=20).collect::<Vec<_>>()).unwrap();
        assert!((fit.delta - 1.0 / 16.0).abs() < 1e-9);
    }
}
