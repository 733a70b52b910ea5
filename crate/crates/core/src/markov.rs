//! Pullback sequences `X_n`, `Y_n`, first returns to `Y = S¹ × (1/2, 1]`
//! and numerical checks of the Gibbs-Markov structure of the induced map.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circle::{OmegaState, ParamCurve, WINDOW_DIGITS};
use crate::error::{Error, Result};
use crate::interval::{t_alpha, t_alpha_deriv, t_alpha_left_inverse, SkewPoint};
use crate::numerics::weighted_line_fit;
use crate::rng::{sample_rng, Stream};

/// Default bound on a single excursion before it is reported as truncated.
pub const DEFAULT_RETURN_CAP: u64 = 100_000_000;

/// `values[k] = X_k(F^{n−k} ω)` for `k = 0..=n`, the chain of pullbacks
/// ending at `X_n(ω) = values[n]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XnSequence {
    pub n: usize,
    pub values: Vec<f64>,
}

impl XnSequence {
    pub fn last(&self) -> f64 {
        self.values[self.n]
    }
}

/// α along the base orbit `ω, Fω, …, F^{len−1}ω`.
fn alpha_orbit(omega: &OmegaState, curve: &ParamCurve, len: usize) -> Vec<f64> {
    let mut w = omega.clone();
    (0..len)
        .map(|_| {
            let a = curve.alpha(w.value());
            w.advance();
            a
        })
        .collect()
}

fn pull_back(alphas: &[f64], mut visit: impl FnMut(f64)) -> Result<f64> {
    // X_1(F^{n-1}ω) = 1/2; each further step uses α at one base point earlier
    let mut x = 0.5;
    visit(x);
    for (depth, &a) in alphas.iter().enumerate().rev() {
        x = t_alpha_left_inverse(x, a).map_err(|_| Error::InverseSolver { depth: alphas.len() - depth, target: x })?;
        visit(x);
    }
    Ok(x)
}

pub fn xn_sequence(omega: &OmegaState, curve: &ParamCurve, n: usize) -> Result<XnSequence> {
    let mut values = Vec::with_capacity(n + 1);
    values.push(1.0);
    if n >= 1 {
        let alphas = alpha_orbit(omega, curve, n - 1);
        pull_back(&alphas, |x| values.push(x))?;
    }
    Ok(XnSequence { n, values })
}

/// `X_n(ω)` without storing the intermediate chain.
pub fn xn_value(omega: &OmegaState, curve: &ParamCurve, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let alphas = alpha_orbit(omega, curve, n - 1);
    pull_back(&alphas, |_| {})
}

/// `Y_n(ω) = (X_{n−1}(Fω) + 1)/2`.
pub fn yn_value(omega: &OmegaState, curve: &ParamCurve, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain { what: "yn_value index", value: 0.0 });
    }
    let mut w = omega.clone();
    w.advance();
    Ok(0.5 * (xn_value(&w, curve, n - 1)? + 1.0))
}

/// The interval `J_n(ω) = [Y_{n+1}(ω), Y_n(ω)]` of points of `Y` returning in `n` steps.
pub fn jn_interval(omega: &OmegaState, curve: &ParamCurve, n: usize) -> Result<(f64, f64)> {
    let mut w = omega.clone();
    w.advance();
    // the chain entry values[n-1] is X_{n-1}(F²ω), not X_{n-1}(Fω)
    let lower = xn_value(&w, curve, n)?;
    let upper = xn_value(&w, curve, n - 1)?;
    Ok((0.5 * (lower + 1.0), 0.5 * (upper + 1.0)))
}

/// Partition element `A_{s,n}` containing an entry point: `n` is the return
/// time and `s` is read from the leading `q + n` base-4 digits of ω. Only
/// the first 32 digits are materialised; `complete` is false when `q + n`
/// exceeds that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartitionLabel {
    pub n: u64,
    pub s: u64,
    pub digits: u32,
    pub complete: bool,
}

/// One excursion from `Y` back to `Y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnRecord {
    pub entry_omega: f64,
    pub entry_x: f64,
    pub phi: u64,
    /// `f_Y = Σ_{k<φ} f(T^k y)`.
    pub f_y: f64,
    /// `max_{1≤k≤φ} |S_k f|`.
    pub max_abs: f64,
    pub label: PartitionLabel,
}

#[derive(Debug, Clone, Copy)]
pub struct ReturnOptions {
    pub cap: u64,
    /// Partition depth used for labels.
    pub q: u32,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions { cap: DEFAULT_RETURN_CAP, q: 3 }
    }
}

/// Iterate from `p ∈ Y` until the orbit is back in `Y`; `p` is left at the
/// return point.
pub fn return_time<F>(p: &mut SkewPoint, curve: &ParamCurve, f: &F, opts: &ReturnOptions) -> Result<ReturnRecord>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    if !p.in_y() {
        return Err(Error::Domain { what: "return_time entry point (must lie in Y)", value: p.x });
    }
    let entry_window = p.omega.window();
    let entry_omega = p.omega.value();
    let entry_x = p.x;
    let mut phi = 0u64;
    let mut sum = 0.0;
    let mut max_abs = 0.0f64;
    loop {
        let w = p.omega.value();
        sum += f(w, p.x);
        max_abs = max_abs.max(sum.abs());
        p.x = t_alpha(p.x, curve.alpha(w));
        p.omega.advance();
        phi += 1;
        if p.x > 0.5 {
            break;
        }
        if phi >= opts.cap {
            let label = label_for(entry_window, phi, opts.q);
            let partial = ReturnRecord { entry_omega, entry_x, phi, f_y: sum, max_abs, label };
            return Err(Error::Truncated { partial: Box::new(partial) });
        }
    }
    Ok(ReturnRecord { entry_omega, entry_x, phi, f_y: sum, max_abs, label: label_for(entry_window, phi, opts.q) })
}

fn label_for(window: u64, n: u64, q: u32) -> PartitionLabel {
    let wanted = q as u64 + n;
    let digits = wanted.min(WINDOW_DIGITS as u64) as u32;
    let s = if digits == 0 { 0 } else { window >> (64 - 2 * digits) };
    PartitionLabel { n, s, digits, complete: wanted <= WINDOW_DIGITS as u64 }
}

/// Successive excursions of the induced map `T_Y`.
pub struct InducedOrbit<'a, F: ?Sized> {
    point: SkewPoint,
    curve: &'a ParamCurve,
    f: &'a F,
    opts: ReturnOptions,
    remaining: usize,
}

impl<F: Fn(f64, f64) -> f64 + ?Sized> InducedOrbit<'_, F> {
    pub fn point(&self) -> &SkewPoint {
        &self.point
    }
}

impl<F: Fn(f64, f64) -> f64 + ?Sized> Iterator for InducedOrbit<'_, F> {
    type Item = Result<ReturnRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = return_time(&mut self.point, self.curve, self.f, &self.opts);
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }
}

pub fn induced_orbit<'a, F>(
    p: SkewPoint,
    curve: &'a ParamCurve,
    steps: usize,
    f: &'a F,
    opts: ReturnOptions,
) -> Result<InducedOrbit<'a, F>>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    if !p.in_y() {
        return Err(Error::Domain { what: "induced_orbit entry point (must lie in Y)", value: p.x });
    }
    Ok(InducedOrbit { point: p, curve, f, opts, remaining: steps })
}

/// The constants `D, ε₀, q, λ, a` of the Markov construction, evaluated
/// numerically for a given curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryConstants {
    pub d: f64,
    pub eps0: f64,
    pub q: u32,
    pub lambda: f64,
    /// Unclamped infimum of `T'` on `[X_3, X_1]` over the ω grid.
    pub lambda_raw: f64,
    pub lambda_clamped: bool,
    pub a: f64,
    /// Smallest `|I_1(ω)| = 1/2 − X_2(ω)` on the ω grid.
    pub min_i1: f64,
}

const GEOMETRY_GRID: usize = 4096;

impl GeometryConstants {
    pub fn compute(curve: &ParamCurve) -> Result<Self> {
        let mut slope_sup = 0.0f64;
        let mut min_i1 = f64::INFINITY;
        let mut lambda_raw = f64::INFINITY;
        for i in 0..GEOMETRY_GRID {
            let w = i as f64 / GEOMETRY_GRID as f64;
            let alpha = curve.alpha(w);
            let dalpha = curve.alpha_deriv(w);
            for j in 1..=512 {
                let x = 0.5 * j as f64 / 512.0;
                let u = 2.0 * x;
                slope_sup = slope_sup.max((x * u.ln() * dalpha * u.powf(alpha)).abs());
            }
            let x2 = t_alpha_left_inverse(0.5, alpha)?;
            min_i1 = min_i1.min(0.5 - x2);
            let x2_next = t_alpha_left_inverse(0.5, curve.alpha((4.0 * w).fract()))?;
            let x3 = t_alpha_left_inverse(x2_next, alpha)?;
            lambda_raw = lambda_raw.min(t_alpha_deriv(x3, alpha));
        }
        let d = 2.0 * (4.0 * slope_sup).max(1.0);
        let eps0 = (1.0f64 / 16.0).min(0.9 * min_i1 / d);
        let mut q = 1;
        while 4f64.powi(-(q as i32)) >= eps0 {
            q += 1;
        }
        if lambda_raw <= 1.0 {
            return Err(Error::InvalidParams(format!("no expansion on [X_3, X_1]: inf T' = {lambda_raw}")));
        }
        let lambda = lambda_raw.min(1.9);
        let a = (1.0 - lambda / 4.0) / d;
        Ok(GeometryConstants { d, eps0, q, lambda, lambda_raw, lambda_clamped: lambda_raw > 1.9, a, min_i1 })
    }

    pub fn d_prime(&self, dx: f64, domega: f64) -> f64 {
        self.a * dx.abs() + domega.abs()
    }
}

/// One JSON record per structural check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub samples: u64,
    pub skipped: u64,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub by_depth: Vec<(u64, f64)>,
}

/// Log-log regression slope of `E X_k` over `k ∈ [n_lo, n_hi]`, averaged
/// across `orbits` chains of length `n_hi`. Each chain entry
/// `X_k(F^{n−k}ω)` is an `X_k` at a Lebesgue-distributed base point.
/// Passes when the slope lies in `[−1/α_min, −1/α_max]`.
pub fn xn_slope_check(curve: &ParamCurve, orbits: u64, n_lo: usize, n_hi: usize, master: u64) -> Result<CheckReport> {
    if n_lo < 1 || n_hi < 2 * n_lo {
        return Err(Error::InvalidParams(format!("slope range [{n_lo}, {n_hi}] too narrow")));
    }
    let chains: Vec<XnSequence> = (0..orbits)
        .into_par_iter()
        .map(|i| xn_sequence(&OmegaState::from_rng(sample_rng(master, Stream::Omega, i)), curve, n_hi))
        .collect::<Result<_>>()?;
    let mut decreasing = true;
    for c in &chains {
        decreasing &= c.values.windows(2).all(|p| p[1] < p[0]);
    }
    let points = 30;
    let mut ks: Vec<usize> = (0..points)
        .map(|j| (n_lo as f64 * (n_hi as f64 / n_lo as f64).powf(j as f64 / (points - 1) as f64)).round() as usize)
        .collect();
    ks.dedup();
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = ks
        .iter()
        .map(|&k| (chains.iter().map(|c| c.values[k]).sum::<f64>() / orbits as f64).ln())
        .collect();
    let fit = weighted_line_fit(&xs, &ys, &vec![1.0; xs.len()]).ok_or(Error::Starved("degenerate slope fit".into()))?;
    let (lo, hi) = (-1.0 / curve.alpha_min, -1.0 / curve.alpha_max());
    let mut notes = vec![format!("admissible slope range [{lo}, {hi}]")];
    if !decreasing {
        notes.push("a chain failed to decrease strictly".into());
    }
    Ok(CheckReport {
        check: "xn_slope".into(),
        samples: orbits,
        skipped: 0,
        statistic: fit.slope,
        threshold: lo,
        pass: decreasing && fit.slope >= lo && fit.slope <= hi,
        notes,
        by_depth: ks.iter().zip(&ys).map(|(&k, y)| (k as u64, y.exp())).collect(),
    })
}

/// Two points of the same `A_{s,n}` and their images under `T^n`.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub n: u64,
    pub dx_before: f64,
    pub domega_before: f64,
    pub dx_after: f64,
    pub domega_after: f64,
    /// `ln (T^n_{ω₁})'(x₁) − ln (T^n_{ω₂})'(x₂)`.
    pub log_jacobian_gap: f64,
}

fn window_gap(a: &OmegaState, b: &OmegaState) -> f64 {
    let d = a.window() as i128 - b.window() as i128;
    d.unsigned_abs() as f64 * (1.0 / 18_446_744_073_709_551_616.0)
}

/// Draw a pair in `A_{s,n}` with random `s`, run both points `n` steps and
/// return the geometry, or `None` if rounding moved either point off the
/// `n`-step return.
pub fn sample_pair(curve: &ParamCurve, q: u32, n: u64, master: u64, index: u64) -> Result<Option<PairSample>> {
    let mut rng = sample_rng(master, Stream::Pairs, index);
    let prefix: Vec<u8> = (0..q as u64 + n).map(|_| rng.random_range(0..4u8)).collect();
    let mut points = Vec::with_capacity(2);
    for side in 0..2 {
        let tail = sample_rng(master ^ (side + 1), Stream::Omega, index);
        let omega = OmegaState::with_prefix(&prefix, tail)?;
        let (lo, hi) = jn_interval(&omega, curve, n as usize)?;
        let x = lo + (hi - lo) * rng.random_range(1e-6..1.0 - 1e-6);
        points.push(SkewPoint::new(omega, x)?);
    }
    let dx_before = (points[0].x - points[1].x).abs();
    let mut logs = [0.0f64; 2];
    for (p, log) in points.iter_mut().zip(logs.iter_mut()) {
        for k in 1..=n {
            *log += p.step_log_deriv(curve);
            if (p.x > 0.5) != (k == n) {
                return Ok(None);
            }
        }
    }
    let domega_after = window_gap(&points[0].omega, &points[1].omega);
    Ok(Some(PairSample {
        n,
        dx_before,
        domega_before: domega_after / 4f64.powi(n as i32),
        dx_after: (points[0].x - points[1].x).abs(),
        domega_after,
        log_jacobian_gap: logs[0] - logs[1],
    }))
}

fn sample_pairs(curve: &ParamCurve, q: u32, count: u64, max_depth: u64, master: u64) -> Result<Vec<Option<PairSample>>> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_pair(curve, q, 1 + i % max_depth, master, i))
        .collect()
}

/// `d′(T^n a, T^n b) ≥ λ d′(a, b)` on sampled pairs of a common `A_{s,n}`.
pub fn expansion_check(
    curve: &ParamCurve,
    consts: &GeometryConstants,
    count: u64,
    max_depth: u64,
    master: u64,
) -> Result<CheckReport> {
    let pairs = sample_pairs(curve, consts.q, count, max_depth, master)?;
    let mut worst = f64::INFINITY;
    let mut skipped = 0;
    let mut by_depth = vec![f64::INFINITY; max_depth as usize];
    for p in &pairs {
        let Some(p) = p else {
            skipped += 1;
            continue;
        };
        let before = consts.d_prime(p.dx_before, p.domega_before);
        if before == 0.0 {
            skipped += 1;
            continue;
        }
        let ratio = consts.d_prime(p.dx_after, p.domega_after) / before;
        worst = worst.min(ratio);
        let slot = &mut by_depth[p.n as usize - 1];
        *slot = slot.min(ratio);
    }
    let threshold = consts.lambda * (1.0 - 1e-9);
    let mut notes = vec![];
    if consts.lambda_clamped {
        notes.push(format!("lambda clamped to 1.9 from {}", consts.lambda_raw));
    }
    Ok(CheckReport {
        check: "expansion".into(),
        samples: count - skipped,
        skipped,
        statistic: worst,
        threshold,
        pass: worst >= threshold,
        notes,
        by_depth: by_depth.into_iter().enumerate().map(|(i, v)| (i as u64 + 1, v)).collect(),
    })
}

/// Sup of `|det DT^n(a)/det DT^n(b) − 1| / d′(T^n a, T^n b)` per depth.
/// Passes when the sup over the upper half of the depths is at most 1.5
/// times the sup over the lower half.
pub fn distortion_check(
    curve: &ParamCurve,
    consts: &GeometryConstants,
    count: u64,
    max_depth: u64,
    master: u64,
) -> Result<CheckReport> {
    let pairs = sample_pairs(curve, consts.q, count, max_depth, master ^ 0xD15)?;
    let mut skipped = 0;
    let mut by_depth = vec![0.0f64; max_depth as usize];
    for p in &pairs {
        let Some(p) = p else {
            skipped += 1;
            continue;
        };
        let after = consts.d_prime(p.dx_after, p.domega_after);
        if after == 0.0 {
            skipped += 1;
            continue;
        }
        let quotient = p.log_jacobian_gap.exp_m1().abs() / after;
        let slot = &mut by_depth[p.n as usize - 1];
        *slot = slot.max(quotient);
    }
    let half = (max_depth as usize).div_ceil(2);
    let low = by_depth[..half].iter().copied().fold(0.0, f64::max);
    let high = by_depth[half..].iter().copied().fold(0.0, f64::max);
    Ok(CheckReport {
        check: "distortion".into(),
        samples: count - skipped,
        skipped,
        statistic: high,
        threshold: 1.5 * low,
        pass: high.is_finite() && high <= 1.5 * low,
        notes: vec![format!("empirical distortion constant {}", low.max(high))],
        by_depth: by_depth.into_iter().enumerate().map(|(i, v)| (i as u64 + 1, v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::omega_from_seed;
    use crate::interval::t_alpha_right_inverse;

    fn curve() -> ParamCurve {
        ParamCurve::new(0.6, 0.1, 0.0).unwrap()
    }

    #[test]
    fn xn_slope_within_prop_bounds() {
        let r = xn_slope_check(&curve(), 20, 100, 10_000, 1).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(xn_slope_check(&curve(), 2, 100, 150, 1).is_err());
    }

    #[test]
    fn first_terms() {
        let w = omega_from_seed(3, 32).unwrap();
        let s = xn_sequence(&w, &curve(), 1).unwrap();
        assert_eq!(s.values, vec![1.0, 0.5]);
        assert_eq!(yn_value(&w, &curve(), 1).unwrap(), 1.0);
        assert_eq!(yn_value(&w, &curve(), 2).unwrap(), 0.75);
    }

    #[test]
    fn chain_strictly_decreasing() {
        let w = omega_from_seed(8, 32).unwrap();
        let s = xn_sequence(&w, &curve(), 2000).unwrap();
        assert!(s.values.windows(2).all(|p| p[1] < p[0]));
        assert_eq!(s.last(), xn_value(&w, &curve(), 2000).unwrap());
    }

    #[test]
    fn constant_alpha_matches_one_dimensional_pullback() {
        let flat = ParamCurve::new_unchecked(0.6, 0.0, 0.0).unwrap();
        let w = omega_from_seed(1, 32).unwrap();
        let s = xn_sequence(&w, &flat, 300).unwrap();
        // independent bisection of x(1 + (2x)^0.6) = y
        let mut x = 0.5;
        for k in 2..=300 {
            let (mut lo, mut hi) = (0.0f64, 0.5f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid * (1.0 + (2.0 * mid).powf(0.6)) < x {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            x = 0.5 * (lo + hi);
            assert!((s.values[k] - x).abs() <= 1e-13 * x, "k={k}");
        }
    }

    #[test]
    fn consecutive_pullbacks_agree() {
        // X_n(ω) is the left preimage of X_{n−1}(Fω)
        let c = curve();
        let w = omega_from_seed(21, 32).unwrap();
        let mut fw = w.clone();
        fw.advance();
        let x_n = xn_value(&w, &c, 40).unwrap();
        let x_prev = xn_value(&fw, &c, 39).unwrap();
        assert!((t_alpha(x_n, c.alpha(w.value())) - x_prev).abs() < 1e-14);
        let y = yn_value(&w, &c, 40).unwrap();
        assert_eq!(y, t_alpha_right_inverse(xn_value(&fw, &c, 39).unwrap()));
    }

    #[test]
    fn j_n_points_return_in_n_steps() {
        let c = curve();
        let opts = ReturnOptions::default();
        let mut rng = sample_rng(5, Stream::Fibre, 0);
        let mut hits = 0;
        for i in 0..10_000u64 {
            let n = 1 + (i % 60) as usize;
            let w = omega_from_seed(i, 32).unwrap();
            let (lo, hi) = jn_interval(&w, &c, n).unwrap();
            let x = lo + (hi - lo) * rng.random_range(1e-6..1.0 - 1e-6);
            let mut p = SkewPoint::new(w, x).unwrap();
            let rec = return_time(&mut p, &c, &|_, _| 1.0, &opts).unwrap();
            hits += (rec.phi == n as u64) as u32;
        }
        assert_eq!(hits, 10_000);
    }

    #[test]
    fn return_time_basics() {
        let c = curve();
        let opts = ReturnOptions::default();
        let mut p = SkewPoint::new(omega_from_seed(2, 32).unwrap(), 0.8).unwrap();
        let r = return_time(&mut p, &c, &|_, _| 1.0, &opts).unwrap();
        assert_eq!(r.phi, 1);
        assert_eq!(r.f_y, 1.0);
        let mut p = SkewPoint::new(omega_from_seed(2, 32).unwrap(), 0.3).unwrap();
        assert!(return_time(&mut p, &c, &|_, _| 1.0, &opts).is_err());
    }

    #[test]
    fn truncation_carries_partial_record() {
        let c = curve();
        let opts = ReturnOptions { cap: 5, q: 3 };
        // just above 1/2 lands next to the neutral curve and stays long
        let mut p = SkewPoint::new(omega_from_seed(2, 32).unwrap(), 0.5 + 1e-9).unwrap();
        match return_time(&mut p, &c, &|_, _| 1.0, &opts) {
            Err(Error::Truncated { partial }) => {
                assert_eq!(partial.phi, 5);
                assert_eq!(partial.f_y, 5.0);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn induced_orbit_telescopes() {
        let c = curve();
        let f = |w: f64, x: f64| x - 0.3 + 0.1 * w;
        let start = SkewPoint::new(omega_from_seed(6, 32).unwrap(), 0.9).unwrap();
        let records: Vec<_> = induced_orbit(start.clone(), &c, 500, &f, ReturnOptions::default())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let total: u64 = records.iter().map(|r| r.phi).sum();
        let sum_y: f64 = records.iter().map(|r| r.f_y).sum();
        let mut p = start;
        let acc = crate::interval::orbit(&mut p, &c, total, &f);
        assert!((acc.sum - sum_y).abs() <= 1e-9 * acc.sum.abs().max(1.0));
        assert!(p.in_y());
        assert!(records.iter().all(|r| r.max_abs >= r.f_y.abs() && r.label.n == r.phi));
        let none: Vec<_> =
            induced_orbit(p.clone(), &c, 0, &f, ReturnOptions::default()).unwrap().collect();
        assert!(none.is_empty());
    }

    #[test]
    fn labels_follow_the_shift() {
        // T^n maps A_{s,n} onto the q-cylinder of the last q digits of s
        let c = curve();
        let opts = ReturnOptions::default();
        let mut p = SkewPoint::new(omega_from_seed(13, 32).unwrap(), 0.7).unwrap();
        for _ in 0..20_000 {
            let r = return_time(&mut p, &c, &|_, _| 0.0, &opts).unwrap();
            if r.label.complete {
                let block = r.label.s & ((1 << (2 * opts.q)) - 1);
                assert_eq!(p.omega.leading(opts.q), block);
            }
        }
    }

    #[test]
    fn geometry_constants_invariants() {
        let g = GeometryConstants::compute(&curve()).unwrap();
        assert!(g.lambda > 1.0 && g.lambda < 2.0);
        assert!((g.a * g.d + g.lambda / 4.0 - 1.0).abs() < 1e-15);
        assert!(g.d * g.eps0 < g.min_i1);
        assert!(4f64.powi(-(g.q as i32)) < g.eps0 && 4f64.powi(1 - g.q as i32) >= g.eps0);
    }

    #[test]
    fn depth_one_pairs_expand_by_two() {
        let c = curve();
        let g = GeometryConstants::compute(&c).unwrap();
        for i in 0..200 {
            if let Some(p) = sample_pair(&c, g.q, 1, 77, i).unwrap() {
                let r = g.d_prime(p.dx_after, p.domega_after) / g.d_prime(p.dx_before, p.domega_before);
                assert!(r >= 2.0 * (1.0 - 1e-12));
                assert!(p.log_jacobian_gap.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn distortion_quotient_finite_as_points_merge() {
        // same ω, x₂ → x₁: |ratio − 1|/d′ approaches a finite limit
        let c = curve();
        let g = GeometryConstants::compute(&c).unwrap();
        let w = omega_from_seed(31, 32).unwrap();
        let n = 12;
        let (lo, hi) = jn_interval(&w, &c, n).unwrap();
        let x1 = 0.5 * (lo + hi);
        let run = |x: f64| {
            let mut p = SkewPoint::new(w.clone(), x).unwrap();
            let l: f64 = (0..n).map(|_| p.step_log_deriv(&c)).sum();
            (l, p.x)
        };
        let (l1, y1) = run(x1);
        let mut quotients = vec![];
        for k in 1..6 {
            let h = (hi - lo) * 0.1f64.powi(k);
            let (l2, y2) = run(x1 + h);
            quotients.push((l1 - l2).exp_m1().abs() / g.d_prime(y1 - y2, 0.0));
        }
        let last = quotients[quotients.len() - 1];
        let prev = quotients[quotients.len() - 2];
        assert!(last.is_finite() && ((last - prev) / last).abs() < 0.05, "{quotients:?}");
    }
}
