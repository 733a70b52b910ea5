//! Invariant density, the slice integral `∫ h(ω, 1/2) dω`, return-time
//! tails and the `X_n` asymptotic constant.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circle::{OmegaState, ParamCurve};
use crate::error::{Error, Result};
use crate::interval::{t_alpha, SkewPoint};
use crate::markov::{return_time, xn_value, ReturnOptions};
use crate::numerics::{mean, variance, weighted_line_fit};
use crate::rng::{sample_rng, Stream};

/// Base-4 digits resolved by the ω axis of the grid (4^4 = 256 bins).
pub const OMEGA_DIGITS: u32 = 4;
pub const DEFAULT_BURN_IN: u64 = 10_000;

/// x-bin edges: uniform of width `1/uniform_bins` on `[split, 1]`, geometric
/// with the given ratio on `[floor, split]`, plus one bin `[0, floor]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XBinning {
    pub uniform_bins: u32,
    pub split: f64,
    pub ratio: f64,
    pub floor: f64,
    #[serde(skip)]
    edges: Vec<f64>,
    #[serde(skip)]
    geometric: usize,
}

impl XBinning {
    pub fn new(uniform_bins: u32, split: f64, ratio: f64, floor: f64) -> Result<Self> {
        let step = 1.0 / uniform_bins as f64;
        let aligned = ((1.0 - split) / step).round();
        if !(ratio > 1.0 && floor > 0.0 && floor < split && split < 0.5) || ((1.0 - split) / step - aligned).abs() > 1e-9
        {
            return Err(Error::InvalidParams(format!(
                "bad x binning: {uniform_bins} bins above {split}, ratio {ratio}, floor {floor}"
            )));
        }
        let geometric = ((split / floor).ln() / ratio.ln()).ceil() as usize;
        let mut edges = vec![0.0];
        for k in (0..=geometric).rev() {
            edges.push(split * ratio.powi(-(k as i32)));
        }
        for k in 1..=aligned as usize {
            edges.push(split + k as f64 * step);
        }
        *edges.last_mut().unwrap() = 1.0;
        Ok(XBinning { uniform_bins, split, ratio, floor: edges[1], edges, geometric })
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    #[inline]
    pub fn index(&self, x: f64) -> usize {
        let n = self.len();
        let guess = if x >= self.split {
            self.geometric + 1 + ((x - self.split) * self.uniform_bins as f64) as usize
        } else if x < self.edges[1] {
            0
        } else {
            1 + ((x / self.edges[1]).ln() / self.ratio.ln()) as usize
        };
        // one correction step absorbs rounding at edges
        let mut i = guess.min(n - 1);
        if x < self.edges[i] && i > 0 {
            i -= 1;
        } else if i + 1 < n && x >= self.edges[i + 1] {
            i += 1;
        }
        i
    }
}

impl Default for XBinning {
    fn default() -> Self {
        XBinning::new(512, 1.0 / 16.0, 1.05, 1e-9).expect("default binning is valid")
    }
}

/// Integer visit counts on 256 ω-bins times [`XBinning`] x-bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub xbins: XBinning,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl DensityGrid {
    pub const N_OMEGA: usize = 1 << (2 * OMEGA_DIGITS);

    pub fn empty(xbins: XBinning) -> Self {
        let cells = Self::N_OMEGA * xbins.len();
        DensityGrid { xbins, counts: vec![0; cells], total: 0 }
    }

    #[inline]
    pub fn record(&mut self, omega_bin: usize, x: f64) {
        let j = self.xbins.index(x);
        self.counts[omega_bin * self.xbins.len() + j] += 1;
        self.total += 1;
    }

    pub fn merge(mut self, other: &DensityGrid) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self
    }

    pub fn n_x(&self) -> usize {
        self.xbins.len()
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_x() + j]
    }

    /// Normalised density on cell `(i, j)`.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        let e = self.xbins.edges();
        let area = (e[j + 1] - e[j]) / Self::N_OMEGA as f64;
        self.count(i, j) as f64 / (self.total as f64 * area)
    }

    /// Probability of the union of x-bins `[j0, j1)` over all ω.
    pub fn band_mass(&self, j0: usize, j1: usize) -> f64 {
        let n_x = self.n_x();
        let c: u64 = (0..Self::N_OMEGA).map(|i| self.counts[i * n_x + j0..i * n_x + j1].iter().sum::<u64>()).sum();
        c as f64 / self.total as f64
    }

    fn edge_index(&self, x: f64) -> Result<usize> {
        self.xbins
            .edges()
            .iter()
            .position(|&e| (e - x).abs() < 1e-12)
            .ok_or(Error::InvalidParams(format!("{x} is not an x-bin edge")))
    }

    /// `m(Y) = m(S¹ × (1/2, 1])`.
    pub fn mass_on_y(&self) -> f64 {
        let j = self.edge_index(0.5).expect("1/2 is an edge of every valid binning");
        self.band_mass(j, self.n_x())
    }

    /// Mass of each ω-bin times the number of bins; ≈ 1 everywhere since
    /// the ω-marginal of the invariant measure is Lebesgue.
    pub fn omega_marginal(&self) -> Vec<f64> {
        let n_x = self.n_x();
        (0..Self::N_OMEGA)
            .map(|i| {
                self.counts[i * n_x..(i + 1) * n_x].iter().sum::<u64>() as f64 * Self::N_OMEGA as f64 / self.total as f64
            })
            .collect()
    }

    /// Cumulative x-marginal, linear inside bins.
    pub fn x_cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let n_x = self.n_x();
        let mut cum = vec![0.0; n_x + 1];
        for j in 0..n_x {
            let c: u64 = (0..Self::N_OMEGA).map(|i| self.counts[i * n_x + j]).sum();
            cum[j + 1] = cum[j] + c as f64 / self.total as f64;
        }
        move |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            if x >= 1.0 {
                return 1.0;
            }
            let j = self.xbins.index(x);
            let e = self.xbins.edges();
            let t = (x - e[j]) / (e[j + 1] - e[j]);
            cum[j] + t * (cum[j + 1] - cum[j])
        }
    }

    /// Mean over ω-bins of `|ĥ(i+1, ·) − ĥ(i, ·)|` on the x-band `[x0, x1)`,
    /// relative to the mean density on the band.
    pub fn relative_omega_variation(&self, x0: f64, x1: f64) -> Result<f64> {
        let (j0, j1) = (self.edge_index(x0)?, self.edge_index(x1)?);
        let n_x = self.n_x();
        let band: Vec<f64> = (0..Self::N_OMEGA)
            .map(|i| self.counts[i * n_x + j0..i * n_x + j1].iter().sum::<u64>() as f64)
            .collect();
        let m = mean(&band);
        let tv: f64 = (0..Self::N_OMEGA).map(|i| (band[(i + 1) % Self::N_OMEGA] - band[i]).abs()).sum::<f64>();
        Ok(tv / Self::N_OMEGA as f64 / m)
    }

    /// Bins with fewer than `min_count` visits, as `(ω-bin, x-bin)`.
    pub fn starved_bins(&self, min_count: u64) -> Vec<(usize, usize)> {
        let n_x = self.n_x();
        (0..self.counts.len()).filter(|&k| self.counts[k] < min_count).map(|k| (k / n_x, k % n_x)).collect()
    }

    /// Cell probabilities (not densities).
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// `(ω-bin, x-bin, density)` rows for CSV export.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..Self::N_OMEGA).flat_map(move |i| (0..self.n_x()).map(move |j| (i, j, self.density(i, j))))
    }
}

#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub grid: DensityGrid,
    /// Cells below 10 visits; expected near `x = 0`.
    pub starved: usize,
    pub warnings: Vec<String>,
}

/// Lebesgue start followed by `burn_in` steps: approximate sampling of the
/// invariant measure.
pub fn sample_invariant(curve: &ParamCurve, master: u64, index: u64, burn_in: u64) -> SkewPoint {
    let omega = OmegaState::from_rng(sample_rng(master, Stream::Omega, index));
    let x = sample_rng(master, Stream::Fibre, index).random::<f64>();
    let mut p = SkewPoint { omega, x };
    for _ in 0..burn_in {
        p.step(curve);
    }
    p
}

/// Birkhoff histogram of `n_orbits` orbits of `n_steps` steps after burn-in.
pub fn estimate_density(
    curve: &ParamCurve,
    n_orbits: u64,
    n_steps: u64,
    burn_in: u64,
    master: u64,
    xbins: &XBinning,
) -> DensityEstimate {
    let grid = (0..n_orbits)
        .into_par_iter()
        .fold(
            || DensityGrid::empty(xbins.clone()),
            |mut g, k| {
                let mut p = sample_invariant(curve, master, k, burn_in);
                for _ in 0..n_steps {
                    g.record(p.omega.leading(OMEGA_DIGITS) as usize, p.x);
                    p.step(curve);
                }
                g
            },
        )
        .reduce(|| DensityGrid::empty(xbins.clone()), |a, b| a.merge(&b));
    let starved = grid.starved_bins(10).len();
    let mut warnings = vec![];
    if starved > 0 {
        let near_zero = grid.starved_bins(10).iter().filter(|(_, j)| xbins.edges()[*j] < 0.01).count();
        warnings.push(format!("{starved} cells with fewer than 10 visits ({near_zero} of them below x = 0.01)"));
    }
    DensityEstimate { grid, starved, warnings }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceEstimate {
    pub value: f64,
    /// `|S(w) − S(2w)|`, the size of the first-order correction removed.
    pub extrapolation_error: f64,
    pub stat_error: f64,
    pub width: f64,
}

/// `∫ h(ω, 1/2) dω` from strip averages `S(w)`, `S(2w)` above `x = 1/2`,
/// extrapolated linearly: `2 S(w) − S(2w)`.
pub fn slice_integral(grid: &DensityGrid, width: f64) -> Result<SliceEstimate> {
    let j0 = grid.edge_index(0.5)?;
    let j1 = grid.edge_index(0.5 + width)?;
    let j2 = grid.edge_index(0.5 + 2.0 * width)?;
    let hits: u64 = (0..DensityGrid::N_OMEGA).map(|i| grid.counts[i * grid.n_x() + j0..i * grid.n_x() + j1].iter().sum::<u64>()).sum();
    if hits < 100 {
        return Err(Error::Starved(format!("only {hits} visits in the slice strip")));
    }
    let hits = hits as f64;
    let narrow = grid.band_mass(j0, j1);
    let wide = grid.band_mass(j0, j2);
    let s1 = narrow / width;
    let s2 = wide / (2.0 * width);
    Ok(SliceEstimate {
        value: 2.0 * s1 - s2,
        extrapolation_error: (s1 - s2).abs(),
        stat_error: hits.sqrt() / grid.total as f64 / width,
        width,
    })
}

/// `α_min^{3/2} sqrt(π/(2α''(x₀)))`: the published Laplace constant times α_min^{3/2}.
fn laplace_core(curve: &ParamCurve) -> f64 {
    curve.alpha_min.powf(1.5) * (PI / (2.0 * curve.second_deriv())).sqrt()
}

/// `A = slice / (4 (α_min^{3/2} sqrt(π/(2α''(x₀))))^{1/α_min})`, as published.
pub fn constant_a(curve: &ParamCurve, slice: f64) -> Result<f64> {
    if !(slice > 0.0) {
        return Err(Error::Domain { what: "constant_a slice", value: slice });
    }
    Ok(slice / (4.0 * laplace_core(curve).powf(1.0 / curve.alpha_min)))
}

/// [`constant_a`] with the two-sided Laplace constant `sqrt(2π/α'')`,
/// i.e. divided by `2^{1/α_min}`.
pub fn constant_a_two_sided(curve: &ParamCurve, slice: f64) -> Result<f64> {
    Ok(constant_a(curve, slice)? / 2f64.powf(1.0 / curve.alpha_min))
}

/// `C₂ = (2^{α_min} α_min^{3/2} sqrt(π/(2α''(x₀))))^{−1/α_min}`, as published.
pub fn xn_constant_c2(curve: &ParamCurve) -> f64 {
    (2f64.powf(curve.alpha_min) * laplace_core(curve)).powf(-1.0 / curve.alpha_min)
}

pub fn xn_constant_c2_two_sided(curve: &ParamCurve) -> f64 {
    xn_constant_c2(curve) / 2f64.powf(1.0 / curve.alpha_min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XnConstant {
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub c2: f64,
    pub ratio: f64,
    pub c2_two_sided: f64,
    pub ratio_two_sided: f64,
}

/// Monte Carlo mean of `(n/sqrt(ln n))^{1/α_min} X_n(ω)` over Lebesgue ω.
pub fn xn_asymptotic_constant(curve: &ParamCurve, n: usize, samples: usize, master: u64) -> Result<XnConstant> {
    if n < 2 || samples < 2 {
        return Err(Error::InvalidParams("need n ≥ 2 and at least two samples".into()));
    }
    let scale = (n as f64 / (n as f64).ln().sqrt()).powf(1.0 / curve.alpha_min);
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let w = OmegaState::from_rng(sample_rng(master, Stream::Omega, i));
            xn_value(&w, curve, n).map(|x| x * scale)
        })
        .collect::<Result<_>>()?;
    let m = mean(&values);
    let stderr = (variance(&values) / samples as f64).sqrt();
    let c2 = xn_constant_c2(curve);
    let c2t = xn_constant_c2_two_sided(curve);
    Ok(XnConstant { n, samples, mean: m, stderr, c2, ratio: m / c2, c2_two_sided: c2t, ratio_two_sided: m / c2t })
}

/// Return times of `chains × per_chain` consecutive excursions, each chain
/// started from [`sample_invariant`] and run for `burn_excursions` further
/// excursions first. Also returns the sum of `f_Y` per excursion if asked.
pub fn excursion_sample(
    curve: &ParamCurve,
    chains: u64,
    per_chain: u64,
    burn_excursions: u64,
    master: u64,
) -> Result<Vec<u64>> {
    let opts = ReturnOptions::default();
    let one = |_: f64, _: f64| 0.0;
    let per: Vec<Vec<u64>> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>> {
            let mut p = sample_invariant(curve, master, c, 0);
            while !p.in_y() {
                p.step(curve);
            }
            for _ in 0..burn_excursions {
                return_time(&mut p, curve, &one, &opts)?;
            }
            (0..per_chain).map(|_| return_time(&mut p, curve, &one, &opts).map(|r| r.phi)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(per.concat())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub excursions: u64,
    /// `m(Y)` from the time fraction spent in `Y` (#excursions / Σφ).
    pub m_y: f64,
    pub n_lo: u64,
    pub n_hi: u64,
    pub grid: Vec<u64>,
    /// `m(φ_Y > n) = m(Y) P_Y(φ > n)` on the grid.
    pub survival: Vec<f64>,
    pub tail_counts: Vec<u64>,
    /// Free slope of `ln survival` against `ln(sqrt(ln n)/n)`.
    pub exponent: f64,
    pub target_exponent: f64,
    /// `Â` with the slope pinned to `1/α_min`.
    pub amplitude: f64,
    /// `e^{intercept}` of the free fit.
    pub amplitude_free: f64,
    pub residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Weighted fit of the return-time survival to `A (sqrt(ln n)/n)^{p}`.
pub fn tail_fit_from_phis(phis: &[u64], alpha_min: f64, n_lo: u64, n_hi: u64) -> Result<TailFit> {
    if phis.is_empty() {
        return Err(Error::Starved("no excursions".into()));
    }
    let mut sorted = phis.to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as u64;
    let m_y = total as f64 / sorted.iter().map(|&p| p as f64).sum::<f64>();
    let beyond = |n: u64| total - sorted.partition_point(|&p| p <= n) as u64;
    let mut warnings = vec![];
    let mut hi = n_hi;
    while beyond(hi) < 50 && hi > 2 * n_lo {
        hi /= 2;
    }
    if hi != n_hi {
        warnings.push(format!("fewer than 50 excursions beyond {n_hi}; fit range shrunk to [{n_lo}, {hi}]"));
    }
    let points = 40;
    let mut grid: Vec<u64> = (0..points)
        .map(|k| ((n_lo as f64) * (hi as f64 / n_lo as f64).powf(k as f64 / (points - 1) as f64)).round() as u64)
        .collect();
    grid.dedup();
    let tail_counts: Vec<u64> = grid.iter().map(|&n| beyond(n)).collect();
    if tail_counts.contains(&0) {
        return Err(Error::Starved(format!("empty tail inside the fit range [{n_lo}, {hi}]")));
    }
    let survival: Vec<f64> = tail_counts.iter().map(|&c| m_y * c as f64 / total as f64).collect();
    let xs: Vec<f64> = grid.iter().map(|&n| ((n as f64).ln().sqrt() / n as f64).ln()).collect();
    let ys: Vec<f64> = survival.iter().map(|s| s.ln()).collect();
    let ws: Vec<f64> = tail_counts.iter().map(|&c| c as f64).collect();
    let fit = weighted_line_fit(&xs, &ys, &ws).ok_or(Error::Starved("degenerate tail fit".into()))?;
    let p = 1.0 / alpha_min;
    let sw: f64 = ws.iter().sum();
    let log_a = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (y - p * x)).sum::<f64>() / sw;
    Ok(TailFit {
        excursions: total,
        m_y,
        n_lo,
        n_hi: hi,
        grid,
        survival,
        tail_counts,
        exponent: fit.slope,
        target_exponent: p,
        amplitude: log_a.exp(),
        amplitude_free: fit.intercept.exp(),
        residuals: fit.residuals,
        warnings,
    })
}

/// Sample `n_excursions` excursions (64 chains) and fit the tail.
pub fn tail_fit(curve: &ParamCurve, n_excursions: u64, n_lo: u64, n_hi: u64, master: u64) -> Result<TailFit> {
    let chains = 64;
    let phis = excursion_sample(curve, chains, n_excursions.div_ceil(chains), 1000, master)?;
    tail_fit_from_phis(&phis, curve.alpha_min, n_lo, n_hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportCheck {
    pub l1: f64,
    /// L¹ after merging cells into 16 ω-bins and x-blocks of 8 bins.
    pub l1_coarse: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Push each cell's mass one step forward with `per_cell` uniform points
/// and compare with the original cell masses.
pub fn transport_check(
    curve: &ParamCurve,
    grid: &DensityGrid,
    per_cell: u32,
    tolerance: f64,
    master: u64,
) -> TransportCheck {
    let n_x = grid.n_x();
    let edges = grid.xbins.edges().to_vec();
    let probs = grid.probabilities();
    let pushed: Vec<f64> = (0..DensityGrid::N_OMEGA)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; probs.len()];
            let prefix: Vec<u8> = (0..OMEGA_DIGITS).rev().map(|k| ((i >> (2 * k)) & 3) as u8).collect();
            let mut rng = sample_rng(master, Stream::Transport, i as u64);
            for j in 0..n_x {
                let mass = probs[i * n_x + j];
                if mass == 0.0 {
                    continue;
                }
                let share = mass / per_cell as f64;
                for _ in 0..per_cell {
                    let mut w = OmegaState::with_prefix(&prefix, sample_rng(master, Stream::Omega, rng.random()))
                        .expect("valid prefix");
                    let x = edges[j] + (edges[j + 1] - edges[j]) * rng.random::<f64>();
                    let y = t_alpha(x, curve.alpha(w.value()));
                    w.advance();
                    out[w.leading(OMEGA_DIGITS) as usize * n_x + grid.xbins.index(y)] += share;
                }
            }
            out
        })
        .reduce(|| vec![0.0; probs.len()], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        });
    let l1 = probs.iter().zip(&pushed).map(|(a, b)| (a - b).abs()).sum();
    let coarse = |v: &[f64]| {
        let cx = n_x.div_ceil(8);
        let mut c = vec![0.0; 16 * cx];
        for i in 0..DensityGrid::N_OMEGA {
            for j in 0..n_x {
                c[(i / 16) * cx + j / 8] += v[i * n_x + j];
            }
        }
        c
    };
    let l1_coarse = coarse(&probs).iter().zip(&coarse(&pushed)).map(|(a, b)| (a - b).abs()).sum();
    TransportCheck { l1, l1_coarse, tolerance, pass: l1_coarse <= tolerance }
}
