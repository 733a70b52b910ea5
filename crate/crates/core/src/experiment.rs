//! Experiment runners behind the command-line subcommands.
//!
//! Every runner reads a resolved [`Config`], is deterministic given its
//! `seed`, and returns an [`Outcome`]: a JSON summary, numeric tables and
//! named assertions. Exact identities default to blocking, asymptotic trend
//! checks to advisory; the `blocking` and `advisory` keys override this per
//! assertion name.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::circle::{OmegaState, ParamCurve};
use crate::config::{parse_list, Config};
use crate::decorrelation::{
    birkhoff_norms, builtin_base_observable, correlation_exact, correlation_mc, decay_fit, dyadic, Fourier,
};
use crate::error::{Error, Result};
use crate::interval::{orbit, t_alpha, t_alpha_left_inverse, SkewPoint};
use crate::limit::{
    builtin_observable, cf_distance, classify_regime, default_t_grid, excursion_chains, hypothesis_suite,
    induced_reduction_check, ks_distance, normalizer, variance_from_sums, birkhoff_sums, CenteringBudget, Regime,
    RegimeSpec, DEFAULT_T_MAX,
};
use crate::markov::{
    distortion_check, expansion_check, jn_interval, return_time, xn_slope_check, CheckReport, GeometryConstants,
    ReturnOptions,
};
use crate::measure::{
    constant_a, constant_a_two_sided, estimate_density, slice_integral, tail_fit, transport_check,
    xn_asymptotic_constant, DensityEstimate, XBinning, DEFAULT_BURN_IN,
};
use crate::numerics::normal_cdf;
use crate::rng::{named_seed, sample_rng, Stream};
use crate::stable::{stable_cdf, stable_cf, stable_pdf, stable_sample, theorem_params, CdfTable, StableLaw};

pub const EXPERIMENTS: [&str; 8] = ["simulate", "xn", "tail", "density", "limit", "stable", "decorr", "check"];

/// A numeric table, written as CSV by the front end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub blocking: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub experiment: String,
    pub summary: Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
}

impl Outcome {
    pub fn blocking_failures(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| a.blocking && !a.pass).collect()
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    /// Summary with the assertions attached, as written to `summary.json`.
    pub fn summary_json(&self) -> Value {
        json!({
            "experiment": self.experiment,
            "summary": self.summary,
            "assertions": self.assertions,
        })
    }
}

struct Run<'a> {
    config: &'a Config,
    seed: u64,
    blocking: Vec<String>,
    advisory: Vec<String>,
    assertions: Vec<Assertion>,
    tables: Vec<Table>,
}

impl<'a> Run<'a> {
    fn new(config: &'a Config) -> Result<Self> {
        let names = |key: &str| -> Result<Vec<String>> {
            Ok(config.str(key).map(|v| parse_list(v, |s| Ok(s.to_string()))).transpose()?.unwrap_or_default())
        };
        Ok(Run {
            config,
            seed: config.u64_or("seed", 1)?,
            blocking: names("blocking")?,
            advisory: names("advisory")?,
            assertions: vec![],
            tables: vec![],
        })
    }

    fn curve(&self) -> Result<ParamCurve> {
        let am = self.config.f64_or("alpha_min", 0.6)?;
        let eps = self.config.f64_or("epsilon", 0.1)?;
        let x0 = self.config.f64_or("x0", 0.0)?;
        if self.config.bool_or("unsafe_params", false)? {
            ParamCurve::new_unchecked(am, eps, x0)
        } else {
            ParamCurve::new(am, eps, x0)
        }
    }

    fn seed_for(&self, label: &str) -> u64 {
        named_seed(self.seed, label)
    }

    fn assert(&mut self, name: &str, pass: bool, blocking_default: bool, detail: String) {
        let blocking = if self.blocking.iter().any(|n| n == name) {
            true
        } else if self.advisory.iter().any(|n| n == name) {
            false
        } else {
            blocking_default
        };
        self.assertions.push(Assertion { name: name.into(), pass, blocking, detail });
    }

    fn check(&mut self, report: &CheckReport, blocking_default: bool) {
        let detail = format!("statistic {} threshold {}", report.statistic, report.threshold);
        self.assert(&report.check, report.pass, blocking_default, detail);
    }

    fn finish(self, experiment: &str, summary: Value) -> Outcome {
        Outcome { experiment: experiment.into(), summary, tables: self.tables, assertions: self.assertions }
    }

    fn centering(&self) -> Result<CenteringBudget> {
        let d = CenteringBudget::default();
        Ok(CenteringBudget {
            orbits: self.config.u64_or("centering_orbits", d.orbits)?,
            steps: self.config.u64_or("centering_steps", d.steps)?,
            burn_in: self.config.u64_or("burn_in", d.burn_in)?,
        })
    }

    fn density(&self, curve: &ParamCurve) -> Result<DensityEstimate> {
        let xbins = XBinning::new(self.config.u64_or("x_bins", 512)? as u32, 1.0 / 16.0, 1.05, 1e-9)?;
        Ok(estimate_density(
            curve,
            self.config.u64_or("density_orbits", 64)?,
            self.config.u64_or("density_steps", 1_500_000)?,
            self.config.u64_or("burn_in", DEFAULT_BURN_IN)?,
            self.seed_for("density"),
            &xbins,
        ))
    }
}

/// Dispatch on the experiment name.
pub fn run(experiment: &str, config: &Config) -> Result<Outcome> {
    match experiment {
        "simulate" => run_simulate(config),
        "xn" => run_xn(config),
        "tail" => run_tail(config),
        "density" => run_density(config),
        "limit" => run_limit(config),
        "stable" => run_stable(config),
        "decorr" => run_decorr(config),
        "check" => run_check(config),
        other => Err(Error::Config(format!("unknown experiment {other:?}; expected one of {}", EXPERIMENTS.join(", ")))),
    }
}

pub fn run_simulate(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let curve = run.curve()?;
    let steps = config.u64_or("steps", 1_000_000)?;
    let every = config.u64_or("record_every", (steps / 1000).max(1))?.max(1);
    let omega = match config.omega("omega")? {
        Some(w) => w,
        None => OmegaState::from_rng(sample_rng(run.seed, Stream::Omega, 0)),
    };
    let x = match config.f64("x")? {
        Some(x) => x,
        None => sample_rng(run.seed, Stream::Fibre, 0).random::<f64>(),
    };
    let obs = builtin_observable(config.str("observable").unwrap_or("affine"), &curve, &run.centering()?, run.seed_for("centering"))?;
    let mut p = SkewPoint::new(omega, x)?;
    let mut table = Table::new("orbit", &["step", "omega", "x", "f"]);
    let mut acc = orbit(&mut p, &curve, 0, &|_, _| 0.0);
    let mut in_range = true;
    let mut k = 0;
    while k < steps {
        let chunk = every.min(steps - k);
        table.push(vec![k as f64, p.omega.value(), p.x, obs.eval(p.omega.value(), p.x)]);
        let part = orbit(&mut p, &curve, chunk, &|w, x| obs.eval(w, x));
        in_range &= (0.0..=1.0).contains(&p.x);
        acc.steps += part.steps;
        acc.sum += part.sum;
        acc.max_abs = acc.max_abs.max(part.max_abs);
        acc.time_in_y += part.time_in_y;
        k += chunk;
    }
    run.tables.push(table);
    run.assert("x_in_unit_interval", in_range, true, format!("final x {}", p.x));
    let summary = json!({
        "curve": curve,
        "steps": steps,
        "observable": obs.name,
        "observable_shift": obs.shift,
        "birkhoff_average": acc.sum / steps.max(1) as f64,
        "max_abs_partial_sum": acc.max_abs,
        "fraction_in_y": acc.time_in_y as f64 / steps.max(1) as f64,
        "final": {"omega": p.omega.value(), "x": p.x},
    });
    Ok(run.finish("simulate", summary))
}

pub fn run_xn(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let curve = run.curve()?;
    let n = config.u64_or("n", 100_000)? as usize;
    let n_ref = config.u64_or("n_ref", 1000)? as usize;
    let samples = config.u64_or("samples", 2000)? as usize;
    let tolerance = config.f64_or("tolerance", 0.15)?;
    let seed = run.seed_for("xn");
    let main = xn_asymptotic_constant(&curve, n, samples, seed)?;
    let reference = xn_asymptotic_constant(&curve, n_ref, samples, seed)?;
    let mut table = Table::new("xn_constant", &["n", "mean", "stderr", "c2", "ratio", "ratio_two_sided"]);
    for r in [&reference, &main] {
        table.push(vec![r.n as f64, r.mean, r.stderr, r.c2, r.ratio, r.ratio_two_sided]);
    }
    run.tables.push(table);
    let within = (main.ratio - 1.0).abs() <= tolerance;
    run.assert("c2_within_tolerance", within, false, format!("ratio {} tolerance {tolerance}", main.ratio));
    let closer = (main.mean - main.c2).abs() < (reference.mean - reference.c2).abs();
    run.assert("c2_trend", closer, false, format!("ratio {} at n={n_ref}, {} at n={n}", reference.ratio, main.ratio));
    let mut slope = Value::Null;
    let slope_orbits = config.u64_or("slope_orbits", 200)?;
    if slope_orbits > 0 {
        let hi = config.u64_or("slope_n_hi", n.min(100_000) as u64)? as usize;
        let lo = config.u64_or("slope_n_lo", (hi / 100).max(1) as u64)? as usize;
        let report = xn_slope_check(&curve, slope_orbits, lo, hi, run.seed_for("xn_slope"))?;
        run.check(&report, false);
        slope = serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?;
    }
    let summary = json!({"curve": curve, "n": main, "reference": reference, "slope": slope});
    Ok(run.finish("xn", summary))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn run_tail(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let curve = run.curve()?;
    let excursions = config.u64_or("excursions", 1_000_000)?;
    let fit = tail_fit(
        &curve,
        excursions,
        config.u64_or("n_lo", 100)?,
        config.u64_or("n_hi", 100_000)?,
        run.seed_for("tail"),
    )?;
    let mut table = Table::new("survival", &["n", "survival", "tail_count"]);
    for ((n, s), c) in fit.grid.iter().zip(&fit.survival).zip(&fit.tail_counts) {
        table.push(vec![*n as f64, *s, *c as f64]);
    }
    run.tables.push(table);
    let rel = (fit.exponent / fit.target_exponent - 1.0).abs();
    let exp_tol = config.f64_or("exponent_tolerance", 0.05)?;
    run.assert("tail_exponent", rel <= exp_tol, false, format!("exponent {} target {}", fit.exponent, fit.target_exponent));
    let mut amplitude = Value::Null;
    if config.bool_or("amplitude", true)? {
        let density = run.density(&curve)?;
        let slice = slice_integral(&density.grid, config.f64_or("slice_width", 1.0 / 128.0)?)?;
        let a = constant_a(&curve, slice.value)?;
        let a2 = constant_a_two_sided(&curve, slice.value)?;
        let amp_tol = config.f64_or("amplitude_tolerance", 0.2)?;
        let m_y = density.grid.mass_on_y();
        let kac = fit.m_y.recip() * m_y;
        run.assert(
            "tail_amplitude",
            (fit.amplitude / a - 1.0).abs() <= amp_tol,
            false,
            format!("A_hat {} A {} ratio {}", fit.amplitude, a, fit.amplitude / a),
        );
        run.assert("kac", (kac - 1.0).abs() <= 0.02, false, format!("E_Y(phi) m_hat(Y) = {kac}"));
        amplitude = json!({
            "slice": slice,
            "a": a,
            "a_two_sided": a2,
            "ratio": fit.amplitude / a,
            "ratio_two_sided": fit.amplitude / a2,
            "m_y_density": m_y,
            "kac_product": kac,
        });
    }
    let summary = json!({"curve": curve, "fit": fit, "amplitude": amplitude});
    Ok(run.finish("tail", summary))
}

pub fn run_density(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let curve = run.curve()?;
    let est = run.density(&curve)?;
    let g = &est.grid;
    let mut table = Table::new("density", &["omega_bin", "x_lo", "x_hi", "density"]);
    let edges = g.xbins.edges();
    for (i, j, d) in g.rows() {
        table.push(vec![i as f64, edges[j], edges[j + 1], d]);
    }
    run.tables.push(table);
    let slice = slice_integral(g, config.f64_or("slice_width", 1.0 / 128.0)?)?;
    let variation = g.relative_omega_variation(0.5, 1.0)?;
    let transport = transport_check(
        &curve,
        g,
        config.u64_or("transport_points", 64)? as u32,
        config.f64_or("transport_tolerance", 0.02)?,
        run.seed_for("transport"),
    );
    run.assert("transport", transport.pass, false, format!("coarse L1 {} tolerance {}", transport.l1_coarse, transport.tolerance));
    let marginal = g.omega_marginal();
    let marginal_dev = marginal.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    run.assert("omega_marginal_lebesgue", marginal_dev <= 0.05, false, format!("max deviation {marginal_dev}"));
    let summary = json!({
        "curve": curve,
        "total": g.total,
        "starved_cells": est.starved,
        "warnings": est.warnings,
        "m_y": g.mass_on_y(),
        "slice": slice,
        "a": constant_a(&curve, slice.value)?,
        "a_two_sided": constant_a_two_sided(&curve, slice.value)?,
        "omega_variation_on_y": variation,
        "omega_marginal_max_deviation": marginal_dev,
        "transport": transport,
    });
    Ok(run.finish("density", summary))
}

#[derive(Debug, Clone, Serialize)]
struct DistanceRow {
    n: u64,
    b_n: f64,
    samples: usize,
    ks: f64,
    cf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ks_two_sided: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cf_two_sided: Option<f64>,
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn stable_distances(law: &StableLaw, sorted: &[f64], grid: &[f64]) -> Result<(f64, f64)> {
    let table = CdfTable::new(law, 4001)?;
    let ks = ks_distance(sorted, |x| table.cdf(x))?;
    let cf = cf_distance(sorted, |t| stable_cf(law, t), grid)?;
    Ok((ks, cf))
}

pub fn run_limit(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let curve = run.curve()?;
    let obs_name = config.str("observable").unwrap_or("affine").to_string();
    let obs = builtin_observable(&obs_name, &curve, &run.centering()?, run.seed_for("centering"))?;
    let mut ns = config.u64_list("n_list")?.unwrap_or_else(|| vec![1000, 10_000, 100_000]);
    ns.sort_unstable();
    ns.dedup();
    let samples = config.u64_or("samples", 10_000)?;
    let burn_in = config.u64_or("burn_in", DEFAULT_BURN_IN)?;
    let t_grid = default_t_grid(config.f64_or("t_max", DEFAULT_T_MAX)?);

    let auto = classify_regime(&curve, &obs, None);
    let regime = match config.str("regime").unwrap_or("auto") {
        "auto" => auto.regime,
        other => Regime::parse(other)?,
    };
    let mut warnings = vec![];
    if regime != auto.regime {
        warnings.push(format!("regime forced to {regime:?}; classification gives {:?}", auto.regime));
    }
    if auto.ambiguous {
        warnings.push("alpha_min = 1/2 with c indistinguishable from 0".to_string());
    }

    let needs_a = matches!(regime, Regime::Stable | Regime::Nonstandard);
    let needs_density = (needs_a && config.f64("a")?.is_none()) || (config.bool_or("reduction", false)? && config.f64("m_y")?.is_none());
    let density = if needs_density { Some(run.density(&curve)?) } else { None };
    let slice = match &density {
        Some(d) if needs_a => Some(slice_integral(&d.grid, config.f64_or("slice_width", 1.0 / 128.0)?)?),
        _ => None,
    };
    let (a, a_two_sided) = match (config.f64("a")?, slice) {
        (Some(a), _) => (Some(a), None),
        (None, Some(s)) => (Some(constant_a(&curve, s.value)?), Some(constant_a_two_sided(&curve, s.value)?)),
        _ => (None, None),
    };
    let mut spec = RegimeSpec { regime, a, ..auto };

    let windows = config.u64_or("windows", 1)?;
    let sums = birkhoff_sums(&curve, &obs, &ns, samples, windows, burn_in, run.seed_for("ensemble"));
    let mut rows = vec![];
    let mut raw = Table::new("normalized_sums", &["n", "value"]);
    let mut variance = Value::Null;
    let mut target = Value::Null;
    let mut sigma2 = None;
    if regime.is_clt() {
        let report = variance_from_sums(&ns, &sums, config.u64_or("bootstrap", 200)? as u32, run.seed_for("bootstrap"))?;
        let drift_tol = config.f64_or("plateau_tolerance", 0.1)?;
        run.assert("variance_plateau", report.drift <= drift_tol, false, format!("drift {} tolerance {drift_tol}", report.drift));
        warnings.extend(report.warnings.iter().cloned());
        sigma2 = Some(report.sigma2);
        spec.sigma2 = sigma2;
        target = json!({"law": "normal", "sigma2": report.sigma2});
        variance = to_value(&report);
    }
    let stable_law = if regime == Regime::Stable {
        let a = spec.a.ok_or(Error::Config("stable regime needs A".into()))?;
        let law = theorem_params(&curve, a, obs.c)?;
        target = json!({"law": "stable", "p": law.p, "scale": law.scale, "beta": law.beta});
        Some(law)
    } else {
        None
    };
    let corrected = match (regime, a_two_sided) {
        (Regime::Stable, Some(a2)) => Some(theorem_params(&curve, a2, obs.c)?),
        _ => None,
    };
    if regime == Regime::Nonstandard {
        target = json!({"law": "normal", "sigma2": 1.0});
    }
    for (&n, s) in ns.iter().zip(&sums) {
        let b = normalizer(&spec, n)?;
        let mut v: Vec<f64> = s.iter().map(|x| x / b).collect();
        v.sort_by(f64::total_cmp);
        for &x in &v {
            raw.push(vec![n as f64, x]);
        }
        let row = match regime {
            Regime::Stable => {
                let (ks, cf) = stable_distances(stable_law.as_ref().expect("stable law"), &v, &t_grid)?;
                let (ks2, cf2) = match &corrected {
                    Some(law) => {
                        let (k, c) = stable_distances(law, &v, &t_grid)?;
                        (Some(k), Some(c))
                    }
                    None => (None, None),
                };
                DistanceRow { n, b_n: b, samples: v.len(), ks, cf, ks_two_sided: ks2, cf_two_sided: cf2 }
            }
            _ => {
                let s2 = if regime == Regime::Nonstandard { 1.0 } else { sigma2.unwrap_or(0.0) };
                let sd = s2.max(0.0).sqrt();
                let cdf = |x: f64| Ok(if sd > 0.0 { normal_cdf(x, sd) } else if x >= 0.0 { 1.0 } else { 0.0 });
                let ks = ks_distance(&v, cdf)?;
                let cf = cf_distance(&v, |t| num_complex::Complex64::new((-0.5 * s2 * t * t).exp(), 0.0), &t_grid)?;
                DistanceRow { n, b_n: b, samples: v.len(), ks, cf, ks_two_sided: None, cf_two_sided: None }
            }
        };
        rows.push(row);
    }
    let mut dist = Table::new("distances", &["n", "b_n", "ks", "cf"]);
    for r in &rows {
        dist.push(vec![r.n as f64, r.b_n, r.ks, r.cf]);
    }
    run.tables.push(dist);
    if config.bool_or("write_samples", true)? {
        run.tables.push(raw);
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
    let cf: Vec<f64> = rows.iter().map(|r| r.cf).collect();
    if rows.len() > 1 && !regime.is_clt() {
        run.assert("ks_decreasing", non_increasing(&ks), false, format!("{ks:?}"));
        run.assert("cf_decreasing", non_increasing(&cf), false, format!("{cf:?}"));
    }
    if let Some(last) = rows.last() {
        if regime == Regime::Stable {
            let bound = config.f64_or("cf_bound", 0.15)?;
            run.assert("cf_final", last.cf <= bound, false, format!("cf {} bound {bound}", last.cf));
        }
        if regime.is_clt() {
            let bound = config.f64_or("ks_bound", 0.05)?;
            run.assert("ks_normal", last.ks <= bound, false, format!("ks {} bound {bound} at n={}", last.ks, last.n));
        }
    }

    let mut induced = Value::Null;
    if config.bool_or("reduction", false)? {
        let m_y = match config.f64("m_y")? {
            Some(m) => m,
            None => density.as_ref().expect("density estimated").grid.mass_on_y(),
        };
        let n_red = config.u64_or("reduction_n", 10_000)?;
        let n_ref = config.u64_or("reduction_n_ref", 1000)?;
        let bound = config.f64_or("reduction_bound", 0.05)?;
        let red_samples = config.u64_or("reduction_samples", samples)?;
        let seed = run.seed_for("reduction");
        let main = induced_reduction_check(&curve, &obs, &spec, n_red, red_samples, m_y, bound, burn_in, seed)?;
        let reference = induced_reduction_check(&curve, &obs, &spec, n_ref, red_samples, m_y, bound, burn_in, seed)?;
        run.assert("reduction_ks", main.pass, false, format!("ks {} bound {bound}", main.ks));
        run.assert("reduction_trend", main.ks <= reference.ks, false, format!("ks {} at N={n_ref}, {} at N={n_red}", reference.ks, main.ks));
        let exc = config.u64_or("hypothesis_excursions", 1_000_000)?;
        let chains = 64;
        let per = exc.div_ceil(chains);
        let records = excursion_chains(&curve, &obs, chains, per, 1000, run.seed_for("hypothesis"))?;
        let grid = config.u64_list("hypothesis_n_grid")?.unwrap_or_else(|| vec![100, 300, 1000, 3000, 10_000]);
        let hyp = hypothesis_suite(&records, &spec, &grid, m_y, config.f64_or("birkhoff_tolerance", 0.05)?)?;
        for t in &hyp.maximal_tails {
            let name = format!("maximal_tail_eps_{}", t.epsilon);
            run.assert(&name, t.bounded, false, format!("sup n m(M >= eps B_n) = {}", t.sup));
        }
        run.assert("return_sum_tight", hyp.return_sum_tight, false, format!("{:?}", hyp.return_sum_q95));
        run.assert("induced_birkhoff", hyp.induced_birkhoff_pass, false, format!("S_N f_Y / N = {}", hyp.induced_birkhoff));
        run.assert("kac", hyp.kac_pass, false, format!("ratio {}", hyp.kac_ratio));
        induced = json!({"reduction": main, "reduction_reference": reference, "hypotheses": hyp});
    }

    let summary = json!({
        "curve": curve,
        "observable": {
            "name": obs.name,
            "shift": obs.shift,
            "shift_stderr": obs.shift_stderr,
            "c": obs.c,
            "c_threshold": obs.c_threshold(),
        },
        "regime": spec,
        "classified": auto.regime,
        "a_two_sided": a_two_sided,
        "slice": slice,
        "target": target,
        "corrected_target": corrected.map(|l| json!({"p": l.p, "scale": l.scale, "beta": l.beta})),
        "distances": rows,
        "variance": variance,
        "induced": induced,
        "warnings": warnings,
    });
    Ok(run.finish("limit", summary))
}

/// Samples from [`stable_sample`] against the inversion CDF.
pub fn stable_self_check(law: &StableLaw, draws: u64, master: u64) -> Result<f64> {
    let chunk = 10_000u64;
    let mut xs: Vec<f64> = (0..draws.div_ceil(chunk))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = sample_rng(master, Stream::Sampler, c);
            let len = chunk.min(draws - c * chunk);
            (0..len).map(move |_| stable_sample(law, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    let table = CdfTable::new(law, 4001)?;
    ks_distance(&xs, |x| table.cdf(x))
}

pub fn run_stable(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let law = StableLaw::new(
        config.f64_or("p", 1.5)?,
        config.f64_or("scale", 1.0)?,
        config.f64_or("beta", 0.0)?,
    )?;
    let action = config.str("action").unwrap_or("eval").to_string();
    let mut summary = json!({"p": law.p, "scale": law.scale, "beta": law.beta, "action": action});
    match action.as_str() {
        "eval" => {
            let grid = config.grid("grid")?.unwrap_or_else(|| (0..=100).map(|k| -5.0 + 0.1 * k as f64).collect());
            let mut table = Table::new("stable_cdf", &["x", "cdf", "pdf"]);
            let mut prev = f64::NEG_INFINITY;
            let mut monotone = true;
            for &x in &grid {
                let f = stable_cdf(&law, x)?;
                monotone &= f >= prev - 1e-12 && (0.0..=1.0).contains(&f);
                prev = f;
                table.push(vec![x, f, stable_pdf(&law, x)?]);
            }
            run.tables.push(table);
            run.assert("cdf_monotone", monotone, true, format!("{} grid points", grid.len()));
            summary["points"] = json!(grid.len());
        }
        "selfcheck" => {
            let draws = config.u64_or("draws", 1_000_000)?;
            let ks = stable_self_check(&law, draws, run.seed_for("stable"))?;
            let bound = config.f64_or("ks_bound", 0.01)?;
            run.assert("sampler_vs_cdf", ks <= bound, false, format!("ks {ks} bound {bound}"));
            summary["draws"] = json!(draws);
            summary["ks"] = json!(ks);
        }
        other => return Err(Error::Config(format!("unknown stable action {other:?}; expected eval or selfcheck"))),
    }
    Ok(run.finish("stable", summary))
}

pub fn run_decorr(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let chi = builtin_base_observable(config.str("observable").unwrap_or("sin"))?;
    let p = config.f64_or("p", 4.0)?;
    let ns = dyadic(config.u64_or("n_lo_exp", 4)? as u32, config.u64_or("n_hi_exp", 14)? as u32);
    let samples = config.u64_or("samples", 10_000)?;
    let norms = birkhoff_norms(&chi, &ns, p, samples, run.seed_for("decorr"))?;
    let mut table = Table::new("norms", &["n", "p", "norm", "ratio", "max_norm", "max_ratio"]);
    for r in &norms.rows {
        table.push(vec![r.n as f64, r.p, r.norm, r.ratio, r.max_norm, r.max_ratio]);
    }
    run.tables.push(table);
    run.assert("sum_norm_trend", norms.sum_trend_bounded, false, format!("k_hat {}", norms.k_hat));
    run.assert("max_norm_trend", norms.max_trend_bounded, false, String::new());
    run.assert("max_dominates_sum", norms.max_below_sum == 0, true, format!("{} violations", norms.max_below_sum));

    let sin = Fourier::trig(&[0.0], &[0.0, 1.0]);
    let zero_cov = correlation_exact(&sin, &sin, 1)?;
    run.assert("sin_one_step_zero", zero_cov.abs() <= 1e-12, true, format!("{zero_cov}"));
    let high = Fourier::trig(&[0.0], &[0.0, 0.0, 0.0, 0.0, 1.0]);
    let alias = correlation_exact(&high, &sin, 1)?;
    let mc = correlation_mc(
        |w| (8.0 * std::f64::consts::PI * w).sin(),
        |w| (2.0 * std::f64::consts::PI * w).sin(),
        1,
        config.u64_or("correlation_samples", 200_000)?,
        run.seed_for("correlation"),
    );
    run.assert("aliasing_exact", (alias - 0.5).abs() <= 1e-12, true, format!("{alias}"));
    run.assert("aliasing_monte_carlo", (mc.value - alias).abs() <= 3.0 * mc.stderr, false, format!("{} ± {}", mc.value, mc.stderr));
    let parabola = Fourier::parabola();
    let mut exact_ok = true;
    let mut corr = Table::new("parabola_covariance", &["N", "covariance", "closed_form"]);
    for n in 0..=8u32 {
        let v = correlation_exact(&parabola, &parabola, n)?;
        let closed = 1.0 / (180.0 * 16f64.powi(n as i32));
        exact_ok &= (v / closed - 1.0).abs() <= 1e-10;
        corr.push(vec![n as f64, v, closed]);
    }
    run.tables.push(corr);
    run.assert("parabola_closed_form", exact_ok, true, String::new());
    let fit = decay_fit(&parabola, &parabola, &(1..=20).collect::<Vec<_>>())?;
    let summary = json!({
        "observable": chi.name,
        "p": p,
        "samples": samples,
        "norms": norms,
        "sin_one_step": zero_cov,
        "aliasing": {"exact": alias, "monte_carlo": mc},
        "decay": {"delta": fit.delta, "constant": fit.constant},
    });
    Ok(run.finish("decorr", summary))
}

/// Endpoint identities, inverse roundtrips and exactness of the base shift.
pub fn exact_dynamics_suite(roundtrips: u64, shift_steps: u64, master: u64) -> Result<Vec<CheckReport>> {
    let report = |check: &str, samples, statistic, threshold, pass, notes: Vec<String>| CheckReport {
        check: check.into(),
        samples,
        skipped: 0,
        statistic,
        threshold,
        pass,
        notes,
        by_depth: vec![],
    };
    let mut out = vec![];
    let mut worst = 0.0f64;
    for alpha in [0.05, 0.3, 0.5, 0.6, 0.75, 0.99] {
        for (x, y) in [(0.0, 0.0), (0.5, 1.0), (0.75, 0.5), (1.0, 1.0)] {
            worst = worst.max((t_alpha(x, alpha) - y).abs());
        }
    }
    out.push(report("endpoints", 24, worst, 0.0, worst == 0.0, vec![]));

    let mut rng = ChaCha8Rng::seed_from_u64(named_seed(master, "roundtrip"));
    let mut worst = 0.0f64;
    for _ in 0..roundtrips {
        let y = 1.0 - rng.random::<f64>();
        let a = rng.random_range(0.01..1.0);
        let x = t_alpha_left_inverse(y, a)?;
        worst = worst.max((t_alpha(x, a) - y).abs());
    }
    out.push(report("inverse_roundtrip", roundtrips, worst, 1e-12, worst <= 1e-12, vec![]));

    // explicit digit list against the streamed state
    let mut rng = ChaCha8Rng::seed_from_u64(named_seed(master, "shift"));
    let digits: Vec<u8> = (0..shift_steps + 32).map(|_| rng.random_range(0..4u8)).collect();
    let mut w = OmegaState::with_prefix(&digits, sample_rng(master, Stream::Omega, 0))?;
    let mut window: u64 = digits[..32].iter().fold(0, |acc, &d| (acc << 2) | d as u64);
    let mut mismatches = 0u64;
    for k in 0..shift_steps as usize {
        mismatches += u64::from(w.window() != window);
        w.advance();
        window = (window << 2) | digits[k + 32] as u64;
    }
    mismatches += u64::from(w.window() != window);
    out.push(report("omega_shift", shift_steps, mismatches as f64, 0.0, mismatches == 0, vec![]));
    Ok(out)
}

/// Points drawn uniformly in `J_n(ω)` must return to `Y` after exactly `n` steps.
pub fn jn_return_check(curve: &ParamCurve, samples: u64, max_n: u64, master: u64) -> Result<CheckReport> {
    let opts = ReturnOptions::default();
    let misses: u64 = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let n = 1 + i % max_n;
            let w = OmegaState::from_rng(sample_rng(master, Stream::Omega, i));
            let (lo, hi) = jn_interval(&w, curve, n as usize)?;
            let u = sample_rng(master, Stream::Fibre, i).random_range(1e-6..1.0 - 1e-6);
            let mut p = SkewPoint::new(w, lo + (hi - lo) * u)?;
            Ok(u64::from(return_time(&mut p, curve, &|_, _| 0.0, &opts)?.phi != n))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(CheckReport {
        check: "jn_return".into(),
        samples,
        skipped: 0,
        statistic: misses as f64,
        threshold: 0.0,
        pass: misses == 0,
        notes: vec![],
        by_depth: vec![],
    })
}

pub fn run_check(config: &Config) -> Result<Outcome> {
    let mut run = Run::new(config)?;
    let curve = run.curve()?;
    let consts = GeometryConstants::compute(&curve)?;
    let mut reports = exact_dynamics_suite(
        config.u64_or("roundtrips", 10_000)?,
        config.u64_or("shift_steps", 1_000_000)?,
        run.seed_for("exact"),
    )?;
    let geometry_ok = (consts.a * consts.d + consts.lambda / 4.0 - 1.0).abs() < 1e-12
        && consts.d * consts.eps0 < consts.min_i1
        && 4f64.powi(-(consts.q as i32)) < consts.eps0
        && consts.lambda > 1.0
        && consts.lambda < 2.0;
    run.assert("geometry_constants", geometry_ok, true, format!("{consts:?}"));
    reports.push(jn_return_check(&curve, config.u64_or("jn_samples", 10_000)?, 60, run.seed_for("jn"))?);
    for r in &reports {
        run.check(r, true);
    }
    let depth = config.u64_or("max_depth", 50)?;
    let expansion = expansion_check(&curve, &consts, config.u64_or("pairs", 100_000)?, depth, run.seed_for("expansion"))?;
    let distortion = distortion_check(&curve, &consts, config.u64_or("distortion_pairs", 10_000)?, depth, run.seed_for("distortion"))?;
    run.check(&expansion, true);
    run.check(&distortion, false);
    let slope = xn_slope_check(
        &curve,
        config.u64_or("slope_orbits", 200)?,
        config.u64_or("slope_n_lo", 1000)? as usize,
        config.u64_or("slope_n_hi", 100_000)? as usize,
        run.seed_for("xn_slope"),
    )?;
    run.check(&slope, false);
    let mut depth_table = Table::new("by_depth", &["n", "expansion_min_ratio", "distortion_sup"]);
    for ((n, e), (_, d)) in expansion.by_depth.iter().zip(&distortion.by_depth) {
        depth_table.push(vec![*n as f64, *e, *d]);
    }
    run.tables.push(depth_table);
    reports.extend([expansion, distortion, slope]);
    let summary = json!({"curve": curve, "geometry": consts, "checks": reports});
    Ok(run.finish("check", summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        Config::parse(text).unwrap()
    }

    #[test]
    fn unknown_experiment() {
        assert!(matches!(run("nope", &Config::default()), Err(Error::Config(_))));
    }

    #[test]
    fn parameter_constraint_enforced() {
        let c = cfg("alpha_min = 0.4\nepsilon = 0.2\nsteps = 10");
        assert!(matches!(run_simulate(&c), Err(Error::InvalidParams(_))));
        let c = cfg("alpha_min = 0.4\nepsilon = 0.2\nsteps = 10\nunsafe_params = true\ncentering_orbits = 2\ncentering_steps = 100");
        assert!(run_simulate(&c).is_ok());
    }

    #[test]
    fn stable_eval_monotone() {
        let o = run_stable(&cfg("action = eval\np = 1.6\nscale = 1\nbeta = 1\ngrid = -5:5:0.1")).unwrap();
        assert!(o.blocking_failures().is_empty());
        let t = &o.tables[0];
        assert_eq!(t.rows.len(), 101);
        assert!(t.rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    }

    #[test]
    fn exact_suite_passes() {
        let r = exact_dynamics_suite(1000, 10_000, 3).unwrap();
        assert!(r.iter().all(|c| c.pass), "{r:?}");
    }

    #[test]
    fn small_limit_run_small_alpha() {
        let c = cfg("alpha_min = 0.4\nepsilon = 0.05\nn_list = 100, 200\nsamples = 200\nburn_in = 100\ncentering_orbits = 4\ncentering_steps = 10000");
        let o = run_limit(&c).unwrap();
        assert_eq!(o.summary["regime"]["regime"], "CLT_SMALL_ALPHA");
    }

    #[test]
    fn blocking_override() {
        let o = run_decorr(&cfg("samples = 100\nn_hi_exp = 8\ncorrelation_samples = 1000\nblocking = sum_norm_trend\nadvisory = sin_one_step_zero")).unwrap();
        assert!(o.assertion("sum_norm_trend").unwrap().blocking);
        assert!(!o.assertion("sin_one_step_zero").unwrap().blocking);
    }
}
