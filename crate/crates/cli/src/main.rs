//! `skewprod`: run one experiment and write its artifacts to a directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use skewprod::config::Config;
use skewprod::experiment::{self, Outcome};

#[derive(Parser, Debug)]
#[command(name = "skewprod", version, about = "Experiments for the intermittent skew product T(w, x) = (4w, T_a(w)(x))")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Integer flags take the same forms as config values: `100000`, `1e5`, `2^17`.
fn count(s: &str) -> Result<u64, String> {
    skewprod::config::parse_u64(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct Common {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "skewprod-out")]
    out: PathBuf,
    #[arg(long, global = true, value_parser = count)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Skip the alpha_max < 3/2 alpha_min and alpha_max < 1 constraints.
    #[arg(long, global = true)]
    unsafe_params: bool,
    /// Extra `key=value` entries, applied after every other flag.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Assertion names to treat as blocking (comma separated).
    #[arg(long, global = true)]
    blocking: Option<String>,
    /// Assertion names to treat as advisory (comma separated).
    #[arg(long, global = true)]
    advisory: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterate one orbit and record it.
    Simulate {
        #[arg(long, value_parser = count)]
        steps: Option<u64>,
        /// Base point as a base-4 literal, e.g. `0.0123(01)`.
        #[arg(long)]
        omega: Option<String>,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        observable: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Asymptotic constant of X_n and the log-log slope of X_n.
    Xn {
        #[arg(long, value_parser = count)]
        n: Option<u64>,
        #[arg(long, value_parser = count)]
        n_ref: Option<u64>,
        #[arg(long, value_parser = count)]
        samples: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Return-time tail fit, amplitude and Kac check.
    Tail {
        #[arg(long, value_parser = count)]
        excursions: Option<u64>,
        #[arg(long, value_parser = count)]
        n_lo: Option<u64>,
        #[arg(long, value_parser = count)]
        n_hi: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Histogram estimate of the invariant density.
    Density {
        #[arg(long, value_parser = count)]
        orbits: Option<u64>,
        #[arg(long, value_parser = count)]
        steps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Birkhoff-sum limit laws in the regime of the observable.
    Limit {
        /// `auto` or one of clt_small_alpha, nonstandard, stable, clt_c_zero.
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        observable: Option<String>,
        /// Comma separated, e.g. `1e3,1e4,1e5`.
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long, value_parser = count)]
        samples: Option<u64>,
        /// Also run the induced-map reduction and hypothesis checks.
        #[arg(long)]
        reduction: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Stable-law oracle.
    Stable {
        #[arg(value_enum, default_value_t = StableAction::Eval)]
        action: StableAction,
        #[arg(long, allow_hyphen_values = true)]
        p: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        scale: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        /// `a:b:step` or a comma list.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, value_parser = count)]
        draws: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Birkhoff norms and correlations of the base map.
    Decorr {
        #[arg(long)]
        observable: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, value_parser = count)]
        samples: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact-dynamics and Markov-structure property suite.
    Check {
        #[arg(long, value_parser = count)]
        pairs: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StableAction {
    Eval,
    Selfcheck,
}

fn put<T: ToString>(cfg: &mut Config, key: &str, v: Option<T>) -> Result<()> {
    if let Some(v) = v {
        cfg.set(key, v.to_string())?;
    }
    Ok(())
}

fn resolve(command: Command) -> Result<(&'static str, Common, Config)> {
    let mut flags: Vec<(&str, Option<String>)> = vec![];
    let s = |v: Option<u64>| v.map(|v| v.to_string());
    let f = |v: Option<f64>| v.map(|v| v.to_string());
    let (name, common) = match command {
        Command::Simulate { steps, omega, x, observable, common } => {
            flags.extend([("steps", s(steps)), ("omega", omega), ("x", f(x)), ("observable", observable)]);
            ("simulate", common)
        }
        Command::Xn { n, n_ref, samples, common } => {
            flags.extend([("n", s(n)), ("n_ref", s(n_ref)), ("samples", s(samples))]);
            ("xn", common)
        }
        Command::Tail { excursions, n_lo, n_hi, common } => {
            flags.extend([("excursions", s(excursions)), ("n_lo", s(n_lo)), ("n_hi", s(n_hi))]);
            ("tail", common)
        }
        Command::Density { orbits, steps, common } => {
            flags.extend([("density_orbits", s(orbits)), ("density_steps", s(steps))]);
            ("density", common)
        }
        Command::Limit { regime, observable, n_list, samples, reduction, common } => {
            flags.extend([("regime", regime), ("observable", observable), ("n_list", n_list), ("samples", s(samples))]);
            if reduction {
                flags.push(("reduction", Some("true".into())));
            }
            ("limit", common)
        }
        Command::Stable { action, p, scale, beta, grid, draws, common } => {
            let action = match action {
                StableAction::Eval => "eval",
                StableAction::Selfcheck => "selfcheck",
            };
            flags.extend([
                ("action", Some(action.to_string())),
                ("p", f(p)),
                ("scale", f(scale)),
                ("beta", f(beta)),
                ("grid", grid),
                ("draws", s(draws)),
            ]);
            ("stable", common)
        }
        Command::Decorr { observable, p, samples, common } => {
            flags.extend([("observable", observable), ("p", f(p)), ("samples", s(samples))]);
            ("decorr", common)
        }
        Command::Check { pairs, common } => {
            flags.push(("pairs", s(pairs)));
            ("check", common)
        }
    };
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            Config::parse(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => Config::default(),
    };
    for (k, v) in flags {
        put(&mut cfg, k, v)?;
    }
    put(&mut cfg, "seed", common.seed)?;
    put(&mut cfg, "alpha_min", common.alpha_min)?;
    put(&mut cfg, "epsilon", common.epsilon)?;
    put(&mut cfg, "x0", common.x0)?;
    put(&mut cfg, "blocking", common.blocking.clone())?;
    put(&mut cfg, "advisory", common.advisory.clone())?;
    if common.unsafe_params {
        cfg.set("unsafe_params", "true")?;
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.set_default("seed", "1")?;
    Ok((name, common, cfg))
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    seed: &'a str,
    config: &'a std::collections::BTreeMap<String, String>,
    package: &'static str,
    version: &'static str,
    workers: Option<usize>,
}

fn write_outputs(dir: &Path, name: &str, common: &Common, cfg: &Config, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let manifest = Manifest {
        experiment: name,
        seed: cfg.str("seed").unwrap_or("1"),
        config: cfg.entries(),
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        workers: common.workers,
    };
    let write = |file: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(file);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    };
    write("manifest.json", serde_json::to_vec_pretty(&manifest)?)?;
    let mut summary = serde_json::to_vec_pretty(&outcome.summary_json())?;
    summary.push(b'\n');
    write("summary.json", summary)?;
    for table in &outcome.tables {
        let path = dir.join(format!("{}.csv", table.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when a blocking assertion failed.
fn execute(cli: Cli) -> Result<bool> {
    let (name, common, cfg) = resolve(cli.command)?;
    if let Some(w) = common.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global()?;
    }
    let outcome = experiment::run(name, &cfg)?;
    write_outputs(&common.out, name, &common, &cfg, &outcome)?;
    for a in &outcome.assertions {
        let status = if a.pass { "PASS" } else { "FAIL" };
        let kind = if a.blocking { "blocking" } else { "advisory" };
        println!("{status} {} ({kind}) {}", a.name, a.detail);
    }
    let failures = outcome.blocking_failures();
    println!("{name}: wrote {}; {} blocking failure(s)", common.out.display(), failures.len());
    Ok(failures.is_empty())
}
