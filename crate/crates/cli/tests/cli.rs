use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skewprod(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewprod"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn stable_eval_writes_monotone_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = skewprod(&["stable", "eval", "--p", "1.6", "--scale", "1", "--beta", "1", "--grid", "-5:5:0.1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("stable_cdf.csv")).unwrap();
    let cdf: Vec<f64> = r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(cdf.len(), 101);
    assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn limit_auto_small_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let o = skewprod(
        &[
            "limit", "--regime", "auto", "--alpha-min", "0.4", "--epsilon", "0.05", "--n-list", "100,200", "--samples",
            "300", "--set", "burn_in=100", "--set", "centering_steps=10000",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(dir.path())["summary"]["regime"]["regime"], "CLT_SMALL_ALPHA");
}

#[test]
fn xn_reports_ratio_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = skewprod(
        &["xn", "--alpha-min", "0.6", "--epsilon", "0.1", "--n", "1000", "--n-ref", "100", "--samples", "50", "--seed", "1", "--set", "slope_orbits=0"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert!(s["summary"]["n"]["ratio"].as_f64().unwrap() > 0.0);
    let a = s["assertions"].as_array().unwrap();
    assert!(a.iter().any(|a| a["name"] == "c2_within_tolerance" && a["pass"].is_boolean()));
}

#[test]
fn summaries_identical_across_worker_counts() {
    let args = [
        "limit", "--alpha-min", "0.75", "--epsilon", "0.1", "--n-list", "100,400", "--samples", "400", "--seed", "7",
        "--set", "burn_in=200", "--set", "centering_steps=20000", "--set", "density_steps=20000",
    ];
    let mut outputs = vec![];
    for workers in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let mut full = args.to_vec();
        full.extend(["--workers", workers]);
        let o = skewprod(&full, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(dir.path().join("summary.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# stable oracle\np = 1.2\nscale = 2\ngrid = 0:1:0.5\n").unwrap();
    let out = dir.path().join("out");
    let o = skewprod(&["stable", "--config", cfg.to_str().unwrap(), "--p", "1.7"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["p"], "1.7");
    assert_eq!(m["config"]["scale"], "2");
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // alpha_max = 0.8 ≥ 3/2 · 0.4
    let o = skewprod(&["simulate", "--alpha-min", "0.4", "--epsilon", "0.2", "--steps", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = skewprod(
        &["simulate", "--alpha-min", "0.4", "--epsilon", "0.2", "--steps", "10", "--unsafe-params", "--set", "centering_steps=100"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "p = 1\np = 2\n").unwrap();
    let o = skewprod(&["stable", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = skewprod(&["stable"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blocking_failure_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["stable", "selfcheck", "--p", "1.5", "--draws", "2000", "--set", "ks_bound=0"];
    let o = skewprod(&args, dir.path());
    assert!(o.status.success());
    let mut blocking = args.to_vec();
    blocking.extend(["--blocking", "sampler_vs_cdf"]);
    let o = skewprod(&blocking, dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn integer_flags_accept_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let o = skewprod(&["stable", "selfcheck", "--p", "1.5", "--draws", "2^12"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(dir.path())["summary"]["draws"], 4096);
    let o = skewprod(&["stable", "selfcheck", "--draws", "1.5e3x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
