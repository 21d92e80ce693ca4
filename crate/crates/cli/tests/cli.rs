use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMOKE: &str = r#"
task = "narma10"
washout = 50
train = 300
test = 200
trials = 1
evaluations = 20
reevaluations = 20
population_size = 10
seed = 3

[topology]
kind = "sparse"
n = 20
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esn-tune")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("smoke.toml");
    fs::write(&p, SMOKE).unwrap();
    p
}

fn tune(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["tune", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

/// Data rows of a CSV document: skips `#` comments and the header.
fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn metric(csv: &str, name: &str) -> (f64, f64) {
    let line = csv.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
    let cols: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    (cols[0], cols[1])
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["tune"]).status.code(), Some(1));
}

#[test]
fn missing_config_names_the_path() {
    let o = run(&["tune", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/exp.toml"));
}

#[test]
fn invalid_config_is_rejected_before_compute() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, SMOKE.replace("trials = 1", "trials = 0")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["tune", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("trials"));
    assert!(!out.exists());
}

#[test]
fn tune_smoke_writes_artifacts_deterministically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = tune(&cfg, &a, &[]);
    tune(&cfg, &b, &["--jobs", "3"]);

    let summaries = fs::read_to_string(a.join("summaries.jsonl")).unwrap();
    assert_eq!(summaries.lines().count(), 1);
    assert_eq!(summaries, fs::read_to_string(b.join("summaries.jsonl")).unwrap());
    for f in ["report.md", "trace_trial_000.csv", "network_trial_000.json", "config.toml"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(a.join("trace_trial_000.csv")).unwrap();
    assert_eq!(data_rows(&trace).len(), 2);
    assert!(stdout(&o).contains("sparse (n=20, feedback)"));
    assert_eq!(fs::read_to_string(&cfg).unwrap(), SMOKE);

    let c = dir.path().join("c");
    tune(&cfg, &c, &["--seed", "4"]);
    assert_ne!(summaries, fs::read_to_string(c.join("summaries.jsonl")).unwrap());
}

#[test]
fn evaluate_saved_network() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    tune(&cfg, &out, &[]);
    let net = out.join("network_trial_000.json");
    let net_before = fs::read_to_string(&net).unwrap();

    let eval = |repeats: &str, seed: &str| {
        let o = run(&[
            "evaluate", "--network", net.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
            "--repeats", repeats, "--seed", seed, "--fresh-reservoir",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let once = eval("1", "9");
    assert_eq!(once, eval("1", "9"));
    let (nmse, _) = metric(&once, "nmse");
    let (nrmse, _) = metric(&once, "nrmse");
    assert!((nrmse - nmse.sqrt()).abs() <= 1e-12 * nrmse);

    // Fresh re-evaluation agrees with the tuned trial's reported mean.
    let many = eval("20", "9");
    let (m, s) = metric(&many, "mse");
    let line = fs::read_to_string(out.join("summaries.jsonl")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    let (rm, rs) = (summary["mean_mse"].as_f64().unwrap(), summary["std_mse"].as_f64().unwrap());
    let se = (s * s / 20.0 + rs * rs / 20.0).sqrt();
    assert!((m - rm).abs() <= 2.0 * se, "{m} vs {rm} (se {se})");

    let fixed = run(&["evaluate", "--network", net.to_str().unwrap(), "--task", "narma10", "--washout", "50", "--train", "300", "--test", "200", "--repeats", "3"]);
    assert!(fixed.status.success(), "{}", stderr(&fixed));
    assert_eq!(fs::read_to_string(&net).unwrap(), net_before);
}

#[test]
fn evaluate_rejects_corrupt_network() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("net.json");
    fs::write(&p, "{\"topology\": 12").unwrap();
    let o = run(&["evaluate", "--network", p.to_str().unwrap(), "--task", "narma10"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn gen_bench_narma_rows_are_bounded() {
    let o = run(&["gen-bench", "narma10", "--length", "100", "--seed", "7"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r[1].abs() <= 1.0));
    assert_eq!(stdout(&o), stdout(&run(&["gen-bench", "narma10", "--length", "100", "--seed", "7"])));

    let mg = run(&["gen-bench", "mg", "--tau", "30", "--length", "50"]);
    assert!(stdout(&mg).contains("mg30"));
    assert_eq!(data_rows(&stdout(&mg)).len(), 50);
}

#[test]
fn dump_activity_shape() {
    let o = run(&["dump-activity", "--neurons", "50", "--steps", "200", "--topology", "ring"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r.len() == 50));
}

#[test]
fn scan_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let c = cfg.to_str().unwrap();

    let empty = run(&["scan", "--config", c, "--param", "sigma_res", "--grid", "", "--repeats", "2"]);
    assert_eq!(empty.status.code(), Some(0), "{}", stderr(&empty));
    assert!(data_rows(&stdout(&empty)).is_empty());

    let bad = run(&["scan", "--config", c, "--param", "rho", "--grid", "0.1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("omega_fb") && stderr(&bad).contains("washout"));

    let out = dir.path().join("scan.csv");
    let o = run(&[
        "scan", "--config", c, "--param", "washout", "--grid", "0,50", "--repeats", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], 50.0);
}

#[test]
fn report_aggregates_summaries() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    tune(&cfg, &a, &[]);
    let ring = dir.path().join("ring.toml");
    fs::write(&ring, SMOKE.replace("\"sparse\"", "\"ring\"")).unwrap();
    let b = dir.path().join("b");
    tune(&ring, &b, &[]);

    let o = run(&[
        "report",
        a.join("summaries.jsonl").to_str().unwrap(),
        b.join("summaries.jsonl").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("sparse (n=20, feedback)") && text.contains("ring (n=20, feedback)"));
    assert!(text.contains("Welch"));
}
