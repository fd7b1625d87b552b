//! End-to-end runs of the `pricing-lab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_pricing-lab");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pricing-lab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("PRICING_LAB_THREADS", t),
        None => cmd.env_remove("PRICING_LAB_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Digest line and `(q, payoff)` rows of a curve CSV.
fn read_curve(path: &Path) -> (String, Vec<(f64, f64)>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let digest = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_sha256="))
        .expect("digest line")
        .to_string();
    assert_eq!(lines.next(), Some("q,payoff"));
    let rows = lines
        .map(|l| {
            let (q, v) = l.split_once(',').unwrap();
            (q.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    (digest, rows)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn bad_config_exits_2_with_field_path() {
    let dir = scratch("bad");
    let cases = [
        (r#"{"schema": 1, "seed": 1, "objective": "revenue", "agents": [{"value": {"family": "uniform", "lo": 0, "hi": 1}, "utility": "linear", "copies": 0}]}"#, "agents[0].copies"),
        (r#"{"schema": 1, "seed": 1, "objective": "revenue", "agents": [{"value": {"family": "uniform", "lo": 0, "hi": 1}, "utility": "linear", "colour": 3}]}"#, "agents[0]"),
        (r#"{"schema": 1, "objective": "revenue", "agents": []}"#, "seed"),
        (r#"{"schema": 9, "seed": 1, "objective": "revenue", "agents": [{"value": {"family": "uniform", "lo": 0, "hi": 1}, "utility": "linear"}]}"#, "schema"),
    ];
    for (body, path) in cases {
        let cfg = write_config(&dir, body);
        let out = run(&["curve", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()], None);
        assert_eq!(out.status.code(), Some(2), "{body}: {}", stderr(&out));
        assert!(stderr(&out).contains(path), "{path} missing from {}", stderr(&out));
    }
    let out = run(&["curve", "--config", dir.join("absent.json").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn linear_curve_files_share_grid_and_digest() {
    let dir = scratch("curve");
    let cfg = configs().join("linear_uniform.json");
    let out = run(&["curve", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let digest = hex::encode(Sha256::digest(std::fs::read(&cfg).unwrap()));
    let (d1, raw) = read_curve(&dir.join("agent0_price_posting.csv"));
    let (d2, hull) = read_curve(&dir.join("agent0_hull.csv"));
    let (d3, exante) = read_curve(&dir.join("agent0_exante.csv"));
    for d in [&d1, &d2, &d3] {
        assert_eq!(d, &digest);
    }
    assert_eq!(hull.len(), exante.len());
    for ((qh, h), (qe, e)) in hull.iter().zip(&exante) {
        assert_eq!(qh, qe);
        assert!((h - e).abs() <= 1e-4, "q = {qh}: hull {h}, ex ante {e}");
    }
    assert!(raw.iter().all(|(q, _)| (0.0..=1.0).contains(q)));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("curve.json")).unwrap()).unwrap();
    assert_eq!(report["config_sha256"], digest);
}

#[test]
fn welfare_hull_matches_curve_for_linear_agent() {
    let dir = scratch("welfare");
    let cfg = configs().join("linear_uniform.json");
    let out = run(
        &["curve", "--config", cfg.to_str().unwrap(), "--objective", "welfare", "--out", dir.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // welfare curves are already concave, so ironing changes nothing
    let (_, raw) = read_curve(&dir.join("agent0_price_posting.csv"));
    let (_, hull) = read_curve(&dir.join("agent0_hull.csv"));
    for (q, h) in &hull {
        let nearest = raw
            .iter()
            .min_by(|a, b| (a.0 - q).abs().total_cmp(&(b.0 - q).abs()))
            .unwrap();
        if (nearest.0 - q).abs() < 1e-12 {
            assert!((nearest.1 - h).abs() < 1e-9, "q = {q}");
        }
    }
}

#[test]
fn closeness_within_bounds_exits_0() {
    let dir = scratch("closeness");
    let cfg = configs().join("uniform_revenue.json");
    let out = run(&["closeness", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("closeness.json")).unwrap()).unwrap();
    assert_eq!(report["violated"], false);
    let agent = &report["agents"][0];
    assert!(agent["zeta"].as_f64().unwrap() >= 1.0 - 1e-9);
    assert!(agent["zeta"].as_f64().unwrap() <= agent["bound"].as_f64().unwrap());
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let cfg = configs().join("iid_auction.json");
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let dir = scratch(&format!("sim{threads}"));
        let out = run(
            &[
                "simulate", "--config", cfg.to_str().unwrap(), "--mechanism", "mpm",
                "--samples", "4000", "--seed", "11", "--out", dir.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push(std::fs::read(dir.join("simulate_mpm.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert_eq!(report["seed"], 11);
    assert!(report["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn demos_run_and_validate_arguments() {
    let dir = scratch("demo");
    let out = run(&["demo", "unbounded-gap", "--m", "1000", "--out", dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("demo_unbounded_gap.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.last().unwrap()["m"], 1000);
    let revenue = report["price_posting_revenue"].as_f64().unwrap();
    assert!((revenue - 1.5645).abs() < 1e-3, "{revenue}");

    let out = run(&["demo", "unbounded-gap", "--m", "5"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains('m'));

    let out = run(&["demo", "anonymous-welfare", "--eps", "0.1", "--out", dir.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("demo_anonymous_welfare.json")).unwrap()).unwrap();
    assert!(report["ratio"].as_f64().unwrap() >= report["target_ratio"].as_f64().unwrap());
}
