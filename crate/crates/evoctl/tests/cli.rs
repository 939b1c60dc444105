use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn evoctl(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_evoctl"))
        .args(args)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const VISCO: &str = r#"{
    "schema_version": "1",
    "grid": {"window": 32, "n": 256, "nu": 1},
    "system": {"kind": "viscoelastic", "visco": {
        "n_cells": 16, "rho": [1], "mtensor": [1], "nu": 1,
        "kernel": {"g0": [0, 0], "terms": [{"alpha": [1, 0], "beta": 2}]}
    }}
}"#;

const IDENTITY: &str = r#"{
    "schema_version": "1",
    "grid": {"window": 16, "n": 128, "nu": 1},
    "system": {"kind": "evolutionary", "law": {
        "radius": 1, "h0": 1, "h1": 0,
        "k": {"family": "constant", "k": {"rows": 1, "cols": 1, "data": [[1, 0]]}}
    }}
}"#;

fn pulse_csv(dir: &Path, dim: usize) -> std::path::PathBuf {
    let mut s = String::from("t");
    for d in 0..dim {
        s += &format!(",re_{d},im_{d}");
    }
    s.push('\n');
    for k in 0..128 {
        let t = -8.0 + k as f64 * 0.125;
        s += &format!("{t:?}");
        for d in 0..dim {
            let v = (-((t + 2.0 - d as f64) / 0.6f64).powi(2)).exp();
            s += &format!(",{v:?},0.0");
        }
        s.push('\n');
    }
    let path = dir.join(format!("f{dim}.csv"));
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn check_default_visco_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("visco.json");
    fs::write(&cfg, VISCO).unwrap();
    let (code, out) = evoctl(&["check", "--config", p(&cfg), "--samples", "100"]);
    assert_eq!(code, 0, "{out}");
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["seed"], 0);
    let cert = r["checks"].as_array().unwrap().iter().find(|c| c["suite"] == "certificate").unwrap();
    let nj = cert["details"]["norm_j"].as_f64().unwrap();
    assert!((nj - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!(cert["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn check_infeasible_law_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        IDENTITY.replace(
            r#""k": {"family": "constant", "k": {"rows": 1, "cols": 1, "data": [[1, 0]]}}"#,
            r#""k": {"family": "constant", "k": {"rows": 1, "cols": 1, "data": [[0.3, 0]]}},
               "m120": {"rows": 1, "cols": 1, "data": [[1, 0]]},
               "m122": {"rows": 1, "cols": 1, "data": [[0.3, 0]]}"#,
        ),
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let (code, text) = evoctl(&["check", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 1, "{text}");
    let r = read_json(&out);
    assert_eq!(r["passed"], false);
}

#[test]
fn malformed_json_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.json");
    fs::write(&cfg, "{ \"schema_version\": ").unwrap();
    assert_eq!(evoctl(&["check", "--config", p(&cfg)]).0, 2);
    fs::write(&cfg, VISCO.replace("\"n_cells\"", "\"typo\": 1, \"n_cells\"")).unwrap();
    assert_eq!(evoctl(&["check", "--config", p(&cfg)]).0, 2);
    assert_eq!(evoctl(&["frobnicate"]).0, 2);
}

#[test]
fn solve_identity_law_gives_the_antiderivative() {
    use evocore::weighted_time::{antiderivative, TimeSignal};
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.json");
    fs::write(&cfg, IDENTITY).unwrap();
    let f = pulse_csv(dir.path(), 1);
    let u = dir.path().join("u.csv");
    let (code, text) = evoctl(&["solve", "--config", p(&cfg), "--input", p(&f), "--out", p(&u)]);
    assert_eq!(code, 0, "{text}");
    let fs_ = TimeSignal::read_csv(fs::File::open(&f).unwrap(), 1.0).unwrap();
    let us = TimeSignal::read_csv(fs::File::open(&u).unwrap(), 1.0).unwrap();
    let want = antiderivative(&fs_);
    assert!(us.sub(&want).unwrap().norm() <= 1e-10 * want.norm());
    let r = read_json(&dir.path().join("report.json"));
    assert!(r["residual"].as_f64().unwrap() <= 1e-10);
    assert!(r["causality_defect"].as_f64().unwrap() <= 1e-6);

    let first = fs::read(&u).unwrap();
    assert_eq!(evoctl(&["solve", "--config", p(&cfg), "--input", p(&f), "--out", p(&u)]).0, 0);
    assert_eq!(fs::read(&u).unwrap(), first);
}

#[test]
fn solve_with_impulse_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.json");
    fs::write(&cfg, IDENTITY).unwrap();
    let f = pulse_csv(dir.path(), 1);
    let u = dir.path().join("u.csv");
    let (code, text) = evoctl(&[
        "solve", "--config", p(&cfg), "--input", p(&f), "--out", p(&u), "--impulse", "1.0,2.0",
    ]);
    assert_eq!(code, 0, "{text}");
    let missing = dir.path().join("nope.csv");
    assert_eq!(
        evoctl(&["solve", "--config", p(&cfg), "--input", p(&missing), "--out", p(&u)]).0,
        2
    );
    assert_eq!(
        evoctl(&["solve", "--config", p(&cfg), "--input", p(&f), "--out", p(&u), "--impulse", "x"]).0,
        2
    );
}

#[test]
fn ops_export_and_bdspace_report() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("q.bundle");
    assert_eq!(evoctl(&["ops", "--kind", "interval", "--cells", "16", "--out", p(&b)]).0, 0);
    let rep = dir.path().join("bd.json");
    let (code, text) = evoctl(&["bdspace", "--ops", p(&b), "--report", p(&rep)]);
    assert_eq!(code, 0, "{text}");
    let r = read_json(&rep);
    assert_eq!(r["dim_bd_g"], 2);
    assert_eq!(r["dtn"]["rows"], 2);
    assert!(r["hat"]["unitarity_defect"].as_f64().unwrap() <= 1e-10);

    let b2 = dir.path().join("g.bundle");
    assert_eq!(evoctl(&["ops", "--kind", "grid2d", "--cells", "4", "4", "--out", p(&b2)]).0, 0);
    assert_eq!(evoctl(&["bdspace", "--ops", p(&b2), "--report", p(&rep)]).0, 0);
    assert_eq!(evoctl(&["bdspace", "--ops", p(&dir.path().join("none")), "--report", p(&rep)]).0, 2);
}

#[test]
fn demo_visco_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("visco.json");
    fs::write(&cfg, VISCO).unwrap();
    let out = dir.path().join("run");
    let (code, text) = evoctl(&["demo", "visco", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 0, "{text}");
    for f in ["u.csv", "v.csv", "T.csv", "w.csv", "y.csv", "energy.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["consistent"], true);
    assert!(r["memory_effect"].as_f64().unwrap() > 1e-3);
    assert!(r["boundary_control_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn demo_visco_zero_control_gives_zero_fields() {
    use evocore::weighted_time::TimeSignal;
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("visco.json");
    fs::write(&cfg, VISCO).unwrap();
    let mut s = String::from("t,re_0,im_0,re_1,im_1\n");
    for k in 0..256 {
        s += &format!("{:?},0.0,0.0,0.0,0.0\n", -16.0 + k as f64 * 0.125);
    }
    let u = dir.path().join("u0.csv");
    fs::write(&u, s).unwrap();
    let out = dir.path().join("zero");
    let (code, text) = evoctl(&["demo", "visco", "--config", p(&cfg), "--control", p(&u), "--out", p(&out)]);
    assert_eq!(code, 0, "{text}");
    for f in ["v.csv", "T.csv", "y.csv"] {
        let sig = TimeSignal::read_csv(fs::File::open(out.join(f)).unwrap(), 1.0).unwrap();
        assert_eq!(sig.max_abs(), 0.0, "{f}");
    }
}
