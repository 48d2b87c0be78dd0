//! The `nsrepro` binary end to end: exit codes, output files, manifest,
//! cache reuse and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nsrepro_core::snapshot::{load_snapshot, Snapshot};
use serde_json::Value;

/// Small, fast problem on 28 cells.
const SMALL: &str = r#"
[solver]
n = 28
m = 8
t_final = 0.1
dt = 0.002
epsilon = 0.3

[boundary]
kind = "bottom_bump"
amplitude = 0.1
"#;

fn nsrepro(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsrepro"))
        .args(args)
        .env("NSREPRO_CACHE_DIR", dir.join("cache"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let cfg = dir.join(format!("{sub}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}-{}", extra.join("")));
    let mut args = vec![
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (nsrepro(dir, &args), out)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn eigs_writes_manifest_and_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), "eigs", SMALL, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let m = manifest(&out);
    assert_eq!(m["experiment"], "eigs");
    assert_eq!(m["basis_cache_key"], "basis-square-n28-m8");
    assert_eq!(m["basis_cache_status"], "built");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(out.join("eigenvalues.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("j,lambda,residual"));
    assert_eq!(csv.lines().count(), 9);

    let (_, out) = run(dir.path(), "eigs", SMALL, &["--seed", "3"]);
    assert_eq!(manifest(&out)["basis_cache_status"], "hit");
    let (_, out) = run(dir.path(), "eigs", SMALL, &["--force-rebuild-basis"]);
    assert_eq!(manifest(&out)["basis_cache_status"], "forced");
}

#[test]
fn solve_writes_loadable_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[output]\nsnapshot_stride = 25\n");
    let (o, out) = run(dir.path(), "solve", &cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let energy = fs::read_to_string(out.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 52);
    match load_snapshot(&out.join("velocity_final.snap")).unwrap() {
        Snapshot::Velocity { t, .. } => assert!((t - 0.1).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        load_snapshot(&out.join("pressure_final.snap")).unwrap(),
        Snapshot::Scalar { .. }
    ));
    assert!(out.join("snapshots/velocity_000025.snap").exists());
    let listed: Vec<String> = serde_json::from_value(manifest(&out)["outputs"].clone()).unwrap();
    assert!(listed.contains(&"snapshots/velocity_000050.snap".to_string()));
    assert!(listed.contains(&"config.toml".to_string()));
}

#[test]
fn zero_data_verification_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace("kind = \"bottom_bump\"", "kind = \"zero\"");
    let (o, out) = run(dir.path(), "verify", &cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let m = manifest(&out);
    assert_eq!(m["passed"], true);
    assert_eq!(m["summary"]["violations"].as_array().unwrap().len(), 0);
    assert!(out.join("energy_check.csv").exists());
}

#[test]
fn bump_verification_and_stability_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(dir.path(), "verify", SMALL, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let (o, out) = run(dir.path(), "stability", SMALL, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert_eq!(manifest(&out)["summary"]["monotone"], true);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(
        dir.path(),
        "solve",
        &SMALL.replace("dt = 0.002", "dt = 0.003"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("solver.dt"), "{err}");

    let (o, _) = run(
        dir.path(),
        "solve",
        &format!("{SMALL}\n[extra]\nx = 1\n"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));

    let o = nsrepro(dir.path(), &["solve", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproductive_outside_budget_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[calibration]\nalpha = 1e-6\nk_force = 1e-6\nm_ball = 1.0\n");
    let (o, out) = run(dir.path(), "reproductive", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert!(m["error"].as_str().unwrap().contains("small-data regime"));
    assert_eq!(m["summary"]["budget"]["alpha_ok"], false);
}

#[test]
fn reproductive_converges_and_reports_history() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), "reproductive", SMALL, &["--pairs", "2"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let m = manifest(&out);
    assert_eq!(m["summary"]["converged"], true);
    assert!(m["summary"]["period_defect_l2"].as_f64().unwrap() <= 1e-9);
    assert!(out.join("reproductive_v0.snap").exists());
    assert!(out.join("contraction.csv").exists());

    // an unreachable tolerance with two iterations fails numerically
    let (o, out) = run(
        dir.path(),
        "reproductive",
        SMALL,
        &["--tol", "1e-300", "--max-iter", "2", "--pairs", "0"],
    );
    assert_eq!(o.status.code(), Some(3));
    let residuals = fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 3);
}

#[test]
fn identical_runs_produce_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[initial]\nkind = \"random\"\namplitude = 0.5\n");
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, cfg).unwrap();
    let solve = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = nsrepro(
            dir.path(),
            &[
                "solve",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
            ],
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        out
    };
    let (a, b, c) = (solve("a", "7"), solve("b", "7"), solve("c", "8"));
    for f in [
        "energy.csv",
        "velocity_final.snap",
        "pressure_final.snap",
        "config.toml",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["summary"], mb["summary"]);
    // a different seed draws a different initial state
    assert_ne!(
        fs::read(a.join("energy.csv")).unwrap(),
        fs::read(c.join("energy.csv")).unwrap()
    );
    assert_ne!(ma["config_hash"], manifest(&c)["config_hash"]);
}
