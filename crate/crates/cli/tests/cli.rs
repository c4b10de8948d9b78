use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nar_cli::config::{load_config, write_config};
use nar_cli::output::{header, read_table};
use nar_cli::snapshot;

fn nar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nar"))
        .args(args)
        .output()
        .expect("spawn nar")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// The conventional scenario on an `n^2` grid, written into `dir`. Below
/// 64^2 the seed ellipses are barely resolved.
fn small_config(dir: &Path, n: usize, t_max: f64) -> PathBuf {
    let mut cfg = load_config(&scenarios().join("drosophila_conventional.toml")).unwrap();
    cfg.grid.nx = n;
    cfg.grid.ny = n;
    cfg.time.t_max = t_max;
    // The linear scheme is unstable at 1e-2 during the fast early growth.
    cfg.time.dt = 5e-3;
    cfg.output.cadence = 2;
    cfg.output.directory = Some(dir.join("out"));
    let path = dir.join("small.toml");
    std::fs::write(&path, write_config(&cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_every_bundled_scenario() {
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = nar(&["validate", "--config", s(&path)]);
            assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        }
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(nar(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(nar(&["validate", "--bogus"]).status.code(), Some(2));
    assert_eq!(nar(&[]).status.code(), Some(2));
}

#[test]
fn failures_exit_with_one_and_a_single_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let out = nar(&["validate", "--config", s(&empty)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: config parse error"), "{err}");

    let missing = dir.path().join("missing.toml");
    assert_eq!(nar(&["validate", "--config", s(&missing)]).status.code(), Some(1));

    let bad = dir.path().join("bad.nars");
    std::fs::write(&bad, b"NOPE").unwrap();
    let out = nar(&["render", "--snapshot", s(&bad), "--out", s(&dir.path().join("x.png"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_length_run_writes_initial_snapshot_and_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 32, 0.0);
    let out = nar(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("out");
    let csv = std::fs::read_to_string(od.join("diagnostics.csv")).unwrap();
    assert_eq!(csv, format!("{}\n", header(8).join(",")));
    let initial = snapshot::read(&od.join("snapshots/step_00000000.nars")).unwrap();
    assert_eq!((initial.nx, initial.ny, initial.t), (32, 32, 0.0));
    assert_eq!(initial.fields.len(), 10);
    assert!(od.join("final.nars").exists());
    assert!(od.join("config.toml").exists());
    assert!(od.join("images/step_00000000.png").exists());
}

#[test]
fn reruns_are_byte_identical_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 64, 0.02);
    let run = |name: &str| {
        let od = dir.path().join(name);
        let out = nar(&["run", "--config", s(&cfg), "--output-dir", s(&od), "--scheme", "B", "--tmax", "0.02"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        od
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["diagnostics.csv", "final.nars", "snapshots/step_00000002.nars"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let table = read_table(&a.join("diagnostics.csv")).unwrap();
    assert_eq!(table.column("step").unwrap(), vec![2.0, 4.0]);
    let t = table.column("t").unwrap();
    assert!((t[1] - 0.02).abs() <= 1e-15);
    // Scheme B carries no energy multiplier.
    assert!(table.column("R").unwrap().iter().all(|&r| r == 1.0));
    let resolved = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(resolved.contains("plan = \"B\""));
}

#[test]
fn render_writes_an_image_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 32, 0.0);
    assert_eq!(nar(&["run", "--config", s(&cfg)]).status.code(), Some(0));
    let snap = dir.path().join("out/final.nars");
    let ppm = dir.path().join("f.ppm");
    let out = nar(&["render", "--snapshot", s(&snap), "--out", s(&ppm)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&ppm).unwrap();
    let head = b"P6\n32 32\n255\n";
    assert!(bytes.starts_with(head));
    assert_eq!(bytes.len(), head.len() + 3 * 32 * 32);
    let png = dir.path().join("f.png");
    assert_eq!(nar(&["render", "--snapshot", s(&snap), "--out", s(&png)]).status.code(), Some(0));
    assert!(std::fs::read(&png).unwrap().starts_with(b"\x89PNG"));
}

#[test]
fn convergence_prints_and_saves_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 64, 0.0);
    let od = dir.path().join("conv");
    let out = nar(&[
        "convergence", "--config", s(&cfg), "--dts", "4e-3,2e-3", "--ref-dt", "5e-4", "--T", "0.008",
        "--output-dir", s(&od),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    let csv = std::fs::read_to_string(od.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("dt,error_phi,error_psi,order_phi,order_psi\n"));
    assert_eq!(csv.lines().count(), 3);
}
