//! End-to-end tests of the command-line surface: determinism, round trips,
//! exit codes, and the CSV contracts.

use std::path::Path;
use std::process::{Command, Output};

use pqlab::instance::{InstanceFile, MapKind};
use pqlab::io::{parse_instance, read_instance, render_instance};
use pqlab::solver::{basic_estimate_ratio, solve_system, SolveOptions};

fn pqlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqlab"))
        .args(args)
        .output()
        .expect("binary must run")
}

fn pqlab_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary must run")
}

#[test]
fn gen_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pq");
    let b = dir.path().join("b.pq");
    for out in [&a, &b] {
        let res = pqlab(&[
            "gen", "--family", "random", "--points", "8", "--dim", "2", "--subspace-dim", "8",
            "--p", "3", "--seed", "7", "--out", out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must give identical bytes");

    // write(read(file)) is byte-identical.
    let parsed = read_instance(&a).unwrap();
    assert_eq!(render_instance(&parsed).into_bytes(), bytes_a);
}

#[test]
fn gen_grid_reports_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.pq");
    let res = pqlab(&[
        "gen", "--family", "grid-hodge", "--rows", "2", "--cols", "2", "--unit-weights",
        "--p", "2", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("points 4") && stdout.contains("dim_plus 3"), "{stdout}");
}

#[test]
fn gen_rejects_oversized_subspace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad.pq");
    let res = pqlab(&[
        "gen", "--family", "random", "--points", "4", "--dim", "1", "--subspace-dim", "9",
        "--p", "2", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("exceeds"), "{stderr}");
}

/// The worked linear two-point instance: a = (1, 0), b = (0, 1),
/// subspace span{(1, 1)}, p = 2, identity map.
fn linear_instance() -> InstanceFile {
    InstanceFile {
        schema_version: 1,
        weights: vec![1.0, 1.0],
        value_dim: 1,
        p: 2.0,
        basis: vec![vec![1.0, 1.0]],
        a: vec![1.0, 0.0],
        b: vec![0.0, 1.0],
        map_kind: MapKind::PPower,
        coefficient: None,
    }
}

#[test]
fn solve_writes_the_closed_form_solution() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("linear.pq");
    std::fs::write(&inst, render_instance(&linear_instance())).unwrap();
    let sol = dir.path().join("linear.sol");
    let res = pqlab(&["solve", inst.to_str().unwrap(), "--out", sol.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&sol).unwrap();
    assert!(text.contains("converged true"), "{text}");
    // alpha = (0, 0), beta = (1, -1).
    let alpha_line = text.lines().skip_while(|l| *l != "alpha").nth(1).unwrap();
    let beta_line = text.lines().skip_while(|l| *l != "beta").nth(1).unwrap();
    let alpha: Vec<f64> = alpha_line.split(' ').map(|t| t.parse().unwrap()).collect();
    let beta: Vec<f64> = beta_line.split(' ').map(|t| t.parse().unwrap()).collect();
    assert!(alpha.iter().all(|x| x.abs() < 1e-10), "{alpha:?}");
    assert!((beta[0] - 1.0).abs() < 1e-10 && (beta[1] + 1.0).abs() < 1e-10, "{beta:?}");
}

#[test]
fn solve_zero_instance_gives_zero_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = linear_instance();
    file.a = vec![0.0, 0.0];
    file.b = vec![0.0, 0.0];
    let inst = dir.path().join("zero.pq");
    std::fs::write(&inst, render_instance(&file)).unwrap();
    let res = pqlab(&["solve", inst.to_str().unwrap()]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("basic estimate      0.0000000000000000e0"), "{stdout}");
}

#[test]
fn corrupted_file_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("corrupt.pq");
    let text = render_instance(&linear_instance()).replace("weights", "weigths");
    std::fs::write(&inst, text).unwrap();
    let res = pqlab(&["solve", inst.to_str().unwrap()]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("parse error") && stderr.contains("line"), "{stderr}");

    let res = pqlab(&["solve", "/nonexistent/missing.pq"]);
    assert!(!res.status.success());
}

#[test]
fn project_reports_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("linear.pq");
    std::fs::write(&inst, render_instance(&linear_instance())).unwrap();
    let res = pqlab(&["project", inst.to_str().unwrap()]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("converged = true"), "{stdout}");
    assert!(stdout.contains("||alpha||_p"), "{stdout}");
}

#[test]
fn decompose_reports_energies() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("linear.pq");
    std::fs::write(&inst, render_instance(&linear_instance())).unwrap();
    let out = dir.path().join("dec.txt");
    let res = pqlab(&[
        "decompose", inst.to_str().unwrap(), "--threshold", "1.0",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("energy_total_lower"), "{text}");
    assert!(text.contains("additivity_defect"), "{text}");
}

#[test]
fn commutator_zero_eps_row_and_full_space() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("grid.pq");
    let res = pqlab(&[
        "gen", "--family", "grid-hodge", "--rows", "3", "--cols", "3",
        "--p", "2", "--seed", "2", "--out", inst.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let res = pqlab(&["commutator", inst.to_str().unwrap(), "--s", "2.0"]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    let zero_row: Vec<&str> = stdout
        .lines()
        .find(|l| l.starts_with("0.0000000000000000e0,"))
        .expect("eps = 0 row")
        .split(',')
        .collect();
    assert_eq!(zero_row[1], "0.0000000000000000e0", "defect at eps = 0");
    assert_eq!(zero_row[2], "0.0000000000000000e0", "ratio at eps = 0");

    // Full-space subspace: the projection is the identity, defects vanish.
    let full = dir.path().join("full.pq");
    let res = pqlab(&[
        "gen", "--family", "random", "--points", "5", "--dim", "1", "--subspace-dim", "5",
        "--p", "2", "--seed", "3", "--out", full.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let res = pqlab(&["commutator", full.to_str().unwrap(), "--sign", "plus"]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    for line in stdout.lines().skip(1) {
        let defect: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(defect.abs() < 1e-12, "{line}");
    }
}

#[test]
fn interpolate_tau_one_equals_max_basic_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let battery_dir = dir.path().join("inst");
    std::fs::create_dir(&battery_dir).unwrap();
    for (k, p) in [(0u64, 2.0), (1, 3.0), (2, 4.0)] {
        let out = battery_dir.join(format!("i{k}.pq"));
        let res = pqlab(&[
            "gen", "--family", "random", "--points", "6", "--dim", "1", "--subspace-dim", "3",
            "--p", &p.to_string(), "--seed", &k.to_string(), "--out", out.to_str().unwrap(),
        ]);
        assert!(res.status.success());
    }
    let csv_path = dir.path().join("sweep.csv");
    let res = pqlab(&[
        "interpolate", "--dir", battery_dir.to_str().unwrap(),
        "--tau-grid", "0.8,1.0,1.3", "--lambda", "0.75,1.5",
        "--out", csv_path.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let tau1: f64 = csv
        .lines()
        .find(|l| l.starts_with("strong,1.0000000000000000e0,"))
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();

    // Oracle: the max basic-estimate ratio over the same instances.
    let mut want = 0.0_f64;
    let mut entries: Vec<_> = std::fs::read_dir(&battery_dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let inst = read_instance(&path).unwrap().build("x").unwrap();
        let report = solve_system(&inst.subspace, inst.map(), &inst.f, &SolveOptions::default()).unwrap();
        want = want.max(basic_estimate_ratio(&report).unwrap());
    }
    assert_eq!(tau1.to_bits(), want.to_bits(), "tau = 1 row {tau1} vs basic {want}");

    // Determinism: a second run produces identical bytes.
    let csv2_path = dir.path().join("sweep2.csv");
    let res = pqlab(&[
        "interpolate", "--dir", battery_dir.to_str().unwrap(),
        "--tau-grid", "0.8,1.0,1.3", "--lambda", "0.75,1.5",
        "--out", csv2_path.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert_eq!(std::fs::read(&csv_path).unwrap(), std::fs::read(&csv2_path).unwrap());
}

#[test]
fn interpolate_zero_battery_gives_zero_constants() {
    let dir = tempfile::tempdir().unwrap();
    let battery_dir = dir.path().join("inst");
    std::fs::create_dir(&battery_dir).unwrap();
    let mut file = linear_instance();
    file.a = vec![0.0, 0.0];
    file.b = vec![0.0, 0.0];
    std::fs::write(battery_dir.join("zero.pq"), render_instance(&file)).unwrap();
    let res = pqlab(&["interpolate", "--dir", battery_dir.to_str().unwrap()]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    for line in stdout.lines().skip(1) {
        let c: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(c, 0.0, "{line}");
    }
}

#[test]
fn battery_small_run_passes_and_broken_map_fails() {
    let dir = tempfile::tempdir().unwrap();
    let res = pqlab_in(dir.path(), &["battery", "--seeds", "1", "--threads", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("result: PASS"), "{stdout}");

    let res = pqlab_in(dir.path(), &["battery", "--seeds", "1", "--threads", "2", "--broken-map"]);
    assert!(!res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("axiom-monotonicity"), "{stdout}");

    let res = pqlab_in(dir.path(), &["battery", "--seeds", "0"]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("no instances"), "{stderr}");
}

#[test]
fn battery_writes_report_files_and_honors_thread_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let res = Command::new(env!("CARGO_BIN_EXE_pqlab"))
        .env("PQLAB_THREADS", "1")
        .args([
            "battery", "--seeds", "1", "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .expect("binary must run");
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    for name in ["summary.txt", "interpolation.csv", "commutator.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let csv = std::fs::read_to_string(out.join("interpolation.csv")).unwrap();
    assert!(csv.starts_with("kind,exponent,constant,argmax_instance\n"));
    assert!(parse_instance(&render_instance(&linear_instance())).is_ok());
}
