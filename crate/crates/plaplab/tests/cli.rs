//! End-to-end tests of the command-line interface: artifacts, golden-value
//! checks, exit-status contract and byte-identical determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plaplab"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("plaplab_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const POISSON: &str = "
[domain]
kind = interval
a = 0.0
b = 1.0
n_cells = 256

[measure]
kind = lebesgue

[operator]
p = 2.0

[output]
prefix = run

[expect]
u_at = 0.5
u_value = 0.125
u_tol = 1e-4
";

#[test]
fn solve_roundtrip_with_expectation() {
    let dir = temp_dir("solve");
    let cfg = write_config(&dir, "run.cfg", POISSON);
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["run_solution.csv", "run_report.csv", "run_measure.csv", "run_mesh.txt"] {
        assert!(dir.join(artifact).exists(), "missing {artifact}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("u([0.5])"), "{stdout}");
}

#[test]
fn failed_expectation_exits_nonzero() {
    let dir = temp_dir("expect_fail");
    let cfg = write_config(&dir, "run.cfg", &POISSON.replace("u_value = 0.125", "u_value = 0.5"));
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expectation"));
}

#[test]
fn invalid_exponent_names_constraint() {
    let dir = temp_dir("bad_q");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 32
[operator]
p = 2.0
[problem]
kind = trace
q = 2.0
",
    );
    let out = bin()
        .args(["trace", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("0 < q < p"), "{err}");
}

#[test]
fn trace_reports_best_constant() {
    let dir = temp_dir("trace");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 256
[operator]
p = 2.0
[problem]
kind = trace
q = 1.0
[output]
prefix = tr
[expect]
c1 = 0.2887
c1_tol = 0.02
",
    );
    let out = bin()
        .args(["trace", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .arg("--plot")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("C1_hat"));
    assert!(dir.join("tr_trace.csv").exists());
    assert!(dir.join("tr_trace.svg").exists());
    assert!(dir.join("tr_maximizer.csv").exists());
}

#[test]
fn verify_subcommand_pass_and_fail_lines() {
    let dir = temp_dir("verify");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 128
[operator]
p = 2.0
[problem]
kind = verify
q = 1.0
theorems = thm11, thm51
[output]
prefix = ver
",
    );
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS thm11"), "{stdout}");
    assert!(stdout.contains("PASS thm51"), "{stdout}");
    let csv = fs::read_to_string(dir.join("ver_verify.csv")).unwrap();
    assert!(csv.starts_with("theorem,pass,detail"));
}

#[test]
fn potential_divergence_verdict() {
    let dir = temp_dir("potential");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 256
[measure]
kind = power_density
s = 2.0
[operator]
p = 2.0
[output]
prefix = pot
[expect]
verdict = diverging
",
    );
    let out = bin()
        .args(["potential", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stages = fs::read_to_string(dir.join("pot_stages.csv")).unwrap();
    assert!(stages.lines().count() >= 3);
}

#[test]
fn sweep_deterministic_and_parallel_consistent() {
    let dir = temp_dir("sweep");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 64
[operator]
p = 2.0
[problem]
restarts = 3
[output]
prefix = sw
[sweep]
t = 0.0
s = 1.0, 2.0
q = 1.0
refine = 2
",
    );
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let out_c = dir.join("c");
    for (out, workers) in [(&out_a, "1"), (&out_b, "1"), (&out_c, "3")] {
        let res = bin()
            .args(["sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--workers", workers])
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = fs::read(out_a.join("sw_sweep.csv")).unwrap();
    let b = fs::read(out_b.join("sw_sweep.csv")).unwrap();
    let c = fs::read(out_c.join("sw_sweep.csv")).unwrap();
    assert_eq!(a, b, "reruns must be byte-identical");
    assert_eq!(a, c, "worker count must not change the output");
}

#[test]
fn solve_rerun_byte_identical() {
    let dir = temp_dir("determinism");
    let cfg = write_config(&dir, "run.cfg", POISSON);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let res = bin()
            .args(["solve", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(res.status.success());
    }
    for artifact in ["run_solution.csv", "run_report.csv", "run_measure.csv", "run_mesh.txt"] {
        let a = fs::read(out_a.join(artifact)).unwrap();
        let b = fs::read(out_b.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between reruns");
    }
}

#[test]
fn capacity_and_wolff_golden_values() {
    let dir = temp_dir("capwolff");
    let cap_cfg = write_config(
        &dir,
        "cap.cfg",
        "
[domain]
kind = interval
n_cells = 512
[operator]
p = 2.0
[problem]
kind = capacity
k_lo = 0.25
k_hi = 0.75
[output]
prefix = cap
[expect]
value = 8.0
value_tol = 0.01
",
    );
    let out = bin()
        .args(["capacity", "--config"])
        .arg(&cap_cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let wolff_cfg = write_config(
        &dir,
        "wolff.cfg",
        "
[domain]
kind = interval
n_cells = 256
[measure]
kind = atoms
atoms = 0.0:1.0
[operator]
p = 2.0
[problem]
kind = wolff
radius = 1.0
points = 0.25
[output]
prefix = wolff
[expect]
value = 0.375
value_tol = 0.02
",
    );
    let out = bin()
        .args(["wolff", "--config"])
        .arg(&wolff_cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn singular_run_artifacts() {
    let dir = temp_dir("singular");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 256
[operator]
p = 2.0
[problem]
kind = singular
gamma = 1.0
[solver]
singular_k_max = 20
[output]
prefix = sing
[expect]
verdict = converged
",
    );
    let out = bin()
        .args(["singular", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("min barrier margin"), "{stdout}");
    assert!(dir.join("sing_stages.csv").exists());
}

#[test]
fn empty_sweep_grid_emits_header_only() {
    let dir = temp_dir("empty_sweep");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "
[domain]
kind = interval
n_cells = 32
[operator]
p = 2.0
[output]
prefix = sw
[sweep]
t = 0.0
s =
q = 1.0
",
    );
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("sw_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "expected header only: {csv}");
    assert!(csv.starts_with("t,s,q,p,"));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = bin()
        .args(["solve", "--config", "/nonexistent/path.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
