use std::path::Path;
use std::process::{Command, Output};

fn pinwheel(out: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pinwheel"));
    cmd.args(args).arg("--out").arg(out);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("PINWHEEL_")) {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL: &[(&str, &str)] = &[
    ("PINWHEEL_GRID__NR", "24"),
    ("PINWHEEL_GRID__NTHETA", "24"),
    ("PINWHEEL_GRID__RADIUS", "8"),
];

#[test]
fn parameter_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = pinwheel(
        dir.path(),
        &["groundstate"],
        &[("PINWHEEL_PROBLEM__P", "3"), ("PINWHEEL_PROBLEM__D", "3")],
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = pinwheel(dir.path(), &["orbit"], &[("PINWHEEL_PROBLEM__M", "5")]);
    assert_eq!(code(&o), 2);
    let o = pinwheel(dir.path(), &["ansatz-scan"], &[("PINWHEEL_PROBLEM__M", "4")]);
    assert_eq!(code(&o), 2);
    let o = pinwheel(dir.path(), &["solve"], &[("PINWHEEL_SOLVER__NOT_A_KEY", "1")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn one_dimensional_ground_energy_is_four_thirds() {
    let dir = tempfile::tempdir().unwrap();
    let o = pinwheel(dir.path(), &["groundstate"], &[("PINWHEEL_PROBLEM__D", "1")]);
    assert_eq!(code(&o), 0);
    let raw = std::fs::read_to_string(dir.path().join("groundstate.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
    let c = v["c_inf"].as_f64().unwrap();
    assert!((c - 4.0 / 3.0).abs() < 1e-4, "c_inf = {c}");
    assert!(dir.path().join("profile.txt").exists());
}

#[test]
fn config_is_echoed_with_overrides_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("in.toml");
    std::fs::write(&cfg, "[orbit]\nn_dim = 5\n").unwrap();
    let out = dir.path().join("run");
    let o = pinwheel(
        &out,
        &["orbit", "--config", cfg.to_str().unwrap(), "--seed", "42"],
        &[("PINWHEEL_ORBIT__RADIUS", "2.5")],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echo: toml::Table = std::fs::read_to_string(out.join("config.toml")).unwrap().parse().unwrap();
    assert_eq!(echo["seed"].as_integer(), Some(42));
    assert_eq!(echo["orbit"]["n_dim"].as_integer(), Some(5));
    assert_eq!(echo["orbit"]["radius"].as_float(), Some(2.5));
    let rows = std::fs::read_to_string(out.join("orbit.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("component,index,x0,x1,x2,x3,x4"));
    assert_eq!(rows.lines().count(), 1 + 2 * 6);
}

#[test]
fn solve_reruns_are_bit_identical_and_formats_differ_only_in_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&pinwheel(&a, &["solve"], SMALL)), 0);
    assert_eq!(code(&pinwheel(&b, &["solve", "--format", "binary"], SMALL)), 0);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a.join("diagnostics.csv")), read(&b.join("diagnostics.csv")));
    assert_eq!(read(&a.join("summary.json")), read(&b.join("summary.json")));
    let text = read(&a.join("u1.txt"));
    let bin = read(&b.join("u1.bin"));
    let (ht, vt) = pinwheel::io::read_field(&mut text.as_slice(), pinwheel::io::FieldFormat::Text).unwrap();
    let (hb, vb) = pinwheel::io::read_field(&mut bin.as_slice(), pinwheel::io::FieldFormat::Binary).unwrap();
    assert_eq!((ht, vt), (hb, vb));
    let c = pinwheel(&a, &["solve"], SMALL);
    assert_eq!(code(&c), 0);
    assert_eq!(read(&a.join("diagnostics.csv")), read(&b.join("diagnostics.csv")));
}

#[test]
fn continuation_writes_one_row_per_beta_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = SMALL.to_vec();
    env.push(("PINWHEEL_SCHEDULE__BETAS", "[-1.0, -4.0]"));
    let o = pinwheel(dir.path(), &["continuate"], &env);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(dir.path().join("continuation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(dir.path().join("steps/01_u2.txt").exists());
    let r = pinwheel(dir.path(), &["report"], &[]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("energies_monotone_in_beta = true"), "{text}");
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn report_without_a_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pinwheel(dir.path(), &["report"], &[])), 2);
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = SMALL.to_vec();
    env.push(("PINWHEEL_SOLVER__MAX_ITERS", "2"));
    let o = pinwheel(dir.path(), &["solve"], &env);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("diagnostics.csv").exists());
}
