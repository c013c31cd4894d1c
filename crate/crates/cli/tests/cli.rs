use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iwatsuka::asymptotics::predicted_gap_flat;
use iwatsuka::FieldProfile;

const FLAT: &str = "kind = flat_contact\nb_minus = 0.5\nb_plus = 1\np = 1\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_iwatsuka"));
    c.env_remove("IWATSUKA_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Rows of a CSV as maps from header name to cell.
fn table(csv: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

#[test]
fn constant_bands_are_landau_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "kind = constant\nb0 = 2\nn_max = 3\n");
    let o = run(&["bands", "--config", cfg.to_str().unwrap(), "--k-grid", "linear:-4:4:5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = table(&stdout(&o));
    assert_eq!(rows.len(), 15);
    for r in rows {
        let n: f64 = r["n"].parse().unwrap();
        let e: f64 = r["E"].parse().unwrap();
        assert!((e - 2.0 * (2.0 * n - 1.0)).abs() < 1e-8, "{r:?}");
    }
    assert!(stderr(&o).contains("thresholds: 2, 6, 10"));
}

#[test]
fn missing_key_exits_two_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "kind = power_tail\nb_minus = 0.5\nM = 2\n");
    let o = run(&["bands", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("b_plus"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "unknown.cfg", &format!("{FLAT}colour = red\n"));
    let o = run(&["bands", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    let o = run(&["bands"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flat_default_grid_has_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.cfg", FLAT);
    let out = dir.path().join("bands.csv");
    let o = run(&["bands", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty() && stderr(&o).is_empty());
    let rows = table(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 11);
    let profile = FieldProfile::flat_contact(0.5, 1.0, 1, 1.0, 0.0).unwrap();
    let resolved: Vec<_> = rows.iter().filter(|r| !r["flags"].contains("unresolved")).collect();
    assert!(resolved.len() >= 8);
    for r in &resolved {
        assert!(!r["ratio"].is_empty());
    }
    let r = resolved[3];
    let k: f64 = r["k"].parse().unwrap();
    let predicted: f64 = r["predicted_gap"].parse().unwrap();
    let expected = predicted_gap_flat(&profile, k, 1).unwrap().predicted_gap;
    assert!((predicted / expected - 1.0).abs() < 1e-12);
}

#[test]
fn asym_power_tail_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "power.cfg",
        "kind = power_tail\nb_minus = 0.5\nb_plus = 1\nM = 2\n",
    );
    let o = run(&["asym", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("n,k,E,gap,mu,b_plus_mu,predicted_gap,heuristic_gap,ratio,flags\n"));
    let err = stderr(&o);
    let line = err.lines().find(|l| l.contains("log-log slope")).unwrap();
    let slope: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!((slope + 2.0).abs() < 0.1, "{line}");
}

#[test]
fn asym_flat_and_infinite_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.cfg", FLAT);
    let o = run(&["asym", "--config", cfg.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    let rows = table(&stdout(&o));
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| !r["flags"].contains("unresolved"))
        .map(|r| r["ratio"].parse().unwrap())
        .collect();
    assert!((ratios[ratios.len() - 1] - 1.0).abs() < (ratios[0] - 1.0).abs());
    for r in &rows {
        let mu: f64 = r["mu"].parse().unwrap();
        assert!(mu < 0.0);
    }

    let cfg = write_config(
        dir.path(),
        "inf.cfg",
        "kind = infinite_contact\nb_minus = 0.5\nb_plus = 1\n",
    );
    let o = run(&["asym", "--config", cfg.to_str().unwrap(), "--k-grid", "linear:1.5:5:15"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().next().unwrap().ends_with("weighted_q0,weighted_q2,weighted_q4,weighted_q6"));
    let rows = table(&stdout(&o));
    assert!(rows.iter().any(|r| r["flags"].contains("unresolved")));
    let w0: Vec<f64> = rows
        .iter()
        .filter(|r| !r["weighted_q0"].is_empty())
        .map(|r| r["weighted_q0"].parse().unwrap())
        .collect();
    assert!(w0.len() >= 5 && w0.windows(2).all(|p| p[1] < p[0]));
    assert!(stderr(&o).contains("k^0 over"));
}

#[test]
fn current_scaling_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.cfg", &format!("{FLAT}deltas = 1e-8, 1e-7, 1e-6, 1e-5, 1e-4\n"));
    let o = run(&["current", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("delta,k_delta,slope,model_regressor\n"));
    let err = stderr(&o);
    let line = err.lines().find(|l| l.contains("fitted exponent")).unwrap();
    let exponent: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!((exponent - 1.0).abs() < 0.05, "{line}");

    let cfg = write_config(
        dir.path(),
        "power.cfg",
        "kind = power_tail\nb_minus = 0.5\nb_plus = 1\nM = 1\n",
    );
    let o = run(&["current", "--config", cfg.to_str().unwrap(), "--deltas", "1e-4,1e-3,1e-2,1e-1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    let line = err.lines().find(|l| l.contains("fitted exponent")).unwrap();
    let exponent: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!((exponent - 2.0).abs() < 0.1, "{line}");

    let o = run(&["current", "--config", cfg.to_str().unwrap(), "--deltas", "1e-4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["current", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_and_fault_injection() {
    let o = run(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 5);
    let o = run(&["selftest", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL dense_vs_tridiagonal"));
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.cfg", FLAT);
    let args = ["bands", "--config", cfg.to_str().unwrap(), "--n-max", "2", "--quiet"];
    let a = run(&args);
    let b = run(&args);
    let c = bin().args(args).env("IWATSUKA_THREADS", "1").output().unwrap();
    assert!(a.status.success() && c.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let bad = bin().args(args).env("IWATSUKA_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.cfg", &format!("{FLAT}n_max = 3\nk_grid = linear:0:1:3\n"));
    let o = run(&["bands", "--config", cfg.to_str().unwrap(), "--quiet"]);
    assert_eq!(table(&stdout(&o)).len(), 9);
    let o = run(&["bands", "--config", cfg.to_str().unwrap(), "--quiet", "--n-max", "1", "--k-grid", "linear:0:1:2"]);
    assert_eq!(table(&stdout(&o)).len(), 2);
    let o = run(&["bands", "--config", cfg.to_str().unwrap(), "--k-grid", "spiral:0:1:2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_and_unknown_flags() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let help = stdout(&o);
    for cmd in ["bands", "asym", "current", "fields", "selftest"] {
        assert!(help.contains(cmd), "{help}");
    }
    for flag in ["--config", "--out", "--n-max", "--k-grid", "--quiet"] {
        assert!(help.contains(flag), "{help}");
    }
    assert!(!help.contains("inject"));
    assert_eq!(run(&["bands", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn fields_lists_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.cfg", FLAT);
    let o = run(&["fields", "--config", cfg.to_str().unwrap(), "--n-max", "2"]);
    assert!(o.status.success());
    let err = stderr(&o);
    assert!(err.contains("kind = flat_contact") && err.contains("a_inf = ") && err.contains("thresholds: 0.5, 1, 1.5, 3"));
    let rows = table(&stdout(&o));
    assert_eq!(rows.len(), 201);
    let last = &rows[200];
    assert_eq!((last["x"].as_str(), last["b"].as_str()), ("10", "1"));
}
