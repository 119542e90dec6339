use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kinepi::config::parse_config;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn kinepi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinepi")).args(args).output().unwrap()
}

fn run(sub: &str, scenario: &str, out: &Path, extra: &[&str]) -> Output {
    let config = scenarios().join(scenario);
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    kinepi(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn every_shipped_scenario_parses() {
    let mut n = 0;
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).unwrap();
            parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 10, "{n}");
}

#[test]
fn sirs_infection_peaks_then_declines() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("sirs", "fig2_rates.json", dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,S,I,R"));
    let i: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let (k, peak) = i.iter().enumerate().fold((0, 0.0), |m, (k, x)| if *x > m.1 { (k, *x) } else { m });
    assert!(peak > i[0] && peak > *i.last().unwrap());
    assert!(k > 0 && k < i.len() - 1);
    assert!(stdout(&o).contains("peak I"));
}

#[test]
fn closure_prints_constant_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("closure", "constant.json", dir.path(), &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("D_S = 2.000000000000"), "{text}");
    assert!(text.contains("Gamma = 4.000000000000"), "{text}");
}

#[test]
fn validate_homogeneous_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("validate", "homog.json", dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let summaries = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with("_summary.txt"))
        .count();
    assert!(summaries >= 1);
}

#[test]
fn empty_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    fs::write(&cfg, "").unwrap();
    let o = kinepi(&["sirs", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["scenario", "scale", "params"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = kinepi(&["meso", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(kinepi(&["bogus"]).status.code(), Some(2));
}

#[test]
fn abm_output_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(run("abm", "fig2.json", a.path(), &["--seed", "7"]).status.success());
    assert!(run("abm", "fig2.json", b.path(), &["--seed", "7"]).status.success());
    assert!(run("abm", "fig2.json", c.path(), &["--seed", "8"]).status.success());
    let read = |d: &Path| fs::read(d.join("counts.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n:?}");
    }
    assert!(names.iter().any(|n| n.to_string_lossy().ends_with("_composite.ppm")));
}
