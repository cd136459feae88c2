use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twoscale(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn cell_without_hole_returns_the_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plain.toml");
    fs::write(&cfg, "[geometry]\nhole = \"none\"\nm = 8\n").unwrap();
    let o = twoscale(&["cell", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("|Y*| = 1.000000"), "{s}");
    let line = s.lines().find(|l| l.starts_with("d_eff = ")).expect("tensor line");
    let d: Vec<f64> = line["d_eff = ".len()..]
        .split(['[', ']', ','])
        .filter_map(|t| t.trim().parse().ok())
        .collect();
    assert_eq!(d.len(), 4, "{line}");
    for (v, e) in d.iter().zip([1.0, 0.0, 0.0, 1.0]) {
        assert!((v - e).abs() < 1e-9, "{line}");
    }
    let run = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.path().is_dir())
        .unwrap();
    for f in ["cell.json", "tensor.csv", "config.toml"] {
        assert!(run.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn ops_check_passes_on_a_coarse_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = twoscale(&["--sweep", "1/4,1/8", "ops-check"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("[PASS]") && !s.contains("[FAIL]"), "{s}");
}

#[test]
fn invalid_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[physics]\nalpha = 0.5\n").unwrap();
    let o = twoscale(&["config", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "[physics]\ntaw = 1.0\n").unwrap();
    let o = twoscale(&["config", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = twoscale(&["presets"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    for name in ["identity", "logistic", "default"] {
        assert!(s.contains(name), "{name} missing from\n{s}");
    }
}

#[test]
fn config_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = twoscale(&["--sweep", "1/8,1/16", "config"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = twoscale::config::RunConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg.sweep.epsilons.len(), 2);
    assert_eq!(cfg.flags.output_dir, dir.path().display().to_string());
}
