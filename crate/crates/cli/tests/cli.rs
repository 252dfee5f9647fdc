use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

fn lightsync(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lightsync"));
    cmd.env_remove("LIGHTSYNC_CONFIG_DIR").args(args);
    cmd
}

fn run(args: &[&str], out: &Path) -> Output {
    let config = config_dir().join("run.toml");
    lightsync(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn map_writes_maps_and_summary() {
    let dir = TempDir::new().unwrap();
    let o = run(&["map"], dir.path());
    ok(&o);
    for f in [
        "map_uncompensated.csv",
        "map_uncompensated.json",
        "map_compensated.csv",
        "map_compensated.json",
        "map_summary.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = json(&dir.path().join("map_summary.json"));
    let reduction = summary["reduction_factor"].as_f64().unwrap();
    assert!((reduction / 18.2 - 1.0).abs() <= 0.5, "{reduction}");
    assert_eq!(summary["tool"], "lightsync");
    let csv = fs::read_to_string(dir.path().join("map_compensated.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "row,col,label,shift_Hz"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 55);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        ok(&run(&["map"], d.path()));
        ok(&run(&["ramsey", "--sites", "e5,c3"], d.path()));
    }
    for f in ["map_compensated.csv", "ramsey_e5.csv", "ramsey_c3.csv", "ramsey_fits.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_changes_the_traces() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(&run(&["ramsey", "--sites", "e5"], a.path()));
    ok(&run(&["ramsey", "--sites", "e5", "--seed", "1"], b.path()));
    assert_ne!(
        fs::read(a.path().join("ramsey_e5.csv")).unwrap(),
        fs::read(b.path().join("ramsey_e5.csv")).unwrap()
    );
}

#[test]
fn missing_scene_is_a_config_error_with_no_outputs() {
    let cfg = TempDir::new().unwrap();
    let text = fs::read_to_string(config_dir().join("run.toml")).unwrap();
    fs::write(cfg.path().join("run.toml"), text).unwrap();
    let out = cfg.path().join("results");
    let o = lightsync(&["map", "--config"])
        .arg(cfg.path().join("run.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().count() == 0);
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let empty = run(&["ramsey", "--sites", ","], dir.path());
    assert_eq!(empty.status.code(), Some(2));
    let unknown = run(&["ramsey", "--sites", "z9"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    let mode = run(&["map", "--compensation", "maybe"], dir.path());
    assert_eq!(mode.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn fixed_compensation_power_is_used() {
    let dir = TempDir::new().unwrap();
    ok(&run(&["map", "--compensation", "power=2.5e-9"], dir.path()));
    let map = json(&dir.path().join("map_compensated.json"));
    assert_eq!(map["compensation_power_w"].as_f64(), Some(2.5e-9));
}

#[test]
fn config_dir_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let o = lightsync(&["optimize", "--out"])
        .arg(dir.path())
        .env("LIGHTSYNC_CONFIG_DIR", config_dir())
        .output()
        .unwrap();
    ok(&o);
    let report = json(&dir.path().join("optimize.json"));
    assert!(report.get("config_hash").is_some());
}

#[test]
fn misalignment_round_trip() {
    let dir = TempDir::new().unwrap();
    ok(&run(&["map"], dir.path()));
    let measured = dir.path().join("map_compensated.csv");
    let o = run(&["fit-misalignment", "--measured", measured.to_str().unwrap()], dir.path());
    ok(&o);
    let fit = json(&dir.path().join("misalignment.json"));
    let d = fit["displacement_m"].as_array().unwrap();
    let (x, y) = (d[0].as_f64().unwrap(), d[1].as_f64().unwrap());
    assert!((x - 8e-6).abs() < 1e-6 && y.abs() < 1e-6, "{x} {y}");
}

#[test]
fn echo_writes_trace_and_fit() {
    let dir = TempDir::new().unwrap();
    ok(&run(&["echo"], dir.path()));
    assert!(dir.path().join("echo_e5.csv").exists());
    let fit = json(&dir.path().join("echo_fit.json"));
    assert!(fit.to_string().contains("decay_time"));
}
