use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nhchain::io::*;
use nhchain::protocols::{preset, run};

fn nhchain(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhchain"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn nhchain")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(dir: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        }
        out.insert(p);
    }
    out
}

fn metric<'a>(rec: &'a [(String, String)], key: &str) -> &'a str {
    &rec.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("missing {key}")).1
}

#[test]
fn dispersion_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhchain(&["dispersion", "--preset", "fig2", "--out", "d"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("d/scan.csv")).unwrap();
    assert!(text.lines().any(|l| l == "phi,q,reE,imE,vg"));
    let rows = parse_scan_csv(&text).unwrap();
    let phis: BTreeSet<u64> = rows.iter().map(|r| r.phi.to_bits()).collect();
    let expect: BTreeSet<u64> = [0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2]
        .iter()
        .map(|p: &f64| p.to_bits())
        .collect();
    assert_eq!(phis, expect);
}

#[test]
fn storage_preset_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhchain(&["storage", "--preset", "fig6a", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("s");
    let rec = parse_metrics(&fs::read_to_string(out.join(METRICS_FILE)).unwrap()).unwrap();
    assert_eq!(metric(&rec, "release_direction"), "forward");
    for key in ["efficiency", "shape_fidelity", "preset", "config_hash"] {
        metric(&rec, key);
    }
    let svg = fs::read_to_string(out.join(HEATMAP_FILE)).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    let table = parse_trajectory_csv(&fs::read_to_string(out.join(TRAJECTORY_FILE)).unwrap()).unwrap();
    let traj = run(&preset("fig6a").unwrap()).unwrap().trajectory().unwrap().clone();
    assert_eq!(table.times, traj.times);
    assert_eq!(table.site_labels, traj.site_labels);
    assert_eq!(table.states, traj.states);
    assert_eq!(table.times.len(), 241);
}

#[test]
fn transport_metrics_keys_and_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhchain(&["transport", "--preset", "fig3d", "--out", "t", "--format", "csv", "--t-final", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("key=transport.velocity_window"), "{}", stderr(&o));
    let o = nhchain(&["transport", "--preset", "fig3d", "--out", "t", "--format", "csv", "--t-final", "32"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("t");
    assert!(!out.join(HEATMAP_FILE).exists());
    let rec = parse_metrics(&fs::read_to_string(out.join(METRICS_FILE)).unwrap()).unwrap();
    metric(&rec, "reflection_fraction");
    metric(&rec, "velocity_estimate");
    let manifest = fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("t_final = 32.0"), "{manifest}");
    let table = parse_trajectory_csv(&fs::read_to_string(out.join(TRAJECTORY_FILE)).unwrap()).unwrap();
    assert_eq!(table.times.len(), 129);
}

#[test]
fn missing_config_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhchain(&["transport", "--config", "missing.cfg", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("nhchain-error code=2"), "{err}");
    assert!(err.contains("missing.cfg"), "{err}");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

const GOOD: &str = r#"
experiment = "transport_gaussian"

[lattice]
kappa = 1.0
beta = 0.4
gamma = 0.8
phi = "pi/2"

[excitation]
kind = "gaussian"
n0 = -30
w0 = 5.0
q0 = "-pi/2"

[timing]
t_final = 4.0
"#;

#[test]
fn phase_expressions_in_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), GOOD).unwrap();
    let o = nhchain(&["transport", "--config", "run.toml", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = load_config(&dir.path().join("o").join(MANIFEST_FILE)).unwrap();
    assert_eq!(cfg.lattice.phi.0, std::f64::consts::FRAC_PI_2);
    assert_eq!(cfg.excitation.unwrap().q0.unwrap().0, -std::f64::consts::FRAC_PI_2);
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), GOOD.replace("kappa = 1.0", "kappa = 1.0\nkapa = 2.0")).unwrap();
    let o = nhchain(&["transport", "--config", "bad.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kapa"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn gain_runaway_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GOOD.replace("t_final = 4.0", "t_final = 30.0").replace(
        "phi = \"pi/2\"",
        "phi = \"pi/2\"\nchain_length = 41\nindex_origin = -40\ndefects = [{ site = -30, v_real = 0.0, xi_imag = 20.0 }]",
    );
    fs::write(dir.path().join("gain.toml"), cfg).unwrap();
    let o = nhchain(&["transport", "--config", "gain.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("nhchain-error code=3 kind=numerical"));
}

#[test]
fn never_writes_outside_out() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), GOOD).unwrap();
    let before = tree(dir.path());
    let o = nhchain(&["transport", "--config", "run.toml", "--out", "nested/out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("nested/out");
    let added: Vec<PathBuf> = tree(dir.path()).difference(&before).cloned().collect();
    for p in &added {
        assert!(p.starts_with(&out) || out.starts_with(p), "stray write {}", p.display());
    }
    let files: BTreeSet<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let expect: BTreeSet<String> = [TRAJECTORY_FILE, METRICS_FILE, MANIFEST_FILE, HEATMAP_FILE]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(files, expect);
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), GOOD).unwrap();
    assert!(nhchain(&["transport", "--config", "run.toml", "--out", "a"], dir.path()).status.success());
    let manifest = dir.path().join("a").join(MANIFEST_FILE);
    let o = nhchain(&["transport", "--config", manifest.to_str().unwrap(), "--out", "b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [TRAJECTORY_FILE, METRICS_FILE, MANIFEST_FILE, HEATMAP_FILE] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn preset_list_and_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhchain(&["preset", "--list"], dir.path());
    assert!(o.status.success());
    let names = String::from_utf8(o.stdout).unwrap();
    assert!(names.lines().any(|l| l == "fig7"));
    let o = nhchain(&["preset", "fig9", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("key=preset"));
}
