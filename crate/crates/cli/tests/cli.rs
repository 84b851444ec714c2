use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use toml::Table;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str], out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_skewlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status;
    status.code().expect("exit code")
}

fn report(path: &Path) -> Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

fn input(name: &str) -> String {
    data(name).display().to_string()
}

#[test]
fn classify_prototype_is_jointly_integrable() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["classify", "--input", &input("prototype.sys")], dir.path()), 0);
    let r = report(&dir.path().join("classify.toml"));
    assert_eq!(r["classification"]["case"].as_str(), Some("jointly-integrable"));
    assert_eq!(r["classification"]["theta"].as_float(), Some(0.0));
    assert_eq!(r["provenance"]["depth"].as_integer(), Some(80));
    assert!(dir.path().join("displacement.csv").exists());
}

#[test]
fn classify_localized_is_laminated() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["classify", "--input", &input("localized.sys")], dir.path()), 0);
    let r = report(&dir.path().join("classify.toml"));
    assert_eq!(r["classification"]["case"].as_str(), Some("laminated"));
}

#[test]
fn missing_and_malformed_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["classify", "--input", &input("missing.sys")], dir.path()), 1);
    let bad = dir.path().join("bad.sys");
    fs::write(&bad, "[base]\n2,1\n1,one\n").unwrap();
    assert_eq!(run(&["classify", "--input", bad.to_str().unwrap()], dir.path()), 1);
    assert_eq!(run(&["classify"], dir.path()), 1);
    assert_eq!(run(&["hhu", "--variant", "tan"], dir.path()), 1);
}

#[test]
fn wide_indeterminate_band_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let weak = dir.path().join("weak.sys");
    fs::write(&weak, "[base]\n2,1\n1,1\n[fiber]\n9e-7 sin 1 0 0\n").unwrap();
    assert_eq!(run(&["classify", "--input", weak.to_str().unwrap()], dir.path()), 2);
    let r = report(&dir.path().join("classify.toml"));
    assert_eq!(r["classification"]["case"].as_str(), Some("inconclusive"));
}

#[test]
fn rotnum_snaps_quarter() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["rotnum", "--input", &input("rigid_quarter.map")], dir.path()), 0);
    let r = report(&dir.path().join("rotation.toml"));
    assert_eq!(r["rotation"]["value"].as_float(), Some(0.25));
    assert_eq!(r["rotation"]["q"].as_integer(), Some(4));
}

#[test]
fn rotnum_irrational_writes_semiconjugacy() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["rotnum", "--input", &input("arnold.map")], dir.path()), 0);
    let r = report(&dir.path().join("rotation.toml"));
    assert_eq!(r["rotation"]["rational"].as_bool(), Some(false));
    let csv = fs::read_to_string(dir.path().join("semiconjugacy.csv")).unwrap();
    assert!(csv.starts_with("x,value\n"));
}

#[test]
fn plante_recovers_doubling() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["plante", "--input", &input("affine2x.act")], dir.path()), 0);
    let r = report(&dir.path().join("plante.toml"));
    let lambda = r["plante"]["lambda"].as_float().unwrap();
    assert!((lambda - 2.0).abs() < 1e-12);
}

#[test]
fn hhu_writes_graphs_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["hhu", "--variant", "cos", "--grid", "2000"], dir.path()), 0);
    let r = report(&dir.path().join("hhu.toml"));
    let checks = r["checks"].as_table().unwrap();
    for name in ["unstable_at_origin", "unstable_invariance", "stable_invariance", "cone", "compact_leaf"] {
        assert!(checks[name]["passed"].is_bool(), "{name}");
    }
    assert_eq!(checks["unstable_at_origin"]["passed"].as_bool(), Some(true));
    let rows = fs::read_to_string(dir.path().join("unstable.csv")).unwrap().lines().count();
    assert_eq!(rows, 2001);
}

#[test]
fn holonomy_and_orbit_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["holonomy", "--input", &input("localized.sys"), "--grid", "64"], dir.path()), 0);
    let r = report(&dir.path().join("holonomy.toml"));
    assert_eq!(r["holonomy"]["generators"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("generator_1.csv").exists());
    assert_eq!(run(&["orbit", "--input", &input("ab3.sys"), "--iters", "10"], dir.path()), 0);
    let orbit = fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    assert!(orbit.starts_with("n,x1,x2,x3,z\n"));
    assert_eq!(orbit.lines().count(), 12);
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = ["decompose", "--input", &input("localized.sys"), "--iters", "2000", "--seed", "7"];
    assert_eq!(run(&args, a.path()), 0);
    assert_eq!(run(&args, b.path()), 0);
    for name in ["decompose.toml", "birkhoff.csv", "projection.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let other = ["decompose", "--input", &input("localized.sys"), "--iters", "2000", "--seed", "8"];
    assert_eq!(run(&other, c.path()), 0);
    assert_ne!(
        fs::read(a.path().join("birkhoff.csv")).unwrap(),
        fs::read(c.path().join("birkhoff.csv")).unwrap()
    );
}
