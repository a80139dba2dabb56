use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn mobisim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobisim")).args(args).output().expect("binary runs")
}

fn copy_fixture(dir: &Path, name: &str) -> PathBuf {
    let to = dir.join(name);
    std::fs::copy(Path::new(FIXTURES).join(name), &to).expect("copy fixture");
    to
}

fn short_scenario(dir: &Path) -> PathBuf {
    copy_fixture(dir, "reference.osm");
    let text = std::fs::read_to_string(Path::new(FIXTURES).join("reference.toml"))
        .unwrap()
        .replace("duration = 300.0", "duration = 20.0")
        .replace("vehicles = 100", "vehicles = 20");
    let path = dir.join("short.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn convert_writes_a_cache_next_to_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let osm = copy_fixture(dir.path(), "small.osm");
    let out = mobisim(&["convert", osm.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("small.osm.netcache").exists());
}

#[test]
fn corrupt_xml_is_rejected_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let osm = dir.path().join("broken.osm");
    std::fs::write(&osm, "<osm><node id=\"1\" lat=\"51\" lon=\"7\"></osm>").unwrap();
    let out = mobisim(&["convert", osm.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = mobisim(&["convert", "/nonexistent/map.osm"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_scenario_is_rejected_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[map]\nsource = \"x.osm\"\n[simulation]\ndt = -1.0\n").unwrap();
    let out = mobisim(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));
}

#[test]
fn simulate_then_spacetime() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path());
    let out_dir = dir.path().join("run");
    let out = mobisim(&["simulate", "--scenario", scenario.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "link.csv", "transmissions.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }

    let trace = out_dir.join("trajectory.csv");
    let st = dir.path().join("st.csv");
    let out = mobisim(&["spacetime", trace.to_str().unwrap(), "--vehicles", "0,1", "--out", st.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&st).unwrap();
    assert!(csv.lines().count() > 2);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path());
    let run = |seed: &str| {
        let out_dir = dir.path().join(format!("seed{seed}"));
        let out = mobisim(&["simulate", "--scenario", scenario.to_str().unwrap(), "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(out_dir.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("3"), run("3"));
    assert_ne!(run("3"), run("4"));
}

#[test]
fn export_svg_draws_roads() {
    let dir = tempfile::tempdir().unwrap();
    let osm = copy_fixture(dir.path(), "small.osm");
    let svg = dir.path().join("small.svg");
    let out = mobisim(&["export-svg", osm.to_str().unwrap(), svg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.contains("<polyline") || text.contains("<path") || text.contains("<line"));
}
