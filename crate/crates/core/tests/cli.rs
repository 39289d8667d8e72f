use std::path::Path;
use std::process::{Command, Output};

use fatigue_poisson::io;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fatigue-poisson"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

const PARAMS: &str = r#"{"sn": {"a1": 6.0, "a2": -1.2, "a3": 30.0, "q": 0.6, "tau": 0.25}, "beta": 1.9, "delta": 0.0}"#;

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), PARAMS).unwrap();
    let design = "s2:40:0:5,s2:50:-1:5";
    ok(dir.path(), &["--seed", "7", "--mesh-level", "1", "--out", "a", "simulate", "--params", "p.json", "--design", design]);
    ok(dir.path(), &["--seed", "7", "--mesh-level", "1", "--out", "b", "simulate", "--params", "p.json", "--design", design]);
    let a = std::fs::read(dir.path().join("a/simulated.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/simulated.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(io::read_dataset(&dir.path().join("a/simulated.csv")).unwrap().len(), 10);
}

#[test]
fn missing_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--config", "absent.json", "mesh"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
}

#[test]
fn empty_dataset_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "specimen_id,s_max_ksi,ratio_r,cycles,failed\n").unwrap();
    let out = run(dir.path(), &["--mesh-level", "0", "fit", "--data", "d.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rectangle_config_gives_uniform_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"specimens": {"bar": {"rectangle": {"width_in": 1.0, "half_length_in": 2.0}}}, "mesh_level": 1}"#,
    )
    .unwrap();
    ok(dir.path(), &["--config", "cfg.json", "--out", "o", "solve", "--specimen", "bar"]);
    let rows = io::read_field_csv(&dir.path().join("o/field_bar.csv")).unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert!((r[2] - 1.0).abs() < 1e-9 && r[3].abs() < 1e-9 && r[4].abs() < 1e-9, "{r:?}");
    }
}

#[test]
fn notched_peak_sits_at_the_notch_root() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--mesh-level", "1", "--out", "o", "solve", "--specimen", "s2"]);
    let sites = io::read_sites_csv(&dir.path().join("o/sites_s2.csv")).unwrap();
    let peak = sites.iter().max_by(|a, b| a[3].total_cmp(&b[3])).unwrap();
    // notch root of the quarter model lies on x = 0 at half the minimum width
    let g = fatigue_poisson::geometry::SpecimenGeometry::specimen2();
    assert!(peak[0].abs() < 1e-12);
    assert!((peak[1] - 0.5 * g.w_min).abs() < 1e-12);
}

#[test]
fn median_life_falls_with_stress_on_the_survival_grid() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), PARAMS).unwrap();
    ok(
        dir.path(),
        &["--mesh-level", "1", "--out", "o", "survival", "--params", "p.json", "--s-range", "30:60:16", "--n-range", "1e3:1e8:51"],
    );
    let rows = io::read_survival_grid_csv(&dir.path().join("o/survival_s2.csv")).unwrap();
    let mut last_cross = usize::MAX;
    for s_row in rows.chunks(51) {
        assert!(s_row.windows(2).all(|w| w[1][2] <= w[0][2]));
        let cross = s_row.iter().position(|r| r[2] < 0.5).unwrap_or(usize::MAX);
        assert!(cross <= last_cross, "0.5 crossing moved to longer lives at S = {}", s_row[0][0]);
        last_cross = cross;
    }
}
