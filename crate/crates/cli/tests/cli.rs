use std::path::Path;
use std::process::{Command, Output};

fn kinetex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinetex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_cylinder(dir: &Path, angle: &str) -> std::path::PathBuf {
    let fx = dir.join(format!("cyl-{angle}"));
    ok(&kinetex(&[
        "fixture",
        "cylinder-bend",
        "--out",
        p(&fx),
        "--angle",
        angle,
        "--around",
        "12",
        "--along",
        "16",
    ]));
    fx
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn straight_fixture_has_identical_poses() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_cylinder(dir.path(), "0");
    assert_eq!(read(&fx.join("rest.obj")), read(&fx.join("target.obj")));
    for f in ["patch.txt", "materials.txt", "config.ini"] {
        assert!(fx.join(f).is_file());
    }
}

#[test]
fn bent_fixture_keeps_topology() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_cylinder(dir.path(), "90");
    let count = |f: &str, tag: &str| read(&fx.join(f)).lines().filter(|l| l.starts_with(tag)).count();
    assert_eq!(count("rest.obj", "v "), count("target.obj", "v "));
    assert_eq!(count("rest.obj", "f "), count("target.obj", "f "));
    assert_ne!(read(&fx.join("rest.obj")), read(&fx.join("target.obj")));
}

#[test]
fn rest_only_plane_has_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("plane");
    ok(&kinetex(&["fixture", "plane", "--out", p(&fx)]));
    let cfg = fx.join("rest-only.ini");
    let text = read(&fx.join("config.ini")).replace("body_target = target.obj\n", "");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("sim");
    ok(&kinetex(&["simulate", "--config", p(&cfg), "--out", p(&out)]));
    let csv = read(&out.join("energy.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let cols: Vec<f64> = rows[0].split(',').map(|c| c.parse().unwrap()).collect();
    assert!(cols[1].abs() < 1e-12, "{}", rows[0]);
    assert!(out.join("frame_0000.obj").is_file());
}

#[test]
fn simulate_is_deterministic_and_stores_energy() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_cylinder(dir.path(), "60");
    let cfg = fx.join("config.ini");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&kinetex(&["simulate", "--config", p(&cfg), "--out", p(&a)]));
    ok(&kinetex(&["simulate", "--config", p(&cfg), "--out", p(&b), "--threads", "2"]));
    let energy = read(&a.join("energy.csv"));
    assert_eq!(energy, read(&b.join("energy.csv")));
    assert_eq!(read(&a.join("frame_0001.obj")), read(&b.join("frame_0001.obj")));
    let last: Vec<&str> = energy.lines().last().unwrap().split(',').collect();
    let garment_j: f64 = last[5].parse().unwrap();
    assert!(garment_j > 0.0);

    // the effective config reproduces the run
    let c = dir.path().join("c");
    ok(&kinetex(&["simulate", "--config", p(&a.join("config.ini")), "--out", p(&c)]));
    assert_eq!(energy, read(&c.join("energy.csv")));
}

#[test]
fn missing_patch_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_cylinder(dir.path(), "30");
    std::fs::remove_file(fx.join("patch.txt")).unwrap();
    let out = kinetex(&["optimize", "--config", p(&fx.join("config.ini")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("patch.txt"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_fixture_and_busy_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = kinetex(&["fixture", "torus", "--out", p(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
    let busy = dir.path().join("busy");
    std::fs::create_dir_all(&busy).unwrap();
    std::fs::write(busy.join("x"), "x").unwrap();
    let out = kinetex(&["fixture", "plane", "--out", p(&busy)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dense_target_optimises_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let fx = small_cylinder(dir.path(), "45");
    let cfg = fx.join("dense.ini");
    let text = read(&fx.join("config.ini")).replace("target_area = 0.15", "target_area = 1");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("opt");
    let run = kinetex(&["optimize", "--config", p(&cfg), "--out", p(&out)]);
    ok(&run);
    let trace = read(&out.join("trace.csv"));
    let rows: Vec<&str> = trace.lines().skip(1).collect();
    assert!(rows.len() <= 6, "{trace}");
    for r in &rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[1], "1");
        assert_eq!(cols[3], "1");
    }
    assert!(out.join("final.obj").is_file());
    assert!(out.join("iter_0000.labels").is_file());
    let labels = read(&out.join("final.labels"));
    assert!(labels.lines().all(|l| l.ends_with(" 1")));
    assert!(String::from_utf8_lossy(&run.stdout).contains("final normalized energy density: 1"));
}

#[test]
fn pulltest_writes_force_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pull");
    ok(&kinetex(&[
        "pulltest",
        "--stencil",
        "FULL_REINFORCED",
        "--strains",
        "0:0.002:0.001",
        "--resolution",
        "10",
        "--out",
        p(&out),
    ]));
    let csv = read(&out.join("force.csv"));
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], 0.0);
    assert!(rows[1][1] > 0.0 && rows[2][1] > rows[1][1]);
    assert!(rows.iter().all(|r| r[2] == 1.0));

    let missing = kinetex(&["pulltest", "--stencil", "nope.labels", "--out", p(&dir.path().join("x"))]);
    assert_eq!(missing.status.code(), Some(2));
}
