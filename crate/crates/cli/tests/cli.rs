use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rplsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rplsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn rplsim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = rplsim(&["simulate", "--scenario", "canonical7", "--seed", "1", "--duration", "300", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert!(a.ends_with(b"\n"));
}

#[test]
fn simulate_prints_node_lines_and_mean() {
    let dir = tempfile::tempdir().unwrap();
    let o = rplsim(&["simulate", "--scenario", "canonical7", "--duration", "300", "--out", "a.csv"], dir.path());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("node")).count(), 5);
    assert!(text.lines().last().unwrap().starts_with("honest-mean"));
}

#[test]
fn duration_override_sets_last_sample() {
    let dir = tempfile::tempdir().unwrap();
    rplsim(&["simulate", "--scenario", "canonical7", "--duration", "600", "--out", "a.csv"], dir.path());
    let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    assert_eq!(last.split(',').nth(4), Some("600"));
}

#[test]
fn scenario_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let o = rplsim(&["presets", "--export", "scn"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 7);
    let o = rplsim(&["simulate", "--scenario", "scn/rank.scn", "--duration", "120", "--out", "r.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_scenario_exits_1_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = rplsim(&["simulate", "--scenario", "absent.scn", "--out", "a.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.scn"));
    assert!(!dir.path().join("a.csv").exists());
}

#[test]
fn unknown_flag_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = rplsim(&["simulate", "--scenario", "canonical7", "--out", "a.csv", "--colour"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_reports_and_rejects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    rplsim(&["simulate", "--scenario", "canonical7", "--duration", "900", "--out", "base.csv"], d);
    rplsim(&["simulate", "--scenario", "versioning", "--duration", "900", "--out", "v.csv"], d);
    rplsim(&["simulate", "--scenario", "packet_flood", "--duration", "900", "--out", "pf.csv"], d);
    rplsim(&["simulate", "--scenario", "stretch11", "--duration", "60", "--out", "s.csv"], d);

    let cpu = |att: &str| -> f64 {
        let o = rplsim(&["compare", "--baseline", "base.csv", "--attack", att, "--out", "r.csv"], d);
        assert!(o.status.success());
        let csv = fs::read_to_string(d.join("r.csv")).unwrap();
        let row = csv.lines().find(|l| l.starts_with("cpu_time")).unwrap();
        row.split(',').nth(3).unwrap().parse().unwrap()
    };
    assert!(cpu("v.csv") >= cpu("pf.csv"));

    let same = rplsim(&["compare", "--baseline", "base.csv", "--attack", "base.csv"], d);
    assert!(same.status.success());
    for line in stdout(&same).lines().skip(2) {
        assert!(line.contains(" 0.0%"), "{line}");
    }

    let o = rplsim(&["compare", "--baseline", "base.csv", "--attack", "s.csv"], d);
    assert_eq!(o.status.code(), Some(1));

    fs::write(d.join("junk.csv"), "a,b\n1,2\n").unwrap();
    let o = rplsim(&["compare", "--baseline", "base.csv", "--attack", "junk.csv"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_grid_and_bad_battery() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rplsim"))
        .args(["sweep", "--scenario", "stretch11", "--batteries", "2xAAA,CR2032,CR123A", "--out", "g.csv"])
        .current_dir(dir.path())
        .env("RPLSIM_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    let rows: Vec<&str> = grid.lines().collect();
    assert_eq!(rows[0], "condition,2xAAA,CR2032,CR123A");
    assert_eq!(rows.len(), 3);
    assert!(rows[2].split(',').nth(2).unwrap().starts_with("Empty"));
    assert!(!rows[1].contains("Empty"));

    let o = rplsim(&["sweep", "--scenario", "stretch11", "--batteries", "AA9"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
