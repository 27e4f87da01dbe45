use std::path::Path;
use std::process::{Command, Output};

fn boxwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxwalk")).args(args).output().expect("run boxwalk")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

/// Data rows of a CSV table, skipping `#` metadata and the header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn meta<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().filter_map(|l| l.strip_prefix("# ")).find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const CANONICAL: [&str; 10] = ["--a", "100", "--D", "1", "--v", "1", "--p", "0.5", "--s", "0"];

#[test]
fn mfpt_canonical_and_goal() {
    let o = boxwalk(&[&["mfpt"][..], &CANONICAL, &["--x0", "0"]].concat());
    assert_eq!(code(&o), 0);
    let r = rows(&stdout(&o));
    let w: f64 = r[0][1].parse().unwrap();
    assert!((w - 198.0).abs() < 1e-9);
    let o = boxwalk(&[&["mfpt"][..], &CANONICAL, &["--x0", "100"]].concat());
    assert_eq!(rows(&stdout(&o))[0][1].parse::<f64>().unwrap(), 0.0);
    let o = boxwalk(&[&["mfpt"][..], &CANONICAL, &["--grid", "4"]].concat());
    assert_eq!(rows(&stdout(&o)).len(), 5);
}

#[test]
fn bad_input_exits_two_and_names_field() {
    let o = boxwalk(&["mfpt", "--a", "100", "--D", "1", "--v", "1", "--p", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains('p'));
    let o = boxwalk(&["mfpt", "--a", "100", "--v", "1", "--p", "0.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn csv_values_round_trip() {
    let o = boxwalk(&[&["mfpt"][..], &CANONICAL, &["--grid", "7"]].concat());
    for r in rows(&stdout(&o)) {
        for field in r {
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), field);
        }
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"a": 100, "p": 0.5, "v": 1, "D": 1, "x0": 50}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let o = boxwalk(&["--config", c, "mfpt"]);
    let text = stdout(&o);
    assert_eq!(meta(&text, "x0"), Some("5.0000000000000000e1"));
    let o = boxwalk(&["--config", c, "mfpt", "--x0", "0"]);
    let w: f64 = rows(&stdout(&o))[0][1].parse().unwrap();
    assert!((w - 198.0).abs() < 1e-9);
    std::fs::write(&cfg, r#"{"a": 100, "bogus": 1}"#).unwrap();
    assert_eq!(code(&boxwalk(&["--config", c, "mfpt"])), 2);
}

#[test]
fn peclet_forward_and_inverse() {
    let o = boxwalk(&[&["peclet"][..], &CANONICAL].concat());
    let r = rows(&stdout(&o));
    assert_eq!(r[0][1].parse::<f64>().unwrap(), 100.0);
    assert_eq!(r[0][2], "advection-dominated");
    let omega = r[0][4].clone();
    let o = boxwalk(&["peclet", "--omega", &omega, "--p", "0.5"]);
    let pe: f64 = rows(&stdout(&o))[0][2].parse().unwrap();
    assert!((pe / 100.0 - 1.0).abs() < 1e-10);
    assert_eq!(code(&boxwalk(&["peclet", "--omega", "2", "--p", "0.5"])), 2);
    assert_eq!(code(&boxwalk(&["peclet", "--omega", "2.5", "--p", "0.5"])), 2);
}

#[test]
fn median_reports_half_arrival() {
    let o = boxwalk(&["median", "--a", "10", "--x0", "5", "--p", "0.5", "--v", "2", "--D", "2"]);
    let r = rows(&stdout(&o));
    let tm: f64 = r[0][0].parse().unwrap();
    let q: f64 = r[0][1].parse().unwrap();
    assert!((tm - 5.0).abs() < 1e-3);
    assert!((q - 0.5).abs() <= 1e-9);
}

fn y_variance(path: &Path) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let mut by_y = std::collections::BTreeMap::<String, f64>::new();
    for r in rows(&text) {
        *by_y.entry(r[1].clone()).or_default() += r[2].parse::<f64>().unwrap();
    }
    let total: f64 = by_y.values().sum();
    by_y.iter().map(|(y, w)| y.parse::<f64>().unwrap().powi(2) * w / total).sum()
}

#[test]
fn density_snapshots_flatten_in_y() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("snap_{t}.csv");
    let base = ["density", "--a", "10", "--b", "4", "--x0", "2", "--p", "0.5", "--v", "1", "--D", "1"];
    let o = boxwalk(&[&base[..], &["--ny", "40", "--t", "0.2,1,5", "--out", out.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Vec<f64> = ["0.2", "1", "5"].iter().map(|t| y_variance(&dir.path().join(format!("snap_{t}.csv")))).collect();
    assert!(v[0] < v[1] && v[1] < v[2], "{v:?}");
    let o = boxwalk(&[&base[..], &["--t", "0"]].concat());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("initial condition is a point mass"));
    // a grid far too coarse for an early, narrow snapshot fails the mass check
    let o = boxwalk(&[&base[..], &["--t", "0.001", "--nx", "3", "--ny", "3"]].concat());
    assert_eq!(code(&o), 3);
}

#[test]
fn steady_profile_is_normalized() {
    let o = boxwalk(&[
        "density", "--a", "10", "--b", "4", "--p", "0.5", "--v", "1", "--D", "1", "--steady", "paper", "--nx", "20000", "--ny", "1",
    ]);
    assert_eq!(code(&o), 0);
    let mass: f64 = meta(&stdout(&o), "mass").unwrap().parse().unwrap();
    assert!((mass - 1.0).abs() < 1e-6);
}

fn species_file(dir: &Path, body: &str) -> String {
    let p = dir.join("species.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn race_values(text: &str, kind: &str, species: &str) -> Vec<f64> {
    rows(text).into_iter().filter(|r| r[2] == kind && r[1] == species).map(|r| r[3].parse().unwrap()).collect()
}

#[test]
fn race_tables() {
    let dir = tempfile::tempdir().unwrap();
    let same = species_file(dir.path(), r#"[{"name":"a","N":5,"p":0.5,"s":0,"v":1,"D":1},{"name":"b","N":5,"p":0.5,"s":0,"v":1,"D":1}]"#);
    let o = boxwalk(&["race", "--species", &same, "--a", "5", "--t-max", "10", "--kinds", "first_place,composition"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(race_values(&text, "first_place", "a"), race_values(&text, "first_place", "b"));
    assert!(race_values(&text, "composition", "a").iter().all(|&c| c == 0.5));

    let mixed =
        species_file(dir.path(), r#"[{"name":"a","N":30,"p":0.5,"s":0,"v":1,"D":1},{"name":"b","N":10,"p":0.9,"s":0,"v":2,"D":0.1}]"#);
    let o = boxwalk(&["race", "--species", &mixed, "--a", "5", "--t-min", "1e-4", "--t-max", "10", "--log", "--kinds", "composition"]);
    let c = race_values(&stdout(&o), "composition", "a");
    assert!((c[0] - 0.75).abs() < 1e-12);

    let bad = species_file(dir.path(), r#"[{"name":"a","N":5,"p":2,"s":0,"v":1,"D":1}]"#);
    let o = boxwalk(&["race", "--species", &bad, "--a", "5", "--t-max", "10"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("species[0] (a)"));
    let o = boxwalk(&["race", "--species", &same, "--a", "5", "--t-max", "10", "--kinds", "fourth_place"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn wall_time_stretches_resting_walkers() {
    let base = ["median", "--a", "10", "--b", "4", "--p", "0.3", "--v", "0.5", "--D", "0.4", "--s", "0.5"];
    let active: f64 = rows(&stdout(&boxwalk(&base)))[0][0].parse().unwrap();
    let o = boxwalk(&[&base[..], &["--wall-time"]].concat());
    assert_eq!(meta(&stdout(&o), "time"), Some("wall"));
    let wall: f64 = rows(&stdout(&o))[0][0].parse().unwrap();
    assert!((wall - 2.0 * active).abs() < 1e-9 * wall, "{wall} vs {active}");

    // a rests half the time: its wall-clock curve on [5, 10] is its active curve on [2.5, 5]
    let dir = tempfile::tempdir().unwrap();
    let sp = species_file(dir.path(), r#"[{"name":"a","N":1,"p":0.5,"s":0.5,"v":1,"D":1},{"name":"b","N":1,"p":0.5,"s":0,"v":1,"D":1}]"#);
    let run = |t_max: &str, extra: &[&str]| {
        let o = boxwalk(
            &[&["race", "--species", &sp, "--a", "5", "--t-max", t_max, "--steps", "2", "--kinds", "arrival_cdf"][..], extra].concat(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let (act, wall, act_long) = (run("5", &[]), run("10", &["--wall-time"]), run("10", &[]));
    for (x, y) in race_values(&act, "arrival_cdf", "a").iter().zip(race_values(&wall, "arrival_cdf", "a")) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    assert_eq!(race_values(&wall, "arrival_cdf", "b"), race_values(&act_long, "arrival_cdf", "b"));
}

#[test]
fn simulate_is_reproducible_and_validated() {
    let args =
        ["simulate", "--a", "5", "--b", "2", "--p", "0.5", "--v", "1", "--D", "1", "--delta", "0.05", "--walkers", "500", "--seed", "42"];
    let one = boxwalk(&args);
    assert_eq!(code(&one), 0);
    let two = boxwalk(&[&args[..], &["--threads", "2"]].concat());
    assert_eq!(one.stdout, two.stdout);
    let v: serde_json::Value = serde_json::from_slice(&one.stdout).unwrap();
    assert!(v["result"]["mfpt"]["mean"].as_f64().unwrap() > 0.0);
    let o = boxwalk(&["simulate", "--a", "5", "--p", "0.5", "--v", "1", "--D", "1", "--delta", "0.05", "--walkers", "0"]);
    assert_eq!(code(&o), 2);
    let o = boxwalk(&[&args[..], &["--t-max", "1"]].concat());
    assert_eq!(code(&o), 4);
    assert!(!o.stdout.is_empty());
}
