use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use polyfrac::io::{parse_points, write_points};

const DESK: &str = r#"{"d": 2, "s": "3/2", "norm": {"preset": "linf"},
 "schedule": {"c": "auto", "m": [1, 16, 32, 96]}, "seed": 0, "samples": 1000}"#;

fn polyfrac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyfrac"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("POLYFRAC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

/// Rows after the column header line.
fn records(csv: &str) -> usize {
    csv.lines().skip_while(|l| !l.starts_with("pair_id")).skip(1).count()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn construct_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config(a.path(), "desk.json", DESK);
    assert_eq!(code(&polyfrac(a.path(), &["construct", "--config", &cfg])), 0);
    assert_eq!(code(&polyfrac(b.path(), &["construct", "--config", &cfg])), 0);
    let pa = fs::read(a.path().join("points.txt")).unwrap();
    let pb = fs::read(b.path().join("points.txt")).unwrap();
    assert_eq!(pa, pb);
    let points = parse_points(std::str::from_utf8(&pa).unwrap()).unwrap();
    assert_eq!(points.len(), 1001);

    // Manifests differ only in the timestamp line.
    let strip = |p: &Path| -> String {
        fs::read_to_string(p.join("manifest.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.contains("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn out_of_range_s_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.json", &DESK.replace("\"3/2\"", "\"5/2\""));
    let out = polyfrac(dir.path(), &["construct", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("points.txt").exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.json", &DESK.replace("\"seed\"", "\"sede\""));
    assert_eq!(code(&polyfrac(dir.path(), &["profile", "--config", &cfg])), 2);
}

#[test]
fn verify_accepts_constructed_points_and_rejects_a_flipped_window_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "desk.json", &DESK.replace("1000", "50"));
    assert_eq!(code(&polyfrac(dir.path(), &["construct", "--config", &cfg])), 0);
    let out = polyfrac(dir.path(), &["verify", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // Block 1 window is place 13; its functional is x_1.
    let path = dir.path().join("points.txt");
    let mut points = parse_points(&fs::read_to_string(&path).unwrap()).unwrap();
    points[7].flip_digit(0, 13);
    fs::write(&path, write_points(&points)).unwrap();
    let out = polyfrac(dir.path(), &["verify", "--config", &cfg]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("point 7 block 1"), "{err}");
}

#[test]
fn empty_points_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "desk.json", DESK);
    fs::write(dir.path().join("points.txt"), "").unwrap();
    assert_eq!(code(&polyfrac(dir.path(), &["verify", "--config", &cfg])), 2);
    fs::write(dir.path().join("points.txt"), "polyfrac-points v1\nd=2 prec=96 count=0\n").unwrap();
    assert_eq!(code(&polyfrac(dir.path(), &["distset", "--config", &cfg])), 2);
}

#[test]
fn pinned_distset_has_one_record_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "desk.json", DESK);
    assert_eq!(code(&polyfrac(dir.path(), &["construct", "--config", &cfg])), 0);
    let out = polyfrac(dir.path(), &["distset", "--config", &cfg, "--euclid", "24"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("distances.csv")).unwrap();
    assert_eq!(records(&csv), 1000);
    assert!(csv.contains("euclid_hex_r24"));
}

#[test]
fn pairwise_distset_respects_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "desk.json", &DESK.replace("1000", "200"));
    assert_eq!(code(&polyfrac(dir.path(), &["construct", "--config", &cfg])), 0);
    let out = polyfrac(dir.path(), &["distset", "--config", &cfg, "--pairwise", "--cap", "500"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("distances.csv")).unwrap();
    assert_eq!(records(&csv), 500);
}

#[test]
fn boxdim_rejects_distances_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "desk.json", &DESK.replace("1000", "100"));
    assert_eq!(code(&polyfrac(dir.path(), &["construct", "--config", &cfg])), 0);
    assert_eq!(code(&polyfrac(dir.path(), &["distset", "--config", &cfg])), 0);
    let out = polyfrac(dir.path(), &["boxdim", "--config", &cfg, "--seed", "5", "--distances"]
        .iter()
        .copied()
        .chain([dir.path().join("distances.csv").to_str().unwrap()])
        .collect::<Vec<_>>());
    assert_eq!(code(&out), 2);
}

#[test]
fn tiny_budget_exits_with_budget_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "desk.json",
        &DESK.replace("\"samples\": 1000", "\"samples\": 10, \"scales\": [16]"),
    );
    let out = polyfrac(dir.path(), &["boxdim", "--config", &cfg, "--budget", "10"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn profile_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "desk.json", DESK);
    let out = polyfrac(dir.path(), &["profile", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("P_ideal=    25"), "{stdout}");
    for f in ["profile_set.csv", "profile_distance_l1.csv", "profile_distance_l2.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
