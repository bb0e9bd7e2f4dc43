use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shape_gate::GrayImage;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shape-gate"));
    c.env_remove("SHAPE_GATE_CONFIG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Dark scene with bright axis-aligned rectangles and one optional disk.
fn write_scene(path: &Path, w: usize, h: usize, rects: &[(usize, usize, usize, usize)], disk: Option<(f64, f64, f64)>) {
    let mut img = GrayImage::filled(w, h, 20);
    for &(x0, y0, rw, rh) in rects {
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                img.set(x, y, 220);
            }
        }
    }
    if let Some((cx, cy, r)) = disk {
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    img.set(x, y, 220);
                }
            }
        }
    }
    img.write_pgm(path).unwrap();
}

fn write_manifest(path: &Path, scene: &str, labels: &[&str]) -> PathBuf {
    let mut text = format!("{scene}\n");
    for l in labels {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

/// Three-object scene: table (rectangle), ball (disk), box (square).
fn three_object_fixture(dir: &Path) {
    write_scene(&dir.join("room.pgm"), 160, 100, &[(10, 10, 40, 20), (70, 55, 40, 40)], Some((130.0, 30.0, 16.0)));
    write_manifest(&dir.join("room.manifest"), "room.pgm", &["table", "ball", "box"]);
}

fn db_counts(dir: &Path) -> (usize, usize) {
    let loaded = shape_gate::GlobalIndex::load(dir.join("db.json")).unwrap();
    (loaded.index.clusters().len(), loaded.index.member_count())
}

#[test]
fn train_then_retrain_doubles_members() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    three_object_fixture(dir);
    let o = run(dir, &["train", "--db", "db.json", "room.manifest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (clusters, members) = db_counts(dir);
    assert!(clusters >= 1);
    assert_eq!(members, 3);

    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 0);
    assert_eq!(db_counts(dir), (clusters, 6));
}

#[test]
fn wrong_label_count_leaves_db_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    three_object_fixture(dir);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 0);
    let before = std::fs::read(dir.join("db.json")).unwrap();

    write_manifest(&dir.join("bad.manifest"), "room.pgm", &["table", "ball"]);
    let o = run(dir, &["train", "--db", "db.json", "bad.manifest"]);
    assert_eq!(code(&o), 2);
    assert_eq!(std::fs::read(dir.join("db.json")).unwrap(), before);

    // a failing manifest after a good one rolls back the whole command
    let o = run(dir, &["train", "--db", "db.json", "room.manifest", "bad.manifest"]);
    assert_eq!(code(&o), 2);
    assert_eq!(std::fs::read(dir.join("db.json")).unwrap(), before);
}

#[test]
fn detect_outcomes_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    three_object_fixture(dir);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 0);

    let gated = run(dir, &["detect", "--db", "db.json", "room.pgm", "--json"]);
    assert_eq!(code(&gated), 0);
    let exhaustive = run(dir, &["detect", "--db", "db.json", "room.pgm", "--json", "--exhaustive"]);
    assert_eq!(code(&exhaustive), 0);
    let labels = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                v["outcome"]["label"].as_str().unwrap().to_string()
            })
            .collect()
    };
    assert_eq!(labels(&gated), vec!["table", "ball", "box"]);
    assert_eq!(labels(&gated), labels(&exhaustive));

    // a thin bar: LINE has no cluster
    write_scene(&dir.join("novel.pgm"), 120, 40, &[(10, 10, 90, 4)], None);
    let o = run(dir, &["detect", "--db", "db.json", "novel.pgm"]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("new object (no_shape_cluster)"), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 members compared"));

    let o = run(dir, &["detect", "--db", "db.json", "room.pgm", "--threads", "3"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn mismatched_config_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    three_object_fixture(dir);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 0);
    std::fs::write(dir.join("other.toml"), "[scale]\ncount = 6\n").unwrap();

    let o = run(dir, &["--config", "other.toml", "detect", "--db", "db.json", "room.pgm"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fingerprint"));

    let o = bin()
        .current_dir(dir)
        .env("SHAPE_GATE_CONFIG", "other.toml")
        .args(["detect", "--db", "db.json", "room.pgm"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);

    // the default file in the working directory is picked up too
    std::fs::copy(dir.join("other.toml"), dir.join("shape-gate.toml")).unwrap();
    assert_eq!(code(&run(dir, &["detect", "--db", "db.json", "room.pgm"])), 4);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 4);
}

#[test]
fn db_stats_reports_and_detects_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_scene(&dir.join("blank.pgm"), 30, 30, &[], None);
    write_manifest(&dir.join("blank.manifest"), "blank.pgm", &[]);
    assert_eq!(code(&run(dir, &["train", "--db", "empty.json", "blank.manifest"])), 0);
    let o = run(dir, &["db-stats", "--db", "empty.json"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("0 clusters"));

    three_object_fixture(dir);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 0);
    let o = run(dir, &["db-stats", "--db", "db.json"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("3 clusters"), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with(" ") && l.trim_start().starts_with(char::is_numeric)).count(), 3);
    assert!(stdout(&o).contains("consistency: OK"));

    let text = std::fs::read_to_string(dir.join("db.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["checksum"] = serde_json::Value::String("deadbeef".into());
    std::fs::write(dir.join("db.json"), serde_json::to_vec(&doc).unwrap()).unwrap();
    assert_eq!(code(&run(dir, &["db-stats", "--db", "db.json"])), 5);
}

#[test]
fn gen_corpus_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for out in ["a", "b"] {
        let o = run(dir, &["gen-corpus", "--out", out, "--seed", "7", "--per-class", "3", "--noise", "0.02"]);
        assert_eq!(code(&o), 0);
    }
    let mut names: Vec<String> = std::fs::read_dir(dir.join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.iter().filter(|n| n.ends_with(".pgm")).count(), 21);
    assert_eq!(names.iter().filter(|n| n.ends_with(".manifest")).count(), 21);
    for n in &names {
        assert_eq!(std::fs::read(dir.join("a").join(n)).unwrap(), std::fs::read(dir.join("b").join(n)).unwrap());
    }

    // the generated manifests train directly
    let o = run(dir, &["train", "--db", "db.json", "a/circle-000.manifest", "a/square-002.manifest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_writes_expected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    three_object_fixture(dir);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "room.manifest"])), 0);
    let o = run(
        dir,
        &["bench", "--db", "db.json", "room.manifest", "room.manifest", "--repeats", "3", "--inner", "2", "--csv", "out.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.join("out.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mode,run,query,ns,comparisons,outcome"));
    // 2 arms x 3 repeats x 6 queries
    assert_eq!(lines.count(), 36);
    assert!(stdout(&o).contains("speedup (comparisons): 3.00x"), "{}", stdout(&o));
}

#[test]
fn bench_on_single_cluster_cannot_prune() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_scene(&dir.join("one.pgm"), 80, 60, &[(10, 10, 40, 20)], None);
    write_manifest(&dir.join("one.manifest"), "one.pgm", &["table"]);
    assert_eq!(code(&run(dir, &["train", "--db", "db.json", "one.manifest"])), 0);
    let o = run(dir, &["bench", "--db", "db.json", "one.manifest", "--repeats", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("speedup (comparisons): 1.00x"));
}
