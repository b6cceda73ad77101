use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rem"))
        .args(args)
        .env_remove("REM_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(path: PathBuf) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("in{seed}"));
    let o = rem(&["synth", "--out", p(&out), "--seed", seed, "--scenes", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let a = synth(t.path(), "1");
    let b = t.path().join("again");
    assert!(
        rem(&["synth", "--out", p(&b), "--seed", "1", "--scenes", "10"])
            .status
            .success()
    );
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn seed_env_overrides_flag() {
    let t = tempfile::tempdir().unwrap();
    let a = synth(t.path(), "4");
    let b = t.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_rem"))
        .args(["synth", "--out", p(&b), "--seed", "99", "--scenes", "10"])
        .env("REM_SEED", "4")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn stats_prints_key_edges() {
    let t = tempfile::tempdir().unwrap();
    let input = synth(t.path(), "2");
    let csv_path = t.path().join("scores.csv");
    let o = rem(&[
        "stats",
        "--input",
        p(&input),
        "--centrality-csv",
        p(&csv_path),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("scene_id,vertices,edges,bridges,key_edge,path_count"));
    assert_eq!(lines.len(), 11);
    for l in &lines[1..] {
        let n_e: usize = l.rsplit(',').nth(4).unwrap().parse().unwrap();
        assert!(n_e >= 1, "{l}");
    }
    assert!(fs::read_to_string(csv_path)
        .unwrap()
        .starts_with("scene_id,kind,id,score"));
}

#[test]
fn augment_counts_match_files_and_validate() {
    let t = tempfile::tempdir().unwrap();
    let input = synth(t.path(), "3");
    let out = t.path().join("out");
    let o = rem(&[
        "augment",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--seed",
        "7",
        "--n-pairs",
        "5",
        "--merge",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let m = read(out.join("manifest.json"));
    let scene_files: Vec<_> = fs::read_dir(out.join("scenes"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let scenes = scene_files
        .iter()
        .filter(|f| !f.ends_with(".mixup.json"))
        .count();
    assert_eq!(scenes, 5);
    assert_eq!(m["counts"]["cross_scenes"], 5);
    let data = read(out.join("dataset.json"));
    let rows = data.as_array().unwrap();
    assert_eq!(m["counts"]["paths"].as_u64().unwrap() as usize, rows.len());
    let n_ins: usize = rows
        .iter()
        .map(|r| r["instructions"].as_array().unwrap().len())
        .sum();
    assert_eq!(
        m["counts"]["instructions"].as_u64().unwrap() as usize,
        n_ins
    );
    assert_eq!(m["config"]["orientation_align"], true);
    assert_eq!(m["pairs"].as_array().unwrap().len(), 5);
    assert!(m["input"]["digests"]["dataset.json"].is_string());
    assert!(out.join("merged.json").exists());

    let v = rem(&["validate", "--out", p(&out)]);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));
    assert!(stdout(&v).contains(", 0 violations"));

    // Same config, other output directory: identical bytes.
    let again = t.path().join("again");
    rem(&[
        "augment",
        "--input",
        p(&input),
        "--out",
        p(&again),
        "--seed",
        "7",
        "--n-pairs",
        "5",
        "--merge",
    ]);
    assert_eq!(tree(&out), tree(&again));
}

#[test]
fn unaligned_run_reports_heading_violations() {
    let t = tempfile::tempdir().unwrap();
    let input = synth(t.path(), "5");
    let out = t.path().join("out");
    let o = rem(&[
        "augment",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--n-pairs",
        "2",
        "--no-orientation-align",
    ]);
    assert!(o.status.success());
    let m = read(out.join("manifest.json"));
    assert_eq!(m["config"]["orientation_align"], false);
    let v = rem(&["validate", "--out", p(&out)]);
    assert_eq!(v.status.code(), Some(3));
    let text = stdout(&v);
    assert!(text.contains("heading_restoration:"), "{text}");
    assert!(text.contains("heading off by"));
}

#[test]
fn corrupted_and_empty_outputs() {
    let t = tempfile::tempdir().unwrap();
    let input = synth(t.path(), "6");
    let out = t.path().join("out");
    assert!(rem(&[
        "augment",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--n-pairs",
        "1"
    ])
    .status
    .success());

    let path = out.join("dataset.json");
    let mut data = read(path.clone());
    data[0]["instructions"][0][0] = Value::String("sideways".into());
    fs::write(&path, serde_json::to_vec(&data).unwrap()).unwrap();
    let v = rem(&["validate", "--out", p(&out)]);
    assert_eq!(v.status.code(), Some(3));
    assert!(stdout(&v).contains("token_reconstruction"));

    fs::write(&path, b"[]").unwrap();
    fs::write(out.join("chunks.json"), b"{}").unwrap();
    let v = rem(&["validate", "--out", p(&out)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains("0 items"));
}

#[test]
fn metrics_on_reference_paths() {
    let t = tempfile::tempdir().unwrap();
    let input = synth(t.path(), "7");
    let data = read(input.join("dataset.json"));
    let preds: serde_json::Map<String, Value> = data
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["path_id"].as_str().unwrap().to_string(),
                r["path"].clone(),
            )
        })
        .collect();
    let pf = t.path().join("preds.json");
    fs::write(&pf, serde_json::to_vec(&preds).unwrap()).unwrap();
    let o = rem(&["metrics", "--reference", p(&input), "--predictions", p(&pf)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "ndtw").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), preds.len() + 1);
    for r in rows {
        assert_eq!(r.split(',').nth(col).unwrap(), "1", "{r}");
    }
}

#[test]
fn import_connectivity_file() {
    let t = tempfile::tempdir().unwrap();
    let pose = |x: f64| {
        let mut m = vec![0.0; 16];
        m[3] = x;
        m[15] = 1.0;
        m
    };
    let recs = serde_json::json!([
        {"image_id": "a", "pose": pose(0.0), "included": true, "unobstructed": [false, true, false]},
        {"image_id": "b", "pose": pose(1.0), "included": true, "unobstructed": [true, false, true]},
        {"image_id": "c", "pose": pose(2.0), "included": false, "unobstructed": [false, true, false]}
    ]);
    let f = t.path().join("house_connectivity.json");
    fs::write(&f, serde_json::to_vec(&recs).unwrap()).unwrap();
    let o = rem(&["import", "--connectivity", p(&f), "--out", p(t.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scene = read(t.path().join("scenes/house.json"));
    assert_eq!(scene["vertices"].as_array().unwrap().len(), 2);
    assert_eq!(scene["edges"], serde_json::json!([["a", "b"]]));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let input = synth(t.path(), "8");
    let out = t.path().join("out");
    let bad_k = rem(&[
        "augment",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--k-replace",
        "13",
    ]);
    assert_eq!(bad_k.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_k.stderr).contains("k_replace"));
    let missing = rem(&[
        "augment",
        "--input",
        p(&t.path().join("nope")),
        "--out",
        p(&out),
    ]);
    assert_eq!(missing.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("load"));
    let bad_synth = rem(&["synth", "--out", p(&out), "--rooms", "1"]);
    assert_eq!(bad_synth.status.code(), Some(2));
}
