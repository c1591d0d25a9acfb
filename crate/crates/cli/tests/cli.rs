use std::path::Path;
use std::process::{Command, Output};

use segquality::dataset::{MetaDataset, RowKey, Targets};
use segquality::io;

fn segquality(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segquality")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = segquality(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn corpus(dir: &Path, frames: &str) {
    ok(dir, &["synth", "--out", "c", "--frames", frames, "--groups", "10", "--seed", "3"]);
}

#[test]
fn synth_writes_manifest_and_frames() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path(), "12");
    let manifest = std::fs::read_to_string(d.path().join("c/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 13);
    for ext in ["bin", "label", "prob", "prob.hdr"] {
        assert!(d.path().join(format!("c/frames/000011.{ext}")).exists(), "{ext}");
    }
}

#[test]
fn synth_rejects_zero_frames() {
    let d = tempfile::tempdir().unwrap();
    let out = segquality(d.path(), &["synth", "--out", "c", "--frames", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--frames"));
}

#[test]
fn metrics_schema_and_sp_override() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path(), "20");
    ok(d.path(), &["metrics", "--data", "c", "--out", "a.bin"]);
    let a = MetaDataset::read(d.path().join("a.bin")).unwrap();
    assert_eq!(a.n_cols(), 86 + 2 * 5);
    assert!(a.targets.is_some());
    assert!(d.path().join("a.csv").exists());

    ok(d.path(), &["metrics", "--data", "c", "--out", "b.bin", "--sp-min", "0"]);
    let b = MetaDataset::read(d.path().join("b.bin")).unwrap();
    assert!(b.len() > a.len());

    ok(d.path(), &["metrics", "--data", "c", "--out", "n.bin", "--no-labels"]);
    let n = MetaDataset::read(d.path().join("n.bin")).unwrap();
    assert!(n.targets.is_none());
    assert_eq!(n.features, a.features);
}

#[test]
fn sp_min_from_config_file_and_flag_precedence() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path(), "10");
    std::fs::write(d.path().join("run.toml"), "sp_min = 0\n").unwrap();
    ok(d.path(), &["--config", "run.toml", "metrics", "--data", "c", "--out", "cfg.bin"]);
    ok(d.path(), &["--config", "run.toml", "metrics", "--data", "c", "--out", "flag.bin", "--sp-min", "10"]);
    ok(d.path(), &["metrics", "--data", "c", "--out", "def.bin"]);
    let len = |f: &str| MetaDataset::read(d.path().join(f)).unwrap().len();
    assert!(len("cfg.bin") > len("def.bin"));
    assert_eq!(len("flag.bin"), len("def.bin"));
}

#[test]
fn unknown_config_key_fails() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "sp_mni = 3\n").unwrap();
    let out = segquality(d.path(), &["--config", "bad.toml", "synth", "--out", "c", "--frames", "1", "--groups", "1"]);
    assert!(!out.status.success());
}

fn perfect_dataset(path: &Path) {
    let n = 100;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for i in 0..n {
        let fp = i % 4 == 0;
        features.extend([if fp { 0.0 } else { 1.0 }, (i % 7) as f64]);
        targets.push(Targets { iou: if fp { 0.0 } else { 0.8 }, iou_adj: if fp { 0.0 } else { 0.8 } });
    }
    let ds = MetaDataset {
        columns: vec!["a".into(), "b".into()],
        keys: (0..n).map(|i| RowKey { frame: i as u32, group: (i % 10) as u32, segment: 0, class: 1 }).collect(),
        features,
        targets: Some(targets),
    };
    ds.write(path).unwrap();
}

#[test]
fn eval_on_perfect_fixture() {
    let d = tempfile::tempdir().unwrap();
    perfect_dataset(&d.path().join("p.bin"));
    ok(d.path(), &["eval", "--dataset", "p.bin", "--out", "cv.json"]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("cv.json")).unwrap()).unwrap();
    let acc = report["rows"].as_array().unwrap().iter().find(|r| r["metric"] == "ACC").unwrap();
    assert_eq!(acc["validation"]["mean"], 1.0);
    assert_eq!(report["schema_version"], 1);

    ok(d.path(), &["train", "--dataset", "p.bin", "--out", "m.model"]);
    ok(d.path(), &["eval", "--dataset", "p.bin", "--model", "m.model", "--out", "e.json"]);
    let e: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("e.json")).unwrap()).unwrap();
    assert_eq!(e["scores"][0]["metric"], "ACC");
    assert_eq!(e["scores"][0]["value"], 1.0);
}

#[test]
fn eval_rejects_too_few_groups() {
    let d = tempfile::tempdir().unwrap();
    perfect_dataset(&d.path().join("p.bin"));
    let out = segquality(d.path(), &["eval", "--dataset", "p.bin", "--out", "cv.json", "--folds", "20"]);
    assert!(!out.status.success());
}

#[test]
fn select_with_fifteen_steps() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path(), "20");
    ok(d.path(), &["metrics", "--data", "c", "--out", "a.bin"]);
    ok(d.path(), &["select", "--dataset", "a.bin", "--out", "t.csv", "--kind", "linear", "--task", "regress"]);
    let t = std::fs::read_to_string(d.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines[0], "step,added,R2");
    assert_eq!(lines.len(), 16);
}

#[test]
fn calibrate_single_bin_scores() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("probability,label\n");
    for i in 0..100 {
        csv.push_str(&format!("0.75,{}\n", (i < 55) as u8));
    }
    std::fs::write(d.path().join("s.csv"), csv).unwrap();
    ok(d.path(), &["calibrate", "--scores", "s.csv", "--out", "cal.json"]);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("cal.json")).unwrap()).unwrap();
    assert_eq!(r["mce"], 0.2);
    assert_eq!(r["ece"], 0.2);
    assert_eq!(r["bins"].as_array().unwrap().len(), 10);
    assert!(r["bins"][0]["accuracy"].is_null());
}

#[test]
fn infer_without_labels() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path(), "20");
    ok(d.path(), &["metrics", "--data", "c", "--out", "a.bin"]);
    ok(d.path(), &["train", "--dataset", "a.bin", "--task", "regress", "--rounds", "20", "--out", "r.model"]);
    // labels are not needed at inference time
    for e in std::fs::read_dir(d.path().join("c/frames")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "label") {
            std::fs::remove_file(p).unwrap();
        }
    }
    ok(d.path(), &["infer", "--data", "c", "--regressor", "r.model", "--out", "inf"]);
    let cloud = io::load_pointcloud(d.path().join("c/frames/000004.bin")).unwrap();
    let values = io::load_point_values(d.path().join("inf/000004.iou_adj")).unwrap();
    assert_eq!(values.len(), cloud.len());
    assert!(values.iter().all(|&v| v == -1.0 || (0.0..=1.0).contains(&v)));
    let csv = std::fs::read_to_string(d.path().join("inf/000004.segments.csv")).unwrap();
    assert!(csv.starts_with("segment,class,sp,excluded,fp_probability,iou_adj\n"));
    assert!(csv.lines().skip(1).any(|l| l.split(',').nth(3) == Some("1")));
}

#[test]
fn infer_errors() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path(), "10");
    let out = segquality(d.path(), &["infer", "--data", "c", "--regressor", "missing.model", "--out", "inf"]);
    assert!(!out.status.success());
    // a model trained on another schema is refused
    perfect_dataset(&d.path().join("p.bin"));
    ok(d.path(), &["train", "--dataset", "p.bin", "--task", "regress", "--out", "p.model"]);
    let out = segquality(d.path(), &["infer", "--data", "c", "--regressor", "p.model", "--out", "inf"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}
