use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glore_core::datapipe::load_manifest;
use glore_core::encoders::read_glre;
use glore_core::metrics::ScoreTable;
use glore_core::{Lexicon, Pathology, RunReport};

fn glore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glore"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = glore(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path, command: &str) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{command}_report.json"))).unwrap()).unwrap()
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/golden_reports.jsonl")
}

/// Small paired dataset and training config for quick runs.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"seed": 3, "synth": {"train": 60, "held_out": 30}, "train": {"steps": 40, "batch_size": 10}, "probe": {"epochs": 100}}"#,
    )
    .unwrap();
    path
}

#[test]
fn label_reproduces_golden_corpus_without_touching_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let text = fs::read_to_string(golden()).unwrap();
    // strip the expected labels so the command has to derive them
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("labels");
            format!("{v}\n")
        })
        .collect();
    fs::write(&input, &stripped).unwrap();
    let lex = dir.path().join("lex.json");
    fs::write(&lex, serde_json::to_string(&Lexicon::default()).unwrap()).unwrap();
    let out = dir.path().join("labeled.jsonl");

    ok(&["label", "--manifest", s(&input), "--lexicon", s(&lex), "--out", s(&out)]);
    assert_eq!(fs::read_to_string(&input).unwrap(), stripped);
    let got = load_manifest(&out).unwrap();
    let want = load_manifest(&golden()).unwrap();
    assert_eq!(got.len(), 30);
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.labels, w.labels, "{}", g.report);
    }
    let r = report(dir.path(), "label");
    assert_eq!(r.metrics["records"], 30.0);
}

#[test]
fn eval_of_separated_scores_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let records = load_manifest(&golden()).unwrap();
    let mut table = ScoreTable::default();
    for r in &records {
        let mut row = [0.0; 5];
        for p in Pathology::ALL {
            row[p.index()] = match r.labels.get(p).code() {
                Some(1) => 0.9,
                Some(-1) => 0.5,
                _ => 0.1,
            };
        }
        table.push(r.study_id.clone(), row);
    }
    let scores = dir.path().join("s.csv");
    table.write_csv(fs::File::create(&scores).unwrap()).unwrap();
    let out = dir.path().join("eval");
    ok(&["eval", "--scores", s(&scores), "--labels", s(&golden()), "--out-dir", s(&out)]);
    let r = report(&out, "eval");
    assert_eq!(r.mean_auc, Some(1.0));
    assert!(r.aucs.values().all(|a| *a == Some(1.0)));

    ok(&["export-roc", "--scores", s(&scores), "--labels", s(&golden()), "--out-dir", s(&out)]);
    let roc = fs::read_to_string(out.join("roc_edema.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold\n"));
}

#[test]
fn train_twice_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["train", "--config", s(&cfg), "--out-dir", s(&a)]);
    ok(&["--config", s(&cfg), "train", "--out-dir", s(&b)]);
    for f in ["checkpoint.glck", "train_log.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ra, rb) = (report(&a, "train"), report(&b, "train"));
    assert_eq!(ra.config_hash, rb.config_hash);
    assert_eq!(ra.metrics, rb.metrics);
    assert_eq!(ra.seed, Some(3));
    assert_eq!(fs::read_to_string(a.join("train_log.jsonl")).unwrap().lines().count(), 40);

    let c = dir.path().join("c");
    ok(&["train", "--config", s(&cfg), "--seed", "4", "--out-dir", s(&c)]);
    assert_ne!(fs::read(a.join("checkpoint.glck")).unwrap(), fs::read(c.join("checkpoint.glck")).unwrap());
}

#[test]
fn paired_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d);
    let data = d.join("data");
    ok(&["synth", "--config", s(&cfg), "--out-dir", s(&data)]);
    let train = data.join("train.jsonl");
    let test = data.join("test.jsonl");
    assert!(data.join("images/train-0000.pgm").exists());

    let full = d.join("full");
    ok(&["train", "--config", s(&cfg), "--manifest", s(&train), "--out-dir", s(&full)]);
    // resuming a 20-step run up to 40 reproduces the 40-step checkpoint
    let half = d.join("half");
    ok(&["train", "--config", s(&cfg), "--manifest", s(&train), "--steps", "20", "--out-dir", s(&half)]);
    let resumed = d.join("resumed");
    let half_ckpt = half.join("checkpoint.glck");
    ok(&[
        "train", "--config", s(&cfg), "--manifest", s(&train), "--checkpoint", s(&half_ckpt), "--out-dir", s(&resumed),
    ]);
    let ckpt = full.join("checkpoint.glck");
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(resumed.join("checkpoint.glck")).unwrap());

    let zs = d.join("zs");
    ok(&["zeroshot", "--checkpoint", s(&ckpt), "--manifest", s(&test), "--out-dir", s(&zs)]);
    let zr = report(&zs, "zeroshot");
    assert_eq!(zr.aucs.values().flatten().count(), 5);
    let ev = d.join("ev");
    let scores = zs.join("zeroshot_scores.csv");
    ok(&["eval", "--scores", s(&scores), "--labels", s(&test), "--out-dir", s(&ev)]);
    assert_eq!(report(&ev, "eval").aucs, zr.aucs);

    let pr = d.join("probe");
    ok(&[
        "probe", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--manifest", s(&train), "--eval-manifest", s(&test),
        "--out-dir", s(&pr),
    ]);
    assert!(report(&pr, "probe").mean_auc.unwrap() > 0.5);
    assert!(pr.join("probe.json").exists());

    let emb = d.join("emb.glre");
    ok(&["export-embeddings", "--checkpoint", s(&ckpt), "--manifest", s(&test), "--modality", "text", "--out", s(&emb)]);
    assert_eq!(read_glre(&fs::read(&emb).unwrap()).unwrap().len(), 30);
}

#[test]
fn split_and_subset_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--kind", "mixed", "--seed", "1", "--out-dir", s(d)]);
    let manifest = d.join("manifest.jsonl");
    assert_eq!(load_manifest(&manifest).unwrap().len(), 3996);
    let a = d.join("a.json");
    let b = d.join("b.json");
    for out in [&a, &b] {
        ok(&["split", "--manifest", s(&manifest), "--split", "train=2552", "--split", "test=rest", "--seed", "5", "--out", s(out)]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let r = report(d, "split");
    assert_eq!((r.metrics["split.train"], r.metrics["split.test"]), (2552.0, 727.0));

    let sub = d.join("subset.json");
    ok(&["subset", "--manifest", s(&manifest), "--cap", "10", "--out", s(&sub)]);
    let r = report(d, "subset");
    for p in Pathology::ALL {
        assert!(r.metrics[&format!("{}.selected", p.key())] <= 10.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(glore(&["--help"]).status.code(), Some(0));
    assert_eq!(glore(&["label", "--bogus"]).status.code(), Some(1));
    assert_eq!(glore(&["frobnicate"]).status.code(), Some(1));

    let missing = d.join("nope.jsonl");
    let out = d.join("o.jsonl");
    let r = glore(&["label", "--manifest", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));

    let bad = d.join("bad.glck");
    fs::write(&bad, b"GLCK1 truncated").unwrap();
    let r = glore(&["zeroshot", "--checkpoint", s(&bad), "--manifest", s(&golden()), "--out-dir", s(d)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("format error"));

    let r = glore(&["split", "--manifest", s(&golden()), "--split", "train=100", "--out-dir", s(d)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("30 available"));

    let bad_cfg = d.join("cfg.json");
    fs::write(&bad_cfg, r#"{"train": {"learning_rate": -1.0}}"#).unwrap();
    assert_eq!(glore(&["train", "--config", s(&bad_cfg), "--out-dir", s(d)]).status.code(), Some(1));
}
