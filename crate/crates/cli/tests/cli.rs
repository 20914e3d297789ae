use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use cpword::fixtures::{matchness_corpus, overfit_songs};
use cpword::symbolic::{serialize_json_leadsheet, serialize_json_song, LeadSheet, Ranges};

fn cpword(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpword")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cpword(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn song_dir(root: &Path) -> PathBuf {
    let dir = root.join("songs");
    fs::create_dir_all(&dir).unwrap();
    for (name, song) in overfit_songs(&Ranges::default()) {
        fs::write(dir.join(format!("{name}.json")), serialize_json_song(&song)).unwrap();
    }
    dir
}

fn run_config(root: &Path, steps: u64) -> PathBuf {
    let path = root.join("run.json");
    let cfg = serde_json::json!({
        "train": {"adam": {"lr": 3e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "clip": 1.0},
                  "batch_size": 4, "steps": steps, "seed": 0, "checkpoint_every": 50},
        "max_steps": 200
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

/// Encodes the overfit songs and trains on them; returns the training dir.
fn trained(root: &Path, task: &str, steps: u64) -> PathBuf {
    let songs = song_dir(root);
    let corpus = root.join(format!("corpus-{task}"));
    let run = root.join(format!("train-{task}"));
    let cfg = run_config(root, steps);
    ok(&["--task", task, "--out", s(&corpus), "encode", s(&songs)]);
    ok(&["--task", task, "--config", s(&cfg), "--out", s(&run), "train", "--corpus", s(&corpus)]);
    run
}

fn short_lead(lead: &LeadSheet) -> LeadSheet {
    let mut l = lead.clone();
    l.n_bars = 4;
    l.melody.retain(|m| m.onset.bar < 4);
    l.chords.retain(|c| c.onset.bar < 4);
    l
}

#[test]
fn encode_writes_records_and_stats() {
    let tmp = TempDir::new().unwrap();
    let songs = song_dir(tmp.path());
    let out = tmp.path().join("enc");
    let stdout = ok(&["--out", s(&out), "encode", s(&songs)]);
    assert!(stdout.contains("4 records"), "{stdout}");
    let bin = fs::read(out.join("corpus.cp.bin")).unwrap();
    assert_eq!(cpword::corpus::read_records(&bin, 7).unwrap().len(), 4);
    let side = json(&out.join("corpus.cp.json"));
    assert_eq!(side["names"].as_array().unwrap().len(), 4);
    assert_eq!(side["width"], 7);
    let stats = json(&out.join("stats.json"));
    assert!(stats["inequality_violations"].as_array().unwrap().is_empty());
    assert!(out.join("diagnostics.json").exists());

    let remi = tmp.path().join("remi");
    ok(&["--repr", "remi", "--out", s(&remi), "encode", s(&songs)]);
    assert_eq!(json(&remi.join("corpus.remi.json"))["width"], 1);
}

#[test]
fn encode_skips_broken_files() {
    let tmp = TempDir::new().unwrap();
    let songs = song_dir(tmp.path());
    fs::write(songs.join("broken.mid"), b"not midi").unwrap();
    let out = tmp.path().join("enc");
    let res = cpword(&["--out", s(&out), "encode", s(&songs)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("broken.mid"));
    assert_eq!(json(&out.join("corpus.cp.json"))["names"].as_array().unwrap().len(), 4);
}

#[test]
fn empty_directory_warns() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let res = cpword(&["--out", s(&tmp.path().join("o")), "encode", s(&empty)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no songs"));
    let res = cpword(&["--out", s(&tmp.path().join("e")), "evaluate", s(&empty), s(&empty)]);
    assert!(res.status.success());
}

#[test]
fn stats_reports_inequality() {
    let tmp = TempDir::new().unwrap();
    let songs = song_dir(tmp.path());
    for task in ["unconditional", "conditional"] {
        let stdout = ok(&["--task", task, "stats", s(&songs)]);
        assert!(stdout.contains("4/4 songs"), "{stdout}");
    }
}

#[test]
fn training_lowers_loss_and_resumes_exactly() {
    let tmp = TempDir::new().unwrap();
    let run = trained(tmp.path(), "unconditional", 200);
    let report = json(&run.join("train.json"));
    let (initial, last) = (report["initial_nll"].as_f64().unwrap(), report["final_nll"].as_f64().unwrap());
    assert!(last < initial, "{initial} -> {last}");
    let log = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(log.starts_with("step,family,"));
    assert_eq!(log.lines().count(), 201);
    assert!(run.join("step_000100.ckpt").exists());

    // 100 steps, then 100 more from the checkpoint
    let cfg = run_config(tmp.path(), 200);
    let corpus = tmp.path().join("corpus-unconditional");
    let resumed = tmp.path().join("resumed");
    ok(&[
        "--config",
        s(&cfg),
        "--out",
        s(&resumed),
        "train",
        "--corpus",
        s(&corpus),
        "--resume",
        s(&run.join("step_000100.ckpt")),
    ]);
    let a = fs::read(run.join("final.ckpt")).unwrap();
    let b = fs::read(resumed.join("final.ckpt")).unwrap();
    let v = cpword::vocab::Vocabulary::new(cpword::vocab::Task::Unconditional);
    let ca = cpword::neural::checkpoint::load(&a, &v).unwrap();
    let cb = cpword::neural::checkpoint::load(&b, &v).unwrap();
    assert_eq!(ca.header.step, cb.header.step);
    let bytes = |c: &cpword::neural::checkpoint::Checkpoint| {
        cpword::neural::checkpoint::save(&c.model, &v, c.header.step, c.adam.as_ref(), Value::Null)
    };
    assert!(bytes(&ca) == bytes(&cb), "resumed weights differ");
}

#[test]
fn paper_preset_dry_run() {
    let stdout = ok(&["--preset", "paper", "train", "--dry-run"]);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["parameters"].as_u64().unwrap() > 10_000_000);
    assert!(v["memory_bytes"].as_u64().unwrap() > 0);
    assert_eq!(v["model"]["layers"], 12);
}

#[test]
fn generation_is_deterministic_and_distinct() {
    let tmp = TempDir::new().unwrap();
    let run = trained(tmp.path(), "unconditional", 120);
    let ckpt = run.join("final.ckpt");
    let gen = |dir: &str| {
        let out = tmp.path().join(dir);
        ok(&["--seed", "3", "--out", s(&out), "generate", "--checkpoint", s(&ckpt), "-n", "3", "--max-steps", "160"]);
        out
    };
    let (a, b) = (gen("g1"), gen("g2"));
    let files: Vec<Vec<u8>> = (0..3).map(|i| fs::read(a.join(format!("sample_{i:03}.mid"))).unwrap()).collect();
    for (i, f) in files.iter().enumerate() {
        assert_eq!(f, &fs::read(b.join(format!("sample_{i:03}.mid"))).unwrap());
        assert!(a.join(format!("sample_{i:03}.json")).exists());
        assert!(a.join(format!("sample_{i:03}.cp")).exists());
    }
    assert!(files[0] != files[1] || files[1] != files[2], "all samples identical");
    assert_eq!(json(&a.join("generate.json")), json(&b.join("generate.json")));

    let res = cpword(&["--task", "conditional", "--out", s(&a), "generate", "--checkpoint", s(&ckpt)]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn conditional_generation_keeps_lead() {
    let tmp = TempDir::new().unwrap();
    let run = trained(tmp.path(), "conditional", 20);
    let r = Ranges::default();
    let leads = tmp.path().join("leads");
    fs::create_dir_all(&leads).unwrap();
    let mut written = Vec::new();
    for (name, lead, _) in matchness_corpus(2, 1, &r) {
        let short = short_lead(&lead);
        fs::write(leads.join(format!("{name}.json")), serialize_json_leadsheet(&short)).unwrap();
        written.push((name, short));
    }
    let out = tmp.path().join("gen");
    let ckpt = run.join("final.ckpt");
    let res = cpword(&["--out", s(&out), "generate", "--checkpoint", s(&ckpt)]);
    assert_eq!(res.status.code(), Some(1), "condition is required");
    ok(&["--out", s(&out), "generate", "--checkpoint", s(&ckpt), "--condition", s(&leads), "--max-steps", "120"]);

    let v = cpword::vocab::Vocabulary::new(cpword::vocab::Task::Conditional);
    for (name, lead) in written {
        let bytes = fs::read(out.join(format!("{name}_000.cp"))).unwrap();
        let rows = cpword::corpus::read_records(&bytes, 8).unwrap().remove(0);
        let cp = cpword::cp::CpSeq::from_id_rows(&rows, &v).unwrap();
        let remi = cpword::cp::ungroup_from_cp(&cp, &v).unwrap();
        let (back, _) = cpword::remi::deinterleave_conditional(&remi, &v).unwrap();
        assert_eq!(back, lead);
        assert!(out.join(format!("{name}_000.mid")).exists());
    }
}

#[test]
fn evaluate_separates_true_pairs() {
    let tmp = TempDir::new().unwrap();
    let r = Ranges::default();
    let (leads, gen) = (tmp.path().join("leads"), tmp.path().join("gen"));
    fs::create_dir_all(&leads).unwrap();
    fs::create_dir_all(&gen).unwrap();
    for (name, lead, song) in matchness_corpus(12, 4, &r) {
        fs::write(leads.join(format!("{name}.json")), serialize_json_leadsheet(&lead)).unwrap();
        fs::write(gen.join(format!("{name}_000.json")), serialize_json_song(&song)).unwrap();
    }
    fs::write(gen.join("stray.json"), serialize_json_song(&overfit_songs(&r)[0].1)).unwrap();
    let out = tmp.path().join("eval");
    let res = cpword(&["--out", s(&out), "evaluate", s(&leads), s(&gen)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("stray.json"));
    let report = json(&out.join("report.json"));
    let rows = report["report"]["rows"].as_array().unwrap();
    let field = |i: usize, k: &str| rows[i][k].as_f64().unwrap();
    assert_eq!(rows[0]["songs"], 12);
    assert!(field(0, "melody_mean") >= 0.9 && field(0, "chord_mean") >= 0.9);
    assert!(field(0, "melody_mean") > field(1, "melody_mean"));
    assert!(field(0, "chord_mean") > field(1, "chord_mean"));
    assert_eq!(report["unpaired_generated"][0], "stray.json");
}

#[test]
fn encoding_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let songs = song_dir(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--out", s(&a), "encode", s(&songs)]);
    ok(&["--out", s(&b), "encode", s(&songs)]);
    for f in ["corpus.cp.bin", "corpus.cp.json", "stats.json", "diagnostics.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(cpword(&["--help"]).status.code(), Some(0));
    assert_eq!(cpword(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cpword(&["--task", "sideways", "inspect-vocab"]).status.code(), Some(1));
    assert_eq!(cpword(&["--repr", "abc", "encode", s(tmp.path())]).status.code(), Some(1));
    assert_eq!(cpword(&["encode", s(&tmp.path().join("missing"))]).status.code(), Some(2));
    let bad = tmp.path().join("bad.ckpt");
    fs::write(&bad, b"garbage").unwrap();
    assert_eq!(cpword(&["generate", "--checkpoint", s(&bad)]).status.code(), Some(3));
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"sed": 1}"#).unwrap();
    assert_eq!(cpword(&["--config", s(&cfg), "inspect-vocab"]).status.code(), Some(1));
}

#[test]
fn inspect_vocab_prints_manifest_and_hash() {
    let stdout = ok(&["inspect-vocab"]);
    let hash = cpword::vocab::Vocabulary::new(cpword::vocab::Task::Unconditional).hash();
    assert!(stdout.contains(&format!("hash: {hash}")));
    let manifest = &stdout[..stdout.rfind("hash:").unwrap()];
    assert!(serde_json::from_str::<Value>(manifest).is_ok());
}
