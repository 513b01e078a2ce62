use std::path::Path;
use std::process::{Command, Output};

use slotcast::phylog::corpus::Corpus;
use slotcast::phylog::ChannelKind;
use slotcast::trafficgen::corpus_stats;

const SAMPLE_LINE: &str = "2024-11-26T08:33:52.600134 [PHY] [265.8] PDCCH: format=1_0 rnti=0x4601 / PDSCH: rnti=0x4601 prb=[0, 96) symb=[1, 14)\n";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slotcast"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_corpus(path: &Path) -> Corpus {
    Corpus::from_text(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ingest_single_record() {
    let dir = tempfile::tempdir().unwrap();
    let (log, out) = (dir.path().join("phy.log"), dir.path().join("c.txt"));
    std::fs::write(&log, SAMPLE_LINE).unwrap();
    let o = run(&["ingest", "--input", p(&log), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 slots, 21 tokens"));
    assert_eq!(read_corpus(&out).records.len(), 1);
    assert!(dir.path().join("c.txt.config").exists());
}

#[test]
fn ingest_empty_log_warns() {
    let dir = tempfile::tempdir().unwrap();
    let (log, out) = (dir.path().join("empty.log"), dir.path().join("c.txt"));
    std::fs::write(&log, "").unwrap();
    let o = run(&["ingest", "--input", p(&log), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(read_corpus(&out).records.is_empty());
}

#[test]
fn ingest_garbage_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (log, out) = (dir.path().join("bad.log"), dir.path().join("c.txt"));
    std::fs::write(&log, "t [PHY] [265.8] PXSCH: rnti=0x4601\n").unwrap();
    let o = run(&["ingest", "--input", p(&log), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn missing_traffic_entry() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let o = run(&[
        "generate",
        "--ues",
        "3",
        "--traffic",
        "dl,ul",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing traffic entry for UE 2"));
}

#[test]
fn unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.config");
    std::fs::write(&cfg, "# typo below\nsoltz = 10\n").unwrap();
    let o = run(&[
        "generate",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("c.txt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_scenario_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let o = run(&["generate", "--out", p(&out)]);
    assert!(o.status.success());
    let tokens = corpus_stats(&read_corpus(&out).records).tokens;
    assert!((200_000..=300_000).contains(&tokens), "{tokens} tokens");
}

#[test]
fn mixed_scenario_uplink_share() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let o = run(&[
        "generate",
        "--ues",
        "3",
        "--traffic",
        "dl,ul,bi",
        "--seed",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    let stats = corpus_stats(&read_corpus(&out).records);
    let pusch = stats.channel_frequencies[&ChannelKind::Pusch];
    assert!((pusch - 0.2794).abs() <= 0.10, "P(PUSCH) = {pusch}");
}

/// Small corpus + briefly trained checkpoint shared by the model-facing tests.
fn trained(dir: &Path) -> (String, String) {
    let (corpus, ckpt) = (dir.join("c.txt"), dir.join("m.ckpt"));
    assert!(run(&[
        "generate",
        "--slots",
        "300",
        "--seed",
        "4",
        "--out",
        p(&corpus)
    ])
    .status
    .success());
    let o = run(&[
        "train",
        "--corpus",
        p(&corpus),
        "--out",
        p(&ckpt),
        "--context",
        "64",
        "--steps",
        "10",
        "--eval-interval",
        "5",
        "--val-windows",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loss = std::fs::read_to_string(dir.join("m.ckpt.loss.csv")).unwrap();
    assert!(loss.starts_with("step,train_loss,val_loss,lr\n"));
    assert_eq!(loss.lines().count(), 11);
    (p(&corpus).to_string(), p(&ckpt).to_string())
}

#[test]
fn predict_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = trained(dir.path());
    let probs = dir.path().join("probs.csv");
    let args = [
        "predict",
        "--checkpoint",
        &ckpt,
        "--corpus",
        &corpus,
        "--slot",
        "50",
        "--seed",
        "9",
        "--probs",
        p(&probs),
    ];
    let a = run(&args);
    let first_probs = std::fs::read(&probs).unwrap();
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first_probs, std::fs::read(&probs).unwrap());
    let out = String::from_utf8(a.stdout).unwrap();
    assert!(out.starts_with("predicted: 0 :"), "{out}");
    assert!(out.contains("reference:"));
    let csv = String::from_utf8(first_probs).unwrap();
    assert!(csv.starts_with("sampling_step,token_id,token,probability\n"));
    // rows of 32 per sampling step, each summing to one
    let rows: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len() % 32, 0);
    for step in rows.chunks(32) {
        assert!((step.iter().sum::<f64>() - 1.0).abs() < 1e-4);
    }
}

#[test]
fn eval_rejects_tiny_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = trained(dir.path());
    let (log, tiny) = (dir.path().join("tiny.log"), dir.path().join("tiny.txt"));
    let lines: String = (0..8).map(|k| format!("t [PHY] [3.{k}]\n")).collect();
    std::fs::write(&log, lines).unwrap();
    assert!(run(&["ingest", "--input", p(&log), "--out", p(&tiny)])
        .status
        .success());
    assert_eq!(read_corpus(&tiny).records.len(), 8);
    let o = run(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--corpus",
        p(&tiny),
        "--out-dir",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = trained(dir.path());
    let bytes = std::fs::read(&ckpt).unwrap();
    std::fs::write(&ckpt, &bytes[..bytes.len() - 3]).unwrap();
    let o = run(&[
        "predict",
        "--checkpoint",
        &ckpt,
        "--corpus",
        &corpus,
        "--slot",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
