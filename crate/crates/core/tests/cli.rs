use std::path::Path;
use std::process::{Command, Output};

use iealign::answer::serialize_answer_ordered;
use iealign::assets::eval_format;
use iealign::augment::{Decision, GenCandidate};
use iealign::pipeline::Prediction;
use iealign::{IEInstance, TaskKind};

const CONFIG: &str = r#"
seed = 7
out = "out"

[[synthetic]]
task = "NER"
size = 120
na_fraction = 0.3

[[synthetic]]
task = "RC"
size = 120

[backend]
kind = "mock"
policy = { noisy_gold = 0.5 }
"#;

fn iealign(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iealign"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn build_stats_and_dpo() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    assert!(iealign(dir.path(), &["build-sft", "--config", "run.toml"]).status.success());
    let stats = json(&iealign(dir.path(), &["stats", "out/sft.jsonl"]));
    assert_eq!(stats["label_closure_violations"], 0);
    assert_eq!(stats["unparseable_answers"], 0);
    assert!(stats["total"].as_u64().unwrap() > 100);

    let out = iealign(dir.path(), &["build-dpo", "--config", "run.toml", "--out", "dpo"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("dpo/dpo.jsonl").exists());
    assert!(dir.path().join("dpo/dpo.manifest.json").exists());
}

#[test]
fn exit_codes_separate_config_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(iealign(dir.path(), &["build-sft", "--config", "missing.toml"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nunknown_key = true\n").unwrap();
    assert_eq!(iealign(dir.path(), &["build-sft", "--config", "bad.toml"]).status.code(), Some(2));

    std::fs::write(dir.path().join("gold.jsonl"), "{\"id\": 3}\n").unwrap();
    std::fs::write(dir.path().join("pred.jsonl"), "").unwrap();
    let args = ["evaluate", "--pred", "pred.jsonl", "--gold", "gold.jsonl", "--task", "NER"];
    assert_eq!(iealign(dir.path(), &args).status.code(), Some(1));
    let args = ["evaluate", "--pred", "pred.jsonl", "--gold", "gold.jsonl", "--task", "NER", "--format", "nope"];
    assert_eq!(iealign(dir.path(), &args).status.code(), Some(2));
}

#[test]
fn ingest_then_evaluate_gold_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let out = iealign(dir.path(), &["ingest", "--config", "run.toml", "--out", "ingested"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let gold_path = std::fs::read_dir(dir.path().join("ingested"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap() == "synth-ner.jsonl")
        .unwrap();
    let gold: Vec<IEInstance> = iealign::jsonl::read(&gold_path).unwrap();
    let spec = eval_format(TaskKind::Ner);
    let preds: Vec<Prediction> = gold
        .iter()
        .map(|g| Prediction {
            id: g.id.clone(),
            output: serialize_answer_ordered(&g.gold, spec).unwrap(),
        })
        .collect();
    iealign::jsonl::write(&dir.path().join("pred.jsonl"), &preds).unwrap();
    let report = json(&iealign(
        dir.path(),
        &["evaluate", "--pred", "pred.jsonl", "--gold", gold_path.to_str().unwrap(), "--task", "NER"],
    ));
    assert_eq!(report["f1"], 1.0);
    assert_eq!(report["parse_failures"], 0);
}

#[test]
fn review_generate_then_accept() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["review", "--candidates", "c.jsonl", "--generate", "descriptions", "--task", "NER", "--count", "3", "--backend", "echo"];
    assert!(iealign(dir.path(), &gen).status.success());
    let cands: Vec<GenCandidate> = iealign::jsonl::read(&dir.path().join("c.jsonl")).unwrap();
    assert_eq!(cands.len(), 3);
    let decisions: Vec<Decision> = cands
        .iter()
        .map(|c| Decision { id: c.id.clone(), accept: true, note: None })
        .collect();
    iealign::jsonl::write(&dir.path().join("d.jsonl"), &decisions).unwrap();
    let apply = ["review", "--candidates", "c.jsonl", "--decisions", "d.jsonl", "--pools", "pools"];
    let summary = json(&iealign(dir.path(), &apply));
    assert_eq!(summary["accepted"], 3);
    assert_eq!(std::fs::read_to_string(dir.path().join("review_audit.jsonl")).unwrap().lines().count(), 3);
}
