//! Samples noisy answers from the mock client, scores them with BLEU and
//! assembles an online/offline DPO corpus.
//!
//!     cargo run --example preference_pairs

use std::sync::Arc;

use iealign::answer::serialize_answer_ordered;
use iealign::assets::eval_format;
use iealign::client::{Client, MockBackend, MockPolicy};
use iealign::fixtures;
use iealign::prefpairs::{assemble_dpo_corpus, build_offline_pair, build_online_pair, score_samples, DpoPlan};
use iealign::TaskKind;

fn main() -> iealign::Result<()> {
    let mock = Arc::new(MockBackend::new(MockPolicy::NoisyGold(0.5), 4));
    let client = Client::new(mock.clone());
    let plan = DpoPlan {
        target_size: 60,
        ..Default::default()
    };
    let mut candidates = Vec::new();
    for inst in fixtures::dataset(TaskKind::Re, "demo-re", 80, 0.0, 4) {
        let gold = serialize_answer_ordered(&inst.gold, eval_format(inst.task))?;
        let prompt = format!("Extract relations.\nText: {}", inst.text);
        mock.register(&prompt, &gold);
        let scored = score_samples(&inst.id, &inst.dataset, &prompt, &gold, &client, plan.samples_per_instance, plan.sample_temperature)?;
        candidates.extend(build_online_pair(&scored, plan.gap_threshold));
        candidates.extend(build_offline_pair(&scored, plan.gap_threshold));
    }
    let corpus = assemble_dpo_corpus(candidates, &plan)?;
    println!("{}", serde_json::to_string_pretty(&corpus.summary)?);
    if let Some(p) = corpus.pairs.first() {
        println!("\nchosen ({:.2}):   {}\nrejected ({:.2}): {}", p.preferred_score, p.preferred, p.dispreferred_score, p.dispreferred);
    }
    Ok(())
}
