//! NA filtering, proportional mixing with a per-dataset cap, and mixing
//! with general instruction data.
//!
//!     cargo run --example ingest_and_mix

use std::collections::BTreeMap;

use iealign::fixtures;
use iealign::ingest::{filter_na, mix_general, mix_proportional, Mixed, MixturePlan};
use iealign::TaskKind;

fn main() -> iealign::Result<()> {
    let mut datasets = BTreeMap::new();
    for (name, task, n) in [("conll", TaskKind::Ner, 3000), ("tacred", TaskKind::Rc, 800), ("ace-ed", TaskKind::Ed, 1500)] {
        let raw = fixtures::dataset(task, name, n, 0.4, 1);
        let na = raw.iter().filter(|i| i.is_na).count();
        let kept = filter_na(raw, 0.2, 1)?;
        println!("{name:8} read {n:5}  NA {na:5}  kept {:5}", kept.len());
        datasets.insert(name.to_string(), kept);
    }

    let plan = MixturePlan {
        cap: 1000,
        seed: 1,
        ..Default::default()
    };
    let mixture = mix_proportional(&datasets, &plan)?;
    for s in &mixture.stats {
        println!("{:8} contributes {}", s.dataset, s.sampled);
    }

    let ie: Vec<String> = mixture.instances.iter().map(|i| i.id.clone()).collect();
    let general: Vec<String> = fixtures::general_records(20_000, 2).into_iter().map(|g| g.id).collect();
    let mixed = mix_general(&ie, &general, 0.2, 3)?;
    let n_ie = mixed.iter().filter(|m| matches!(m, Mixed::Ie(_))).count();
    println!("final mixture: {} rows, {:.3} IE", mixed.len(), n_ie as f64 / mixed.len() as f64);
    Ok(())
}
