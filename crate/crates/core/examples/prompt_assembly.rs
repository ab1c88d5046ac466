//! Builds one instruction by hand: task description, sampled schema view
//! (subset, order, guidelines, symbols), demonstrations and format
//! description.
//!
//!     cargo run --example prompt_assembly [seed]

use iealign::answer::serialize_answer;
use iealign::assets::formats_for;
use iealign::fixtures;
use iealign::prompt::{
    assemble_input, augment_schema, sample_demonstrations, sample_task_description, DemoOptions,
    DescriptionPool, SchemaAugmentOptions,
};
use iealign::TaskKind;

fn main() -> iealign::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let pool = fixtures::dataset(TaskKind::Ner, "demo-ner", 30, 0.1, 9);
    let inst = pool.iter().find(|i| i.gold.len() >= 2).expect("an instance with entities");

    let desc = sample_task_description(&DescriptionPool::bundled(TaskKind::Ner), seed)?;
    let schema = inst.schema.as_ref().expect("NER instances carry a schema");
    let opts = SchemaAugmentOptions {
        guideline_rate: 0.5,
        symbol_rate: 0.5,
        ..Default::default()
    };
    let (view, gold) = augment_schema(schema, &inst.gold, &opts, seed)?;
    let format = &formats_for(TaskKind::Ner)[seed as usize % formats_for(TaskKind::Ner).len()];
    let demos = DemoOptions { rate: 1.0, k_min: 1, k_max: 3 };
    let draw = sample_demonstrations(&inst.id, inst.task, &pool, format, Some(&view), &demos, seed)?;

    let prompt = assemble_input(inst, Some(&view), &desc, format, &draw.demos)?;
    println!("{prompt}\n");
    println!("--- gold before restriction to the shown labels ---\n{:?}\n", inst.gold);
    println!("--- expected output ({}) ---", format.name);
    println!("{}", serialize_answer(&gold, format, seed)?);
    Ok(())
}
