//! Serializes one extraction under every bundled format of its task and
//! parses it back.
//!
//!     cargo run --example answer_formats [task]

use iealign::answer::{parse_answer, serialize_answer, ParseMode};
use iealign::assets::{eval_format, formats_for};
use iealign::fixtures;
use iealign::TaskKind;

fn main() -> iealign::Result<()> {
    let task: TaskKind = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(TaskKind::Re);
    let mut rng = iealign::seed::rng(5);
    let gold = std::iter::repeat_with(|| fixtures::random_extraction(task, &mut rng, 3, true))
        .find(|g| g.len() >= 2)
        .expect("non-empty draw");
    println!("gold: {gold:?}\n");
    for spec in formats_for(task).iter().chain(std::iter::once(eval_format(task))) {
        let text = serialize_answer(&gold, spec, 1)?;
        let back = parse_answer(&text, spec, None, ParseMode::Strict)?;
        let ok = if back.extraction.same_items(&gold) { "ok" } else { "MISMATCH" };
        println!("[{} / {:?}] {ok}\n{text}\n", spec.name, spec.family);
    }

    // Model outputs are parsed leniently at evaluation time.
    let noisy = "[Answer]: Paris: LOC; Obama PER; Berlin: LOC;";
    let out = parse_answer(noisy, eval_format(TaskKind::Ner), None, ParseMode::Lenient)?;
    println!("lenient parse of {noisy:?}: {:?}, {} diagnostics", out.extraction, out.diagnostics.len());
    Ok(())
}
