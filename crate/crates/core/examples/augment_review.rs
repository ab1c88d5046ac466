//! Grows a task-description pool and proposes format templates with a
//! client, then passes the candidates through the review queue.
//!
//!     cargo run --example augment_review

use std::sync::Arc;

use iealign::augment::{generate_format_templates, grow_task_descriptions, review, CotRequest, Decision};
use iealign::client::{Client, MockBackend, MockPolicy};
use iealign::prompt::DescriptionPool;
use iealign::TaskKind;

fn main() -> iealign::Result<()> {
    let client = Client::new(Arc::new(MockBackend::new(MockPolicy::EchoGold, 0)));
    let mut pool = DescriptionPool::bundled(TaskKind::Ner);
    let mut report = grow_task_descriptions(&pool, 4, &client, 8)?;
    println!("{} description candidates from {} calls", report.candidates.len(), report.calls);

    // Accept every other candidate.
    let decisions: Vec<Decision> = report
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| Decision { id: c.id.clone(), accept: i % 2 == 0, note: None })
        .collect();
    let outcome = review(&mut report.candidates, &decisions)?;
    let added = pool.absorb(&outcome.accepted);
    println!("accepted {}, rejected {}, pool now {} ({} added)", outcome.accepted.len(), outcome.rejected.len(), pool.len(), added);

    let script = "(1) Instruction: Find every entity in {text} and give its type.\n\
                  (2) Fail output: None\n\
                  (3) Input template: {text}\n\
                  (4) Answer template: ({entity}; {type})";
    let scripted = Client::new(Arc::new(MockBackend::new(MockPolicy::FixedText(script.into()), 0)));
    let formats = generate_format_templates(TaskKind::Ner, 1, &scripted, 8)?;
    for c in &formats.candidates {
        println!("format candidate {:?}: {:?}", c.status, c.format.as_ref().map(|f| &f.answer_template));
    }

    let req = CotRequest::new("Text: Obama visited Paris.", "[Answer]: Obama: PER; Paris: LOC;", 8);
    println!("\nexplanation request ({} words):\n{}", req.words_limit, req.prompt());
    Ok(())
}
