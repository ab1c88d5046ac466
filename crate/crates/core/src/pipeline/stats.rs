use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answer::{parse_answer, ParseMode};
use crate::error::Result;
use crate::model::AlignmentExample;
use crate::prompt::schema_section_labels;
use crate::text::{TokenCounter, WhitespaceTokenizer};

/// Width of the token-length histogram buckets.
pub const LENGTH_BUCKET: usize = 256;
const MAX_LISTED: usize = 20;

/// Composition report of an SFT corpus.
///
/// Demonstration and CoT rates are over all examples; guideline and symbol
/// rates are over examples that show a schema (closed IE).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub total: usize,
    /// Lines that could not be read as examples (skipped).
    pub malformed: usize,
    pub per_task: BTreeMap<String, usize>,
    pub per_dataset: BTreeMap<String, usize>,
    pub with_schema: usize,
    pub with_demos: usize,
    pub with_guidelines: usize,
    pub symbolized: usize,
    pub guidelines_and_symbols: usize,
    pub with_cot: usize,
    pub demo_rate: f64,
    pub guideline_rate: f64,
    pub symbol_rate: f64,
    pub joint_guideline_symbol_rate: f64,
    pub cot_rate: f64,
    /// Number of demonstrations -> examples (examples without any omitted).
    pub demo_counts: BTreeMap<usize, usize>,
    pub cot_per_task: BTreeMap<String, usize>,
    /// Bucket start (whitespace tokens of prompt + output) -> examples.
    pub length_histogram: BTreeMap<usize, usize>,
    /// Answer labels missing from the prompt's schema section.
    pub label_closure_violations: usize,
    /// Answers that do not parse under their own format.
    pub unparseable_answers: usize,
    /// Up to 20 offending instance ids.
    pub violating_ids: Vec<String>,
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Checks that every answer label is listed in the schema section. `Err`
/// when the answer does not parse.
fn closure_ok(ex: &AlignmentExample) -> std::result::Result<bool, ()> {
    if !ex.task.is_closed() {
        return Ok(true);
    }
    let parsed = parse_answer(&ex.output, &ex.format, None, ParseMode::Strict).map_err(|_| ())?;
    let Some(shown) = schema_section_labels(&ex.prompt, ex.schema_view.as_ref()) else {
        return Ok(parsed.extraction.is_empty());
    };
    Ok(parsed.extraction.labels().iter().all(|l| shown.contains(l)))
}

impl Composition {
    pub fn from_examples(examples: &[AlignmentExample]) -> Self {
        let mut c = Composition::default();
        for ex in examples {
            c.add(ex);
        }
        c.finish();
        c
    }

    fn add(&mut self, ex: &AlignmentExample) {
        self.total += 1;
        *self.per_task.entry(ex.task.to_string()).or_default() += 1;
        *self.per_dataset.entry(ex.dataset.clone()).or_default() += 1;
        if let Some(v) = &ex.schema_view {
            self.with_schema += 1;
            self.with_guidelines += v.guidelines_included as usize;
            self.symbolized += v.is_symbolized() as usize;
            self.guidelines_and_symbols += (v.guidelines_included && v.is_symbolized()) as usize;
        }
        if !ex.demonstrations.is_empty() {
            self.with_demos += 1;
            *self.demo_counts.entry(ex.demonstrations.len()).or_default() += 1;
        }
        if ex.cot.is_some() {
            self.with_cot += 1;
            *self.cot_per_task.entry(ex.task.to_string()).or_default() += 1;
        }
        let tokens = WhitespaceTokenizer.count(&ex.prompt) + WhitespaceTokenizer.count(&ex.output);
        *self.length_histogram.entry(tokens / LENGTH_BUCKET * LENGTH_BUCKET).or_default() += 1;
        let bad = match closure_ok(ex) {
            Ok(true) => false,
            Ok(false) => {
                self.label_closure_violations += 1;
                true
            }
            Err(()) => {
                self.unparseable_answers += 1;
                true
            }
        };
        if bad && self.violating_ids.len() < MAX_LISTED {
            self.violating_ids.push(ex.instance_id.clone());
        }
    }

    fn finish(&mut self) {
        self.demo_rate = rate(self.with_demos, self.total);
        self.cot_rate = rate(self.with_cot, self.total);
        self.guideline_rate = rate(self.with_guidelines, self.with_schema);
        self.symbol_rate = rate(self.symbolized, self.with_schema);
        self.joint_guideline_symbol_rate = rate(self.guidelines_and_symbols, self.with_schema);
    }
}

/// Composition of a corpus given as JSON-lines text; malformed lines are
/// counted and skipped.
pub fn stats(jsonl: &str) -> Composition {
    let mut c = Composition::default();
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<AlignmentExample>(line) {
            Ok(ex) => c.add(&ex),
            Err(_) => c.malformed += 1,
        }
    }
    c.finish();
    c
}

pub fn stats_file(path: &Path) -> Result<Composition> {
    let src = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(stats(&src))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_malformed() {
        assert_eq!(stats(""), Composition::default());
        let c = stats("{\"nope\": 1}\n\n");
        assert_eq!((c.total, c.malformed), (0, 1));
    }
}
