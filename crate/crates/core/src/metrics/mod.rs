//! Scoring: exact-match F1 for closed IE, tuple F1 for open IE, ROUGE-L and
//! soft header matching for on-demand IE, smoothed sentence BLEU for
//! preference scoring.
//!
//! BLEU, ROUGE-L and the soft matchers share the tokenizer in
//! [`crate::text::metric_tokens`].

mod bleu;
mod matching;
mod rouge;

use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

pub use bleu::{sentence_bleu_m3, sentence_bleu_m3_tokens};
pub use matching::{
    assign_exhaustive, assign_greedy, dice, header_soft_f1, header_soft_f1_with, openie_tuple_f1,
    tuple_similarity, Assignment, EXHAUSTIVE_LIMIT,
};
pub use rouge::{lcs_len, rouge_l_f1, rouge_l_f1_tokens};

use crate::answer::markdown::parse_table;
use crate::error::{Error, Result};
use crate::model::Extraction;

/// Precision / recall / F1 with the counts they come from. Counts are
/// fractional for the soft matchers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl Prf {
    pub fn from_counts(tp: f64, fp: f64, fn_: f64) -> Self {
        Prf {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_),
        }
    }

    /// Micro aggregation: sums counts, then recomputes the ratios.
    pub fn micro<'a>(parts: impl IntoIterator<Item = &'a Prf>) -> Prf {
        parts.into_iter().fold(Prf::default(), |acc, p| acc + *p)
    }
}

impl Add for Prf {
    type Output = Prf;

    fn add(self, o: Prf) -> Prf {
        Prf::from_counts(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for Prf {
    fn add_assign(&mut self, o: Prf) {
        *self = *self + o;
    }
}

/// Exact-match scoring: tp is the size of the multiset intersection of
/// the two item lists, every slot compared by string equality.
pub fn exact_match_f1(pred: &Extraction, gold: &Extraction) -> Result<Prf> {
    if pred.task() != gold.task() {
        return Err(Error::TaskMismatch {
            expected: gold.task().to_string(),
            found: pred.task().to_string(),
        });
    }
    let p = pred.metric_items();
    let g = gold.metric_items();
    let mut counts: HashMap<&Vec<String>, usize> = HashMap::new();
    for item in &g {
        *counts.entry(item).or_default() += 1;
    }
    let mut tp = 0usize;
    for item in &p {
        if let Some(c) = counts.get_mut(item).filter(|c| **c > 0) {
            *c -= 1;
            tp += 1;
        }
    }
    Ok(Prf::from_counts(
        tp as f64,
        (p.len() - tp) as f64,
        (g.len() - tp) as f64,
    ))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OnDemandScore {
    pub header: Prf,
    pub content_rouge_l: f64,
}

/// Scores a predicted markdown table against the gold table: soft header
/// F1, and ROUGE-L over all cells joined row-major.
pub fn ondemand_score(pred: &str, gold: &str) -> OnDemandScore {
    let (p, g) = (parse_table(pred), parse_table(gold));
    let headers = |t: &Option<crate::answer::markdown::Table>| {
        t.as_ref().map(|t| t.headers.clone()).unwrap_or_default()
    };
    let content = |t: &Option<crate::answer::markdown::Table>| {
        t.as_ref().map(|t| t.content_text()).unwrap_or_default()
    };
    OnDemandScore {
        header: header_soft_f1(&headers(&p), &headers(&g), 0.5),
        content_rouge_l: rouge_l_f1(&content(&p), &content(&g)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Entity;

    fn ner(pairs: &[(&str, &str)]) -> Extraction {
        Extraction::Ner(
            pairs
                .iter()
                .map(|(m, l)| Entity {
                    mention: m.to_string(),
                    label: l.to_string(),
                })
                .collect(),
        )
    }

    #[test]
    fn exact_match_examples() {
        let g = ner(&[("A", "PER"), ("C", "ORG")]);
        assert_eq!(exact_match_f1(&g, &g).unwrap().f1, 1.0);
        let p = ner(&[("A", "PER"), ("B", "LOC")]);
        let s = exact_match_f1(&p, &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(exact_match_f1(&ner(&[]), &g).unwrap().f1, 0.0);
        assert!(exact_match_f1(&Extraction::Re(vec![]), &g).is_err());
    }

    #[test]
    fn multiset_semantics() {
        let g = ner(&[("A", "PER")]);
        let p = ner(&[("A", "PER"), ("A", "PER")]);
        let s = exact_match_f1(&p, &g).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (1.0, 1.0, 0.0));
    }

    #[test]
    fn micro_is_not_macro() {
        let a = Prf::from_counts(1.0, 0.0, 0.0);
        let b = Prf::from_counts(0.0, 3.0, 0.0);
        let m = Prf::micro([&a, &b]);
        assert_eq!(m.precision, 0.25);
        assert_ne!(m.f1, (a.f1 + b.f1) / 2.0);
    }

    #[test]
    fn ondemand_tables() {
        let gold = "| Fruit | Shape |\n|---|---|\n| apple | round |";
        let s = ondemand_score(gold, gold);
        assert_eq!((s.header.f1, s.content_rouge_l), (1.0, 1.0));
        let s = ondemand_score("no table at all", gold);
        assert_eq!((s.header.f1, s.content_rouge_l), (0.0, 0.0));
    }

    proptest::proptest! {
        #[test]
        fn exact_match_is_order_invariant(seed in proptest::prelude::any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = crate::seed::rng(seed);
            for task in crate::model::TaskKind::ALL {
                let g = crate::fixtures::random_extraction(task, &mut rng, 5, false);
                let p = crate::fixtures::random_extraction(task, &mut rng, 5, false);
                let base = exact_match_f1(&p, &g).unwrap();
                proptest::prop_assert!((0.0..=1.0).contains(&base.f1));
                let mut pi = p.to_items();
                pi.shuffle(&mut rng);
                let mut gi = g.to_items();
                gi.shuffle(&mut rng);
                let s = exact_match_f1(&p.with_items(pi), &g.with_items(gi)).unwrap();
                proptest::prop_assert_eq!(s, base);
                if !g.is_empty() {
                    proptest::prop_assert_eq!(exact_match_f1(&g, &g).unwrap().f1, 1.0);
                }
            }
        }
    }
}
