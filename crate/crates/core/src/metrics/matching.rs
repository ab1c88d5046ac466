//! One-to-one matching for the soft scorers.
//!
//! Up to [`EXHAUSTIVE_LIMIT`] items on the smaller side the optimal
//! assignment is found by enumeration; larger inputs fall back to greedy
//! matching on descending score.

use std::collections::HashMap;

use super::Prf;
use crate::model::OpenTuple;
use crate::text::metric_tokens;

pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Matched `(row, column)` pairs.
pub type Assignment = Vec<(usize, usize)>;

/// Optimal assignment under `objective` (a key compared lexicographically
/// by the caller-supplied `better`). Only pairs with `keep(score)` are
/// matched.
fn search(
    scores: &[Vec<f64>],
    keep: &dyn Fn(f64) -> bool,
    value: &dyn Fn(&[f64]) -> (f64, f64),
) -> Assignment {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    let mut best: Option<((f64, f64), Assignment)> = None;
    let mut current = Vec::new();
    let mut used = vec![false; cols];

    fn rec(
        r: usize,
        rows: usize,
        scores: &[Vec<f64>],
        keep: &dyn Fn(f64) -> bool,
        value: &dyn Fn(&[f64]) -> (f64, f64),
        used: &mut Vec<bool>,
        current: &mut Assignment,
        best: &mut Option<((f64, f64), Assignment)>,
    ) {
        if r == rows {
            let vals: Vec<f64> = current.iter().map(|&(i, j)| scores[i][j]).collect();
            let v = value(&vals);
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                *best = Some((v, current.clone()));
            }
            return;
        }
        // row r left unmatched
        rec(r + 1, rows, scores, keep, value, used, current, best);
        for c in 0..used.len() {
            if !used[c] && keep(scores[r][c]) {
                used[c] = true;
                current.push((r, c));
                rec(r + 1, rows, scores, keep, value, used, current, best);
                current.pop();
                used[c] = false;
            }
        }
    }

    rec(0, rows, scores, keep, value, &mut used, &mut current, &mut best);
    best.map(|(_, a)| a).unwrap_or_default()
}

fn transpose(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = scores.first().map_or(0, Vec::len);
    (0..cols)
        .map(|c| scores.iter().map(|row| row[c]).collect())
        .collect()
}

/// Exhaustive optimal assignment maximizing the summed score of matched
/// pairs with `score >= min_score`. The caller keeps the smaller side small.
pub fn assign_exhaustive(scores: &[Vec<f64>], min_score: f64) -> Assignment {
    let keep = move |s: f64| s >= min_score && s > 0.0;
    let value = |v: &[f64]| (v.iter().sum::<f64>(), 0.0);
    assign_with(scores, &keep, &value)
}

fn assign_with(
    scores: &[Vec<f64>],
    keep: &dyn Fn(f64) -> bool,
    value: &dyn Fn(&[f64]) -> (f64, f64),
) -> Assignment {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    let mut a = if rows <= cols {
        search(scores, keep, value)
    } else {
        search(&transpose(scores), keep, value)
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect()
    };
    a.sort_unstable();
    a
}

/// Greedy assignment: repeatedly takes the highest remaining pair (ties by
/// lowest row, then column) with `score >= min_score`.
pub fn assign_greedy(scores: &[Vec<f64>], min_score: f64) -> Assignment {
    let mut pairs: Vec<(f64, usize, usize)> = scores
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, s)| (*s, i, j)))
        .filter(|(s, _, _)| *s >= min_score && *s > 0.0)
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_used = vec![false; scores.len()];
    let mut col_used = vec![false; scores.first().map_or(0, Vec::len)];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

fn overlap(a: &[String], b: &[String]) -> usize {
    let cb = counts(b);
    counts(a)
        .iter()
        .map(|(t, n)| (*n).min(cb.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Dice coefficient over token multisets: `2|A ∩ B| / (|A| + |B|)`.
pub fn dice(a: &str, b: &str) -> f64 {
    let (ta, tb) = (metric_tokens(a), metric_tokens(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    2.0 * overlap(&ta, &tb) as f64 / (ta.len() + tb.len()) as f64
}

/// Soft header F1 with Dice similarity.
pub fn header_soft_f1(pred: &[String], gold: &[String], threshold: f64) -> Prf {
    header_soft_f1_with(pred, gold, threshold, &dice)
}

/// Soft header F1 with a caller-supplied similarity in [0, 1].
///
/// Headers are matched one-to-one so that the number of pairs reaching
/// `threshold` is maximal (ties broken by summed similarity); each such
/// pair is a true positive.
pub fn header_soft_f1_with(
    pred: &[String],
    gold: &[String],
    threshold: f64,
    similarity: &dyn Fn(&str, &str) -> f64,
) -> Prf {
    let scores: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| gold.iter().map(|g| similarity(p, g)).collect())
        .collect();
    let assignment = if pred.len().min(gold.len()) <= EXHAUSTIVE_LIMIT {
        let keep = move |s: f64| s >= threshold;
        let value = |v: &[f64]| (v.len() as f64, v.iter().sum::<f64>());
        assign_with(&scores, &keep, &value)
    } else {
        assign_greedy(&scores, threshold)
    };
    let tp = assignment.len() as f64;
    Prf::from_counts(tp, pred.len() as f64 - tp, gold.len() as f64 - tp)
}

fn token_f1(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let o = overlap(a, b) as f64;
    if o == 0.0 {
        return 0.0;
    }
    let p = o / a.len() as f64;
    let r = o / b.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean token-F1 over the tuple slots. Optional slots absent from both
/// tuples are skipped; absent from one side they score 0.
pub fn tuple_similarity(a: &OpenTuple, b: &OpenTuple) -> f64 {
    let req = [
        (&a.predicate, &b.predicate),
        (&a.subject, &b.subject),
        (&a.object, &b.object),
    ];
    let mut total = 0.0;
    let mut n = 0.0;
    for (x, y) in req {
        total += token_f1(&metric_tokens(x), &metric_tokens(y));
        n += 1.0;
    }
    for (x, y) in [(&a.time, &b.time), (&a.location, &b.location)] {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                total += token_f1(&metric_tokens(x), &metric_tokens(y));
                n += 1.0;
            }
            _ => n += 1.0,
        }
    }
    total / n
}

/// Open IE tuple F1: one-to-one matching maximizing summed similarity;
/// each matched pair adds its similarity to tp.
pub fn openie_tuple_f1(pred: &[OpenTuple], gold: &[OpenTuple]) -> Prf {
    let scores: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| gold.iter().map(|g| tuple_similarity(p, g)).collect())
        .collect();
    let assignment = if pred.len().min(gold.len()) <= EXHAUSTIVE_LIMIT {
        assign_exhaustive(&scores, 0.0)
    } else {
        assign_greedy(&scores, 0.0)
    };
    let tp: f64 = assignment.iter().map(|&(i, j)| scores[i][j]).sum();
    Prf::from_counts(tp, pred.len() as f64 - tp, gold.len() as f64 - tp)
}
