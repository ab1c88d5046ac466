use std::collections::HashMap;

use crate::text::metric_tokens;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_default() += 1;
        }
    }
    out
}

/// Sentence BLEU (4-gram, uniform weights, brevity penalty) with smoothing
/// method 3: the k-th n-gram order whose clipped match count is zero gets
/// precision `1 / (2^k * max(1, candidate n-gram count))`.
///
/// Returns 0 when the candidate is empty or shares no unigram with the
/// reference.
pub fn sentence_bleu_m3(candidate: &str, reference: &str) -> f64 {
    sentence_bleu_m3_tokens(&metric_tokens(candidate), &metric_tokens(reference))
}

pub fn sentence_bleu_m3_tokens(candidate: &[String], reference: &[String]) -> f64 {
    let c = candidate.len();
    let r = reference.len();
    if c == 0 {
        return 0.0;
    }
    let mut precisions = [(0usize, 0usize); 4];
    for (i, p) in precisions.iter_mut().enumerate() {
        let n = i + 1;
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(g, k)| (*k).min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let total: usize = cand.values().sum();
        *p = (matched, total.max(1));
    }
    if precisions[0].0 == 0 {
        return 0.0;
    }
    let mut k = 1i32;
    let mut log_sum = 0.0;
    for (num, den) in precisions {
        let p = if num == 0 {
            let v = 1.0 / (2f64.powi(k) * den as f64);
            k += 1;
            v
        } else {
            num as f64 / den as f64
        };
        log_sum += 0.25 * p.ln();
    }
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * log_sum.exp()
}
