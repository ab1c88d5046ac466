use crate::text::metric_tokens;

/// Longest common subsequence length (O(n·m) time, O(m) space).
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1: `2PR / (P + R)` with `P = LCS/|pred|`, `R = LCS/|ref|`.
/// Two empty texts score 1, one empty text scores 0.
pub fn rouge_l_f1(pred: &str, reference: &str) -> f64 {
    rouge_l_f1_tokens(&metric_tokens(pred), &metric_tokens(reference))
}

pub fn rouge_l_f1_tokens<T: PartialEq>(pred: &[T], reference: &[T]) -> f64 {
    match (pred.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let l = lcs_len(pred, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / pred.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}
