use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answer::{parse_answer, ParseMode};
use crate::error::{Error, Result};
use crate::metrics::{exact_match_f1, ondemand_score, openie_tuple_f1, Prf};
use crate::model::{Extraction, FormatSpec, IEInstance, TaskKind};

/// One model output, keyed by instance id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub output: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub format: String,
    pub n: usize,
    /// Outputs from which nothing could be recovered (scored as empty).
    pub parse_failures: usize,
    /// Outputs recovered only in part.
    pub partial_parses: usize,
    /// Gold instances without a prediction (scored as empty).
    pub missing: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    /// On-demand IE only: mean ROUGE-L over table contents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_rouge_l: Option<f64>,
    /// Up to 20 parse diagnostics as "id: message".
    pub diagnostics: Vec<String>,
}

/// Scores predictions against gold instances of one task. Outputs are
/// parsed leniently under `format`.
///
/// Closed IE uses exact-match F1, open IE soft tuple F1, and on-demand IE
/// soft header F1 (plus content ROUGE-L). Counts are micro-summed.
pub fn evaluate(
    preds: &[Prediction],
    golds: &[IEInstance],
    task: TaskKind,
    format: &FormatSpec,
) -> Result<EvalReport> {
    if format.task != task {
        return Err(Error::TaskMismatch {
            expected: task.to_string(),
            found: format.task.to_string(),
        });
    }
    let by_id: HashMap<&str, &str> = preds.iter().map(|p| (p.id.as_str(), p.output.as_str())).collect();
    let mut report = EvalReport {
        task: task.to_string(),
        format: format.name.clone(),
        n: golds.len(),
        ..Default::default()
    };
    let mut parts = Vec::with_capacity(golds.len());
    let mut rouge = 0.0;
    for g in golds {
        if g.task != task {
            return Err(Error::TaskMismatch {
                expected: task.to_string(),
                found: format!("{} (instance {})", g.task, g.id),
            });
        }
        let text = by_id.get(g.id.as_str()).copied();
        if text.is_none() {
            report.missing += 1;
        }
        let text = text.unwrap_or("");
        if task == TaskKind::OnDemandIe {
            let gold_table = match &g.gold {
                Extraction::OnDemand(t) => t.as_str(),
                _ => "",
            };
            let s = ondemand_score(text, gold_table);
            rouge += s.content_rouge_l;
            parts.push(s.header);
            continue;
        }
        let outcome = parse_answer(text, format, None, ParseMode::Lenient)?;
        let pred = if outcome.diagnostics.is_empty() {
            outcome.extraction
        } else {
            if outcome.extraction.is_empty() {
                report.parse_failures += 1;
            } else {
                report.partial_parses += 1;
            }
            if report.diagnostics.len() < 20 {
                report.diagnostics.push(format!("{}: {}", g.id, outcome.diagnostics[0].message));
            }
            outcome.extraction
        };
        let prf = match (&pred, &g.gold) {
            (Extraction::OpenIe(p), Extraction::OpenIe(gt)) => openie_tuple_f1(p, gt),
            _ => exact_match_f1(&pred, &g.gold)?,
        };
        parts.push(prf);
    }
    let total = Prf::micro(&parts);
    report.precision = total.precision;
    report.recall = total.recall;
    report.f1 = total.f1;
    report.tp = total.tp;
    report.fp = total.fp;
    report.fn_ = total.fn_;
    if task == TaskKind::OnDemandIe {
        report.content_rouge_l = Some(if golds.is_empty() { 0.0 } else { rouge / golds.len() as f64 });
    }
    Ok(report)
}

/// [`evaluate`] over files: predictions as JSON lines `{id, output}`, gold
/// as canonical instances.
pub fn evaluate_files(pred_file: &Path, gold_file: &Path, task: TaskKind, format: &FormatSpec) -> Result<EvalReport> {
    let preds: Vec<Prediction> = crate::jsonl::read(pred_file)?;
    let golds: Vec<IEInstance> = crate::jsonl::read(gold_file)?;
    evaluate(&preds, &golds, task, format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::serialize_answer_ordered;
    use crate::assets::eval_format;

    #[test]
    fn identical_and_unparseable() {
        let golds: Vec<IEInstance> = crate::fixtures::dataset(TaskKind::Rc, "d", 30, 0.0, 2);
        let f = eval_format(TaskKind::Rc);
        let same: Vec<Prediction> = golds
            .iter()
            .map(|g| Prediction { id: g.id.clone(), output: serialize_answer_ordered(&g.gold, f).unwrap() })
            .collect();
        assert_eq!(evaluate(&same, &golds, TaskKind::Rc, f).unwrap().f1, 1.0);
        let junk: Vec<Prediction> = golds
            .iter()
            .map(|g| Prediction { id: g.id.clone(), output: "@@ garbage @@".into() })
            .collect();
        let r = evaluate(&junk, &golds, TaskKind::Rc, f).unwrap();
        assert_eq!((r.f1, r.parse_failures), (0.0, 30));
        assert!(evaluate(&same, &golds, TaskKind::Ner, f).unwrap_err().is_config());
    }
}
