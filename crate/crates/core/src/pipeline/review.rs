use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{
    append_audit, generate_format_templates, grow_task_descriptions, review, CandidateKind,
    Decision, GenCandidate, GenReport,
};
use crate::client::Client;
use crate::error::{Error, Result};
use crate::model::{FormatSpec, TaskKind};
use crate::prompt::DescriptionPool;

/// Generates description or format candidates for `task`. Descriptions
/// grow the pool found under `pools_dir` (or the bundled one).
pub fn generate_candidates(
    kind: CandidateKind,
    task: TaskKind,
    count: usize,
    pools_dir: Option<&Path>,
    client: &Client,
    seed: u64,
) -> Result<GenReport> {
    match kind {
        CandidateKind::TaskDescription => {
            let pool = match pools_dir {
                Some(d) if d.join(crate::assets::pool_dir_name(task)).exists() => DescriptionPool::load(d, task)?,
                _ => DescriptionPool::bundled(task),
            };
            grow_task_descriptions(&pool, count, client, seed)
        }
        CandidateKind::FormatTemplate => generate_format_templates(task, count, client, seed),
        CandidateKind::CotExplanation => Err(Error::config(
            "explanations are generated by build-sft, not as review candidates",
        )),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub pending: usize,
    /// Task -> descriptions added to its pool.
    pub descriptions_added: BTreeMap<String, usize>,
    pub formats_written: Vec<String>,
}

/// Applies a decisions file to a candidates file.
///
/// The candidates file is rewritten with the new statuses, decisions are
/// appended to `audit`, accepted descriptions go to `<pools_dir>/<task>/`
/// and accepted formats to `<formats_dir>/<name>.json`. Decisions are all
/// validated before anything is written.
pub fn apply_review(
    candidates: &Path,
    decisions: &Path,
    pools_dir: Option<&Path>,
    formats_dir: Option<&Path>,
    audit: &Path,
) -> Result<ReviewSummary> {
    let mut cands: Vec<GenCandidate> = crate::jsonl::read(candidates)?;
    let decs: Vec<Decision> = crate::jsonl::read(decisions)?;
    let outcome = review(&mut cands, &decs)?;
    let mut summary = ReviewSummary {
        accepted: outcome.accepted.len(),
        rejected: outcome.rejected.len(),
        pending: cands.iter().filter(|c| c.status == crate::augment::CandidateStatus::Pending).count(),
        ..Default::default()
    };
    let needs_pools = outcome.accepted.iter().any(|c| c.kind == CandidateKind::TaskDescription);
    let needs_formats = outcome.accepted.iter().any(|c| c.kind == CandidateKind::FormatTemplate);
    let pools_dir = match (needs_pools, pools_dir) {
        (true, None) => return Err(Error::config("accepted descriptions need a pools directory")),
        (_, d) => d,
    };
    let formats_dir = match (needs_formats, formats_dir) {
        (true, None) => return Err(Error::config("accepted formats need a formats directory")),
        (_, d) => d,
    };

    crate::jsonl::write(candidates, &cands)?;
    append_audit(audit, &outcome.audit)?;
    if let Some(dir) = pools_dir.filter(|_| needs_pools) {
        let mut tasks: Vec<TaskKind> = outcome.accepted.iter().map(|c| c.task).collect();
        tasks.sort();
        tasks.dedup();
        for t in tasks {
            let mut pool = if dir.join(crate::assets::pool_dir_name(t)).exists() {
                DescriptionPool::load(dir, t)?
            } else {
                DescriptionPool::bundled(t)
            };
            let added = pool.absorb(&outcome.accepted);
            pool.save(dir)?;
            summary.descriptions_added.insert(t.to_string(), added);
        }
    }
    if let Some(dir) = formats_dir.filter(|_| needs_formats) {
        for c in outcome.accepted.iter().filter(|c| c.kind == CandidateKind::FormatTemplate) {
            let spec: &FormatSpec = c
                .format
                .as_ref()
                .ok_or_else(|| Error::data(format!("accepted format candidate {} has no parsed format", c.id)))?;
            let json = serde_json::to_string_pretty(&[spec])?;
            crate::jsonl::write_atomic(&dir.join(format!("{}.json", spec.name)), json.as_bytes())?;
            summary.formats_written.push(spec.name.clone());
        }
    }
    Ok(summary)
}
