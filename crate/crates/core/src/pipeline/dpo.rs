use std::time::Instant;

use rayon::prelude::*;

use super::config::{PipelineConfig, Resources};
use super::{ingest, mix, stage_failed, with_threads, RunManifest, DPO_FILE, DPO_MANIFEST};
use crate::answer::serialize_answer_ordered;
use crate::assets::eval_format;
use crate::client::{Client, MockBackend};
use crate::error::{Error, Result};
use crate::model::{IEInstance, LabelDef, PreferencePair, SchemaView};
use crate::prefpairs::{
    assemble_dpo_corpus, build_offline_pair, build_online_pair, score_samples, ScoredSamples,
};
use crate::prompt::{assemble_input, sample_task_description};
use crate::seed::derive_seed;

/// The prompt and gold answer used to sample and score an instance: the
/// full schema without guidelines, the evaluation format, and no
/// demonstrations.
pub fn dpo_prompt(inst: &IEInstance, res: &Resources, seed: u64) -> Result<(String, String)> {
    let format = eval_format(inst.task);
    let pool = res
        .pools
        .get(&inst.task)
        .ok_or_else(|| Error::config(format!("no description pool for {}", inst.task)))?;
    let desc = sample_task_description(pool, derive_seed(seed, &["dpo", "description", &inst.id]))?;
    let view = inst.schema.as_ref().filter(|_| inst.task.is_closed()).map(|s| SchemaView {
        labels: s.labels.iter().map(|l| LabelDef::new(l.name.clone())).collect(),
        symbols: None,
        guidelines_included: false,
    });
    let prompt = assemble_input(inst, view.as_ref(), &desc, format, &[])?;
    let gold = serialize_answer_ordered(&inst.gold, format)?;
    Ok((prompt, gold))
}

#[derive(Clone, Debug)]
pub struct DpoOutput {
    pub pairs: Vec<PreferencePair>,
    pub scored: Vec<ScoredSamples>,
    pub manifest: RunManifest,
}

/// Samples, scores, pairs and assembles without writing the corpus. With a
/// mock backend, pass its handle so the gold answers can be registered.
pub fn run_dpo(
    cfg: &PipelineConfig,
    res: &Resources,
    client: &Client,
    mock: Option<&MockBackend>,
) -> Result<DpoOutput> {
    let out = cfg.out.as_path();
    let mut manifest = RunManifest::new("build-dpo", cfg, client.backend_id());
    let mut ingested = ingest(cfg, res).map_err(|e| stage_failed(out, "ingest", e, None))?;
    let corpus = mix(cfg, &mut ingested).map_err(|e| stage_failed(out, "mix", e, None))?;
    manifest.warnings.append(&mut ingested.warnings);
    manifest.datasets = ingested.stats.values().cloned().collect();
    manifest.counts.insert("mixed".into(), corpus.len());

    let prompts: Vec<(String, String)> = corpus
        .par_iter()
        .map(|i| dpo_prompt(i, res, cfg.seed))
        .collect::<Result<_>>()
        .map_err(|e| stage_failed(out, "prompt", e, None))?;
    if let Some(m) = mock {
        for (p, g) in &prompts {
            m.register(p, g);
        }
    }
    let plan = &cfg.dpo;
    let scored: Vec<Result<ScoredSamples>> = corpus
        .par_iter()
        .zip(&prompts)
        .map(|(inst, (p, g))| {
            score_samples(&inst.id, &inst.dataset, p, g, client, plan.samples_per_instance, plan.sample_temperature)
        })
        .collect();
    let mut kept = Vec::with_capacity(scored.len());
    let mut skipped = 0;
    for (inst, s) in corpus.iter().zip(scored) {
        match s {
            Ok(s) => kept.push(s),
            Err(e) => {
                skipped += 1;
                tracing::warn!(instance = %inst.id, error = %e, "instance skipped");
                if e.is_config() {
                    return Err(stage_failed(out, "score", e, Some(("scored.partial.jsonl", crate::jsonl::to_string(&kept)?))));
                }
                manifest.warnings.push(format!("{} skipped: {e}", inst.id));
            }
        }
    }
    manifest.counts.insert("scored".into(), kept.len());
    manifest.counts.insert("score_skipped".into(), skipped);

    let mut candidates = Vec::new();
    for s in &kept {
        candidates.extend(build_online_pair(s, plan.gap_threshold));
        candidates.extend(build_offline_pair(s, plan.gap_threshold));
    }
    manifest.counts.insert("candidate_pairs".into(), candidates.len());
    let plan = crate::prefpairs::DpoPlan {
        seed: derive_seed(cfg.seed, &["dpo"]),
        ..plan.clone()
    };
    let corpus = assemble_dpo_corpus(candidates, &plan).map_err(|e| {
        stage_failed(out, "assemble", e, crate::jsonl::to_string(&kept).ok().map(|s| ("scored.partial.jsonl", s)))
    })?;
    manifest.counts.insert("pairs".into(), corpus.pairs.len());
    manifest.warnings.extend(corpus.summary.warnings.iter().cloned());
    manifest.dpo = Some(corpus.summary);
    Ok(DpoOutput {
        pairs: corpus.pairs,
        scored: kept,
        manifest,
    })
}

/// Runs the DPO build and writes `dpo.jsonl` and `dpo.manifest.json` under
/// `cfg.out`.
pub fn build_dpo(cfg: &PipelineConfig) -> Result<RunManifest> {
    let started = Instant::now();
    let res = cfg.preflight()?;
    let (client, mock) = cfg.client()?;
    let DpoOutput { pairs, mut manifest, .. } =
        with_threads(cfg.threads, || run_dpo(cfg, &res, &client, mock.as_deref()))??;
    let out = cfg.out.as_path();
    manifest.write_output(out, DPO_FILE, crate::jsonl::to_string(&pairs)?.as_bytes())?;
    manifest.finish(out, DPO_MANIFEST, started)
}
