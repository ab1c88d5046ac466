use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rayon::prelude::*;

use super::config::{EmptiedPolicy, PipelineConfig, Resources};
use super::stats::Composition;
use super::{
    ingest, mix, stage_failed, with_threads, RateCheck, RunManifest, SFT_FILE, SFT_MANIFEST,
    SFT_MIXED_FILE,
};
use crate::answer::{attach_cot, serialize_answer};
use crate::augment::{generate_cot, select_for_cot, CotRequest};
use crate::client::Client;
use crate::error::{Error, Result};
use crate::ingest::mix_general;
use crate::model::{AlignmentExample, FormatSpec, IEInstance, TaskKind};
use crate::prompt::{
    assemble_input, augment_schema, sample_demonstrations, sample_task_description, DemoOptions,
    DescriptionPool, SchemaAugmentOptions,
};
use crate::seed::{derive_seed, rng_for};
use crate::text::{TokenCounter, WhitespaceTokenizer};

/// Shared inputs for turning instances into examples.
pub struct ExampleContext<'a> {
    pub formats: &'a BTreeMap<TaskKind, Vec<FormatSpec>>,
    pub pools: &'a BTreeMap<TaskKind, DescriptionPool>,
    /// Demonstration candidates per task.
    pub demo_pools: BTreeMap<TaskKind, Vec<IEInstance>>,
    pub schema: SchemaAugmentOptions,
    pub demos: DemoOptions,
    pub seed: u64,
}

impl<'a> ExampleContext<'a> {
    pub fn new(
        cfg: &PipelineConfig,
        res: &'a Resources,
        corpus: &[IEInstance],
    ) -> ExampleContext<'a> {
        let mut demo_pools: BTreeMap<TaskKind, Vec<IEInstance>> = BTreeMap::new();
        for inst in corpus {
            demo_pools.entry(inst.task).or_default().push(inst.clone());
        }
        ExampleContext {
            formats: &res.formats,
            pools: &res.pools,
            demo_pools,
            schema: cfg.augment.schema_options(),
            demos: cfg.augment.demo_options(),
            seed: cfg.seed,
        }
    }
}

/// An assembled example and what happened on the way.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltExample {
    pub example: AlignmentExample,
    /// The schema subset removed every gold item.
    pub schema_emptied: bool,
    /// Demonstrations requested but not available.
    pub demo_shortfall: usize,
}

/// Builds the example for one instance. Every random choice is seeded by
/// the master seed and the instance id.
pub fn build_example(inst: &IEInstance, ctx: &ExampleContext) -> Result<BuiltExample> {
    let s = derive_seed(ctx.seed, &["sft", &inst.id]);
    let format = ctx
        .formats
        .get(&inst.task)
        .and_then(|f| f.choose(&mut rng_for(s, &["format"])))
        .ok_or_else(|| Error::config(format!("no formats available for {}", inst.task)))?;
    let pool = ctx
        .pools
        .get(&inst.task)
        .ok_or_else(|| Error::config(format!("no description pool for {}", inst.task)))?;
    let desc = sample_task_description(pool, derive_seed(s, &["description"]))?;
    let (view, gold) = if inst.task.is_closed() {
        let schema = inst
            .schema
            .as_ref()
            .ok_or_else(|| Error::data(format!("instance {} has no schema", inst.id)))?;
        let (v, g) = augment_schema(schema, &inst.gold, &ctx.schema, derive_seed(s, &["schema"]))?;
        (Some(v), g)
    } else {
        (None, inst.gold.clone())
    };
    let schema_emptied = view.is_some() && !inst.gold.is_empty() && gold.is_empty();
    let pool = ctx.demo_pools.get(&inst.task).map(Vec::as_slice).unwrap_or(&[]);
    let draw = sample_demonstrations(&inst.id, inst.task, pool, format, view.as_ref(), &ctx.demos, s)?;
    let output = serialize_answer(&gold, format, derive_seed(s, &["answer"]))?;
    let prompt = assemble_input(inst, view.as_ref(), &desc, format, &draw.demos)?;
    Ok(BuiltExample {
        example: AlignmentExample {
            instance_id: inst.id.clone(),
            dataset: inst.dataset.clone(),
            task: inst.task,
            prompt,
            demonstrations: draw.demos,
            output,
            cot: None,
            format: format.clone(),
            schema_view: view,
        },
        schema_emptied,
        demo_shortfall: draw.shortfall,
    })
}

fn example_tokens(ex: &AlignmentExample) -> usize {
    WhitespaceTokenizer.count(&ex.prompt) + WhitespaceTokenizer.count(&ex.output)
}

/// In-memory result of an SFT run.
#[derive(Clone, Debug)]
pub struct SftOutput {
    pub examples: Vec<AlignmentExample>,
    pub manifest: RunManifest,
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> String {
    crate::jsonl::to_string(rows).unwrap_or_default()
}

/// Runs the SFT stages without writing the corpus. Partial outputs of a
/// failed stage are still preserved under `<out>/failed/`.
pub fn run_sft(cfg: &PipelineConfig, res: &Resources, client: &Client) -> Result<SftOutput> {
    let out = cfg.out.as_path();
    let mut manifest = RunManifest::new("build-sft", cfg, client.backend_id());

    let mut ingested = ingest(cfg, res).map_err(|e| stage_failed(out, "ingest", e, None))?;
    let corpus = mix(cfg, &mut ingested).map_err(|e| {
        let all: Vec<&IEInstance> = ingested.datasets.values().flatten().collect();
        stage_failed(out, "mix", e, Some(("ingested.jsonl", jsonl(&all))))
    })?;
    manifest.warnings.append(&mut ingested.warnings);
    manifest.datasets = ingested.stats.values().cloned().collect();
    let read: usize = manifest.datasets.iter().map(|d| d.read).sum();
    let filtered: usize = ingested.datasets.values().map(Vec::len).sum();
    manifest.counts.insert("read".into(), read);
    manifest.counts.insert("filtered".into(), filtered);
    manifest.counts.insert("mixed".into(), corpus.len());

    let ctx = ExampleContext::new(cfg, res, &corpus);
    let built: Vec<Result<BuiltExample>> = corpus.par_iter().map(|i| build_example(i, &ctx)).collect();
    let mut examples = Vec::with_capacity(built.len());
    let (mut emptied_dropped, mut length_dropped, mut shortfall) = (0, 0, 0);
    for (inst, b) in corpus.iter().zip(built) {
        let b = match b {
            Ok(b) => b,
            Err(e) => {
                let e = Error::data(format!("instance {}: {e}", inst.id));
                return Err(stage_failed(out, "prompt", e, Some(("sft.partial.jsonl", jsonl(&examples)))));
            }
        };
        shortfall += b.demo_shortfall;
        if b.schema_emptied && cfg.augment.schema_emptied == EmptiedPolicy::Drop {
            emptied_dropped += 1;
        } else if example_tokens(&b.example) > cfg.filters.max_tokens {
            length_dropped += 1;
        } else {
            examples.push(b.example);
        }
    }
    if length_dropped > 0 {
        tracing::info!(length_dropped, "assembled examples over the token limit");
        manifest
            .warnings
            .push(format!("{length_dropped} assembled examples exceeded {} tokens", cfg.filters.max_tokens));
    }
    if shortfall > 0 {
        manifest.warnings.push(format!("{shortfall} demonstrations could not be drawn"));
    }
    manifest.counts.insert("schema_emptied_dropped".into(), emptied_dropped);
    manifest.counts.insert("length_dropped_late".into(), length_dropped);

    let with_cot = attach_explanations(cfg, client, &mut examples)
        .map_err(|e| stage_failed(out, "cot", e, Some(("sft.partial.jsonl", jsonl(&examples)))))?;
    manifest.counts.insert("cot".into(), with_cot);
    manifest.counts.insert("examples".into(), examples.len());

    let comp = Composition::from_examples(&examples);
    let a = &cfg.augment;
    for (name, configured, observed) in [
        ("demo_rate", a.demo_rate, comp.demo_rate),
        ("guideline_rate", a.guideline_rate, comp.guideline_rate),
        ("symbol_rate", a.symbol_rate, comp.symbol_rate),
        ("cot_rate", a.cot_rate, comp.cot_rate),
    ] {
        manifest.rates.insert(name.into(), RateCheck { configured, observed });
    }
    Ok(SftOutput { examples, manifest })
}

/// Adds explanations to `min(cot_per_task, round(cot_rate * n))` examples
/// of each task; returns how many got one.
fn attach_explanations(cfg: &PipelineConfig, client: &Client, examples: &mut [AlignmentExample]) -> Result<usize> {
    if cfg.augment.cot_rate == 0.0 || cfg.augment.cot_per_task == 0 {
        return Ok(0);
    }
    let mut by_task: BTreeMap<TaskKind, Vec<String>> = BTreeMap::new();
    for ex in examples.iter() {
        by_task.entry(ex.task).or_default().push(ex.instance_id.clone());
    }
    let mut chosen = std::collections::HashSet::new();
    for (task, ids) in &by_task {
        let seed = derive_seed(cfg.seed, &["cot", task.as_str()]);
        chosen.extend(select_for_cot(ids, cfg.augment.cot_rate, cfg.augment.cot_per_task, seed));
    }
    let targets: Vec<usize> = (0..examples.len())
        .filter(|&i| chosen.contains(&examples[i].instance_id))
        .collect();
    let texts: Vec<Result<String>> = targets
        .par_iter()
        .map(|&i| {
            let ex = &examples[i];
            let req = CotRequest::new(&ex.prompt, &ex.output, derive_seed(cfg.seed, &["cot", &ex.instance_id]));
            generate_cot(&req, client).map_err(|e| Error::data(format!("explanation for {}: {e}", ex.instance_id)))
        })
        .collect();
    for (&i, text) in targets.iter().zip(texts) {
        examples[i] = attach_cot(&examples[i], &text?)?;
    }
    Ok(targets.len())
}

/// Runs the SFT build and writes `sft.jsonl` (plus `sft_mixed.jsonl` when a
/// general corpus is configured) and `sft.manifest.json` under `cfg.out`.
pub fn build_sft(cfg: &PipelineConfig) -> Result<RunManifest> {
    let started = Instant::now();
    let res = cfg.preflight()?;
    let (client, _) = cfg.client()?;
    let general: Option<Vec<serde_json::Value>> = match &cfg.general {
        Some(g) => Some(crate::jsonl::read(&g.path)?),
        None => None,
    };
    let SftOutput { examples, mut manifest } = with_threads(cfg.threads, || run_sft(cfg, &res, &client))??;
    let out = cfg.out.as_path();
    manifest.write_output(out, SFT_FILE, crate::jsonl::to_string(&examples)?.as_bytes())?;
    if let (Some(g), Some(rows)) = (&cfg.general, general) {
        let mixed = mix_general(&examples, &rows, g.ie_rate, derive_seed(cfg.seed, &["general"]))
            .map_err(|e| Error::stage("general-mix", e))?;
        manifest.counts.insert("mixed_with_general".into(), mixed.len());
        manifest.write_output(out, SFT_MIXED_FILE, crate::jsonl::to_string(&mixed)?.as_bytes())?;
    }
    manifest.finish(out, SFT_MANIFEST, started)
}
