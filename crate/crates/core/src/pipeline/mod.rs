//! End-to-end runs: ingest, mixture, SFT and DPO corpus construction,
//! evaluation, corpus statistics and the review step.
//!
//! Every build starts with [`PipelineConfig::preflight`], so configuration
//! problems surface before any file is written. A stage that fails aborts
//! the run; whatever the previous stages produced is kept under
//! `<out>/failed/`.

mod config;
mod dpo;
mod evaluate;
mod review;
mod sft;
mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    AugmentConfig, EmptiedPolicy, FilterConfig, FormatConfig, GeneralConfig, MixtureConfig,
    PipelineConfig, Resources, SyntheticSource,
};
pub use dpo::{build_dpo, dpo_prompt, run_dpo, DpoOutput};
pub use evaluate::{evaluate, evaluate_files, EvalReport, Prediction};
pub use review::{apply_review, generate_candidates, ReviewSummary};
pub use sft::{build_example, build_sft, run_sft, BuiltExample, ExampleContext, SftOutput};
pub use stats::{stats, stats_file, Composition};

use crate::error::{Error, Result};
use crate::ingest::{filter_length, filter_na, mix_proportional, DatasetStats, MixturePlan};
use crate::model::IEInstance;
use crate::seed::digest_hex;
use crate::text::WhitespaceTokenizer;

pub const SFT_FILE: &str = "sft.jsonl";
pub const SFT_MIXED_FILE: &str = "sft_mixed.jsonl";
pub const SFT_MANIFEST: &str = "sft.manifest.json";
pub const DPO_FILE: &str = "dpo.jsonl";
pub const DPO_MANIFEST: &str = "dpo.manifest.json";
pub const FAILED_DIR: &str = "failed";

/// Exit code for a result: 0 success, 1 data error, 2 configuration error.
pub fn exit_code<T>(r: &Result<T>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(e) if e.is_config() => 2,
        Err(_) => 1,
    }
}

/// Configured and observed value of one rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub configured: f64,
    pub observed: f64,
}

/// Written next to the outputs at the end of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub backend: String,
    /// Items leaving each stage.
    pub counts: BTreeMap<String, usize>,
    pub datasets: Vec<DatasetStats>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rates: BTreeMap<String, RateCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpo: Option<crate::prefpairs::DpoSummary>,
    pub warnings: Vec<String>,
    pub wall_time_ms: u64,
    /// Output file name -> hex SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str, cfg: &PipelineConfig, backend: String) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: cfg.digest(),
            seed: cfg.seed,
            backend,
            counts: BTreeMap::new(),
            datasets: Vec::new(),
            rates: BTreeMap::new(),
            dpo: None,
            warnings: Vec::new(),
            wall_time_ms: 0,
            outputs: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&src)?)
    }

    /// Re-hashes every listed output under `dir` and reports the first
    /// mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, digest) in &self.outputs {
            let p = dir.join(name);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if digest_hex(&bytes) != *digest {
                return Err(Error::data(format!("{} does not match its manifest digest", p.display())));
            }
        }
        Ok(())
    }

    fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        crate::jsonl::write_atomic(&dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), digest_hex(bytes));
        Ok(())
    }

    fn finish(mut self, dir: &Path, file: &str, started: Instant) -> Result<Self> {
        self.wall_time_ms = started.elapsed().as_millis() as u64;
        let json = serde_json::to_string_pretty(&self)?;
        crate::jsonl::write_atomic(&dir.join(file), json.as_bytes())?;
        Ok(self)
    }
}

/// Datasets after NA and length filtering.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub datasets: BTreeMap<String, Vec<IEInstance>>,
    pub stats: BTreeMap<String, DatasetStats>,
    pub warnings: Vec<String>,
}

/// Reads and filters every configured source.
pub fn ingest(cfg: &PipelineConfig, res: &Resources) -> Result<Ingested> {
    let (sources, warnings) = res.load_sources(cfg)?;
    let mut out = Ingested {
        warnings,
        ..Default::default()
    };
    for (name, instances) in sources {
        let read = instances.len();
        let kept = filter_na(instances, cfg.filters.na_keep_rate, cfg.seed)?;
        let na_dropped = read - kept.len();
        let before = kept.len();
        let kept = filter_length(kept, cfg.filters.max_tokens, &WhitespaceTokenizer);
        out.stats.insert(
            name.clone(),
            DatasetStats {
                dataset: name.clone(),
                read,
                na_dropped,
                length_dropped: before - kept.len(),
                sampled: 0,
            },
        );
        out.datasets.insert(name, kept);
    }
    Ok(out)
}

/// Proportional mixture of the ingested datasets. Fills `sampled` in the
/// per-dataset stats.
pub fn mix(cfg: &PipelineConfig, ingested: &mut Ingested) -> Result<Vec<IEInstance>> {
    let plan = MixturePlan {
        cap: cfg.mixture.cap,
        quotas: cfg.mixture.quotas.clone(),
        seed: cfg.seed,
    };
    let mixture = mix_proportional(&ingested.datasets, &plan)?;
    for s in mixture.stats {
        if let Some(d) = ingested.stats.get_mut(&s.dataset) {
            d.sampled = s.sampled;
        }
    }
    Ok(mixture.instances)
}

/// Preserves `partial` under `<out>/failed/` and wraps the error with the
/// stage name.
fn stage_failed(out: &Path, stage: &str, err: Error, partial: Option<(&str, String)>) -> Error {
    if let Some((name, contents)) = partial {
        let p: PathBuf = out.join(FAILED_DIR).join(name);
        if let Err(e) = crate::jsonl::write_atomic(&p, contents.as_bytes()) {
            tracing::error!(error = %e, "could not preserve partial output");
        }
    }
    Error::stage(stage, err)
}

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub const INGEST_STATS: &str = "ingest_stats.json";

/// Ingests every source and writes `<out>/<dataset>.jsonl` plus
/// `<out>/ingest_stats.json`.
pub fn ingest_to_dir(cfg: &PipelineConfig) -> Result<Vec<DatasetStats>> {
    let res = cfg.preflight()?;
    let ingested = ingest(cfg, &res)?;
    for w in &ingested.warnings {
        tracing::warn!("{w}");
    }
    for (name, rows) in &ingested.datasets {
        crate::jsonl::write(&cfg.out.join(format!("{name}.jsonl")), rows)?;
    }
    let stats: Vec<DatasetStats> = ingested.stats.into_values().collect();
    crate::jsonl::write_atomic(&cfg.out.join(INGEST_STATS), serde_json::to_string_pretty(&stats)?.as_bytes())?;
    Ok(stats)
}

/// Reads every `*.jsonl` dataset in `dir` (as written by
/// [`ingest_to_dir`]), mixes them per `plan` and writes the corpus to
/// `out`.
pub fn mix_dir(dir: &Path, plan: &MixturePlan, out: &Path) -> Result<Vec<DatasetStats>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::config(format!("ingest directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut datasets = BTreeMap::new();
    for p in paths {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        datasets.insert(name, crate::jsonl::read::<IEInstance>(&p)?);
    }
    if datasets.is_empty() {
        return Err(Error::config(format!("no datasets in {}", dir.display())));
    }
    let mixture = mix_proportional(&datasets, plan)?;
    crate::jsonl::write(out, &mixture.instances)?;
    Ok(mixture.stats)
}
