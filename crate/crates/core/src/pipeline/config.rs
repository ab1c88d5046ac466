use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::answer::check_format;
use crate::assets::{formats_for, load_format_dir};
use crate::client::{BackendConfig, Client, LiveBackend, MockBackend, ResponseCache};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::ingest::{
    load_dataset, ReaderSpec, DEFAULT_CAP, DEFAULT_MAX_TOKENS, DEFAULT_NA_KEEP_RATE,
};
use crate::model::{FormatSpec, IEInstance, TaskKind};
use crate::prefpairs::DpoPlan;
use crate::prompt::{DemoOptions, DescriptionPool, SchemaAugmentOptions};

/// A generated dataset, used for desk runs and tests in place of a reader.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub task: TaskKind,
    /// Defaults to `synth-<task>`.
    #[serde(default)]
    pub dataset: Option<String>,
    pub size: usize,
    #[serde(default)]
    pub na_fraction: f64,
}

impl SyntheticSource {
    pub fn name(&self) -> String {
        self.dataset
            .clone()
            .unwrap_or_else(|| format!("synth-{}", self.task.as_str().to_lowercase()))
    }

    pub fn generate(&self, seed: u64) -> Vec<IEInstance> {
        fixtures::dataset(self.task, &self.name(), self.size, self.na_fraction, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub na_keep_rate: f64,
    pub max_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            na_keep_rate: DEFAULT_NA_KEEP_RATE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureConfig {
    pub cap: usize,
    pub quotas: BTreeMap<String, usize>,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            cap: DEFAULT_CAP,
            quotas: BTreeMap::new(),
        }
    }
}

/// What to do with a closed-IE example whose gold is emptied by the schema
/// subset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptiedPolicy {
    /// Keep it; the answer becomes the fail output.
    #[default]
    Keep,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub demo_rate: f64,
    pub demo_k_min: usize,
    pub demo_k_max: usize,
    pub shuffle_schema: bool,
    pub subset_schema: bool,
    pub guideline_rate: f64,
    pub symbol_rate: f64,
    pub symbol_prefix: String,
    pub cot_rate: f64,
    pub cot_per_task: usize,
    pub schema_emptied: EmptiedPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let schema = SchemaAugmentOptions::default();
        let demos = DemoOptions::default();
        AugmentConfig {
            demo_rate: demos.rate,
            demo_k_min: demos.k_min,
            demo_k_max: demos.k_max,
            shuffle_schema: schema.shuffle,
            subset_schema: schema.subset,
            guideline_rate: schema.guideline_rate,
            symbol_rate: schema.symbol_rate,
            symbol_prefix: schema.symbol_prefix,
            cot_rate: 0.1,
            cot_per_task: 1000,
            schema_emptied: EmptiedPolicy::Keep,
        }
    }
}

impl AugmentConfig {
    pub fn schema_options(&self) -> SchemaAugmentOptions {
        SchemaAugmentOptions {
            shuffle: self.shuffle_schema,
            subset: self.subset_schema,
            guideline_rate: self.guideline_rate,
            symbol_rate: self.symbol_rate,
            symbol_prefix: self.symbol_prefix.clone(),
        }
    }

    pub fn demo_options(&self) -> DemoOptions {
        DemoOptions {
            rate: self.demo_rate,
            k_min: self.demo_k_min,
            k_max: self.demo_k_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormatConfig {
    /// Include the bundled training formats.
    pub builtin: bool,
    /// Extra directories of `*.json` format files.
    pub dirs: Vec<PathBuf>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            builtin: true,
            dirs: Vec::new(),
        }
    }
}

/// General-domain records to mix with the IE corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralConfig {
    /// JSON-lines file; records are copied through unchanged.
    pub path: PathBuf,
    #[serde(default = "default_ie_rate")]
    pub ie_rate: f64,
}

fn default_ie_rate() -> f64 {
    0.2
}

/// Everything one run needs. Loaded from TOML; relative paths are resolved
/// against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; `None` uses all cores. Output does not depend on it.
    pub threads: Option<usize>,
    pub readers: Vec<ReaderSpec>,
    /// Reader spec files, each holding `[[reader]]` tables.
    pub reader_files: Vec<PathBuf>,
    pub synthetic: Vec<SyntheticSource>,
    pub filters: FilterConfig,
    pub mixture: MixtureConfig,
    pub augment: AugmentConfig,
    pub formats: FormatConfig,
    /// Directory with `<task>/manual.txt` (and optional `generated.txt`);
    /// the bundled pools are used when unset.
    pub pools_dir: Option<PathBuf>,
    pub general: Option<GeneralConfig>,
    pub dpo: DpoPlan,
    pub backend: BackendConfig,
    /// On-disk response cache; in-memory when unset.
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out: PathBuf::from("out"),
            threads: None,
            readers: Vec::new(),
            reader_files: Vec::new(),
            synthetic: Vec::new(),
            filters: FilterConfig::default(),
            mixture: MixtureConfig::default(),
            augment: AugmentConfig::default(),
            formats: FormatConfig::default(),
            pools_dir: None,
            general: None,
            dpo: DpoPlan::default(),
            backend: BackendConfig::default(),
            cache_dir: None,
        }
    }
}

fn fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be in [0, 1], got {v}")))
    }
}

fn must_exist(what: &str, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} {} does not exist", p.display())))
    }
}

impl PipelineConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::config(format!("pipeline config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("pipeline config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&src)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        self.readers.iter_mut().for_each(|r| r.resolve(base));
        self.reader_files.iter_mut().for_each(fix);
        self.formats.dirs.iter_mut().for_each(fix);
        if let Some(p) = self.pools_dir.as_mut() {
            fix(p);
        }
        if let Some(g) = self.general.as_mut() {
            fix(&mut g.path);
        }
        if let Some(p) = self.cache_dir.as_mut() {
            fix(p);
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        crate::seed::digest_hex(json.as_bytes())
    }

    /// All readers: inline ones followed by those from reader files.
    pub fn all_readers(&self) -> Result<Vec<ReaderSpec>> {
        let mut out = self.readers.clone();
        for f in &self.reader_files {
            must_exist("reader spec file", f)?;
            out.extend(ReaderSpec::from_file(f)?);
        }
        Ok(out)
    }

    /// Checks everything that can be checked without reading data and
    /// loads the format library and description pools. Nothing is written.
    pub fn preflight(&self) -> Result<Resources> {
        fraction("filters.na_keep_rate", self.filters.na_keep_rate)?;
        fraction("augment.cot_rate", self.augment.cot_rate)?;
        self.augment.schema_options().validate()?;
        self.augment.demo_options().validate()?;
        self.dpo.validate()?;
        if self.mixture.cap == 0 {
            return Err(Error::config("mixture.cap must be positive"));
        }
        if self.filters.max_tokens == 0 {
            return Err(Error::config("filters.max_tokens must be positive"));
        }
        if let Some(g) = &self.general {
            must_exist("general corpus", &g.path)?;
            if !(g.ie_rate > 0.0 && g.ie_rate < 1.0) {
                return Err(Error::config(format!("general.ie_rate must be in (0, 1), got {}", g.ie_rate)));
            }
        }
        let readers = self.all_readers()?;
        let mut names: Vec<String> = readers.iter().map(|r| r.dataset.clone()).collect();
        names.extend(self.synthetic.iter().map(SyntheticSource::name));
        if names.is_empty() {
            return Err(Error::config("no readers or synthetic sources configured"));
        }
        let mut sorted = names.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(format!("dataset {} configured twice", w[0])));
        }
        for r in &readers {
            must_exist(&format!("dataset {}", r.dataset), &r.path)?;
            r.load_schema()?;
        }
        for q in self.mixture.quotas.keys() {
            if !names.contains(q) {
                return Err(Error::config(format!("quota for unknown dataset {q}")));
            }
        }

        let mut formats: BTreeMap<TaskKind, Vec<FormatSpec>> = BTreeMap::new();
        if self.formats.builtin {
            for t in TaskKind::ALL {
                formats.entry(t).or_default().extend(formats_for(t).iter().cloned());
            }
        }
        for d in &self.formats.dirs {
            must_exist("format library", d)?;
            for f in load_format_dir(d)? {
                check_format(&f).map_err(|e| Error::config(format!("format {}: {e}", f.name)))?;
                formats.entry(f.task).or_default().push(f);
            }
        }
        let mut pools = BTreeMap::new();
        let mut tasks: Vec<TaskKind> = readers.iter().map(|r| r.task).collect();
        tasks.extend(self.synthetic.iter().map(|s| s.task));
        tasks.sort();
        tasks.dedup();
        for t in &tasks {
            if formats.get(t).is_none_or(Vec::is_empty) {
                return Err(Error::config(format!("no formats available for {t}")));
            }
            let pool = match &self.pools_dir {
                Some(d) => {
                    must_exist("description pool directory", d)?;
                    DescriptionPool::load(d, *t)?
                }
                None => DescriptionPool::bundled(*t),
            };
            if pool.is_empty() {
                return Err(Error::config(format!("description pool for {t} is empty")));
            }
            pools.insert(*t, pool);
        }
        Ok(Resources {
            readers,
            formats,
            pools,
        })
    }

    /// Builds the client. For the mock backend the concrete handle is
    /// returned too, so references can be registered.
    pub fn client(&self) -> Result<(Client, Option<Arc<MockBackend>>)> {
        let cache = match &self.cache_dir {
            Some(d) => ResponseCache::on_disk(d)?,
            None => ResponseCache::in_memory(),
        };
        match &self.backend {
            BackendConfig::Mock { policy, seed } => {
                let mock = Arc::new(MockBackend::new(policy.clone(), *seed));
                Ok((Client::builder(mock.clone()).cache(cache).build(), Some(mock)))
            }
            BackendConfig::Live {
                endpoint,
                model,
                api_key_env,
                qps,
            } => {
                let live = LiveBackend::from_env(endpoint, model, api_key_env)?;
                Ok((Client::builder(Arc::new(live)).cache(cache).qps(*qps).build(), None))
            }
        }
    }
}

/// Validated, loaded inputs shared by the build commands.
#[derive(Clone, Debug)]
pub struct Resources {
    pub readers: Vec<ReaderSpec>,
    pub formats: BTreeMap<TaskKind, Vec<FormatSpec>>,
    pub pools: BTreeMap<TaskKind, DescriptionPool>,
}

impl Resources {
    /// Reads every configured dataset, in configuration order.
    pub fn load_sources(
        &self,
        cfg: &PipelineConfig,
    ) -> Result<(Vec<(String, Vec<IEInstance>)>, Vec<String>)> {
        let mut out = Vec::new();
        let mut warnings = Vec::new();
        for r in &self.readers {
            let loaded = load_dataset(r, &r.path)?;
            for e in &loaded.errors {
                warnings.push(format!("{}: skipped {e}", r.dataset));
            }
            if loaded.deduplicated > 0 {
                warnings.push(format!("{}: removed {} duplicate items", r.dataset, loaded.deduplicated));
            }
            out.push((r.dataset.clone(), loaded.instances));
        }
        for s in &cfg.synthetic {
            out.push((s.name(), s.generate(cfg.seed)));
        }
        Ok((out, warnings))
    }
}
