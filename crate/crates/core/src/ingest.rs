//! Raw dataset readers, NA and length filters, and the corpus mixtures.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::answer::serialize_answer_ordered;
use crate::assets::eval_format;
use crate::error::{Error, Result};
use crate::model::{
    validate_instance, Entity, Extraction, IEInstance, SchemaDef, SlotValue, TaskKind,
};
use crate::seed::rng_for;
use crate::text::TokenCounter;

pub const DEFAULT_CAP: usize = 5000;
pub const DEFAULT_MAX_TOKENS: usize = 2048;
pub const DEFAULT_NA_KEEP_RATE: f64 = 0.2;

/// Layout of a raw dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawFormat {
    /// Lines already in the canonical record format.
    Canonical,
    /// One JSON object per line; the gold field uses the canonical gold
    /// encoding of the task.
    Jsonl {
        #[serde(default = "default_text_field")]
        text_field: String,
        #[serde(default = "default_gold_field")]
        gold_field: String,
    },
    /// Token-per-line BIO tagging (NER only); sentences separated by blank
    /// lines. The tag is the last column unless `tag_column` is set.
    Conll {
        #[serde(default)]
        tag_column: Option<usize>,
    },
}

fn default_text_field() -> String {
    "text".into()
}

fn default_gold_field() -> String {
    "gold".into()
}

/// How to read one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReaderSpec {
    pub dataset: String,
    pub task: TaskKind,
    pub path: PathBuf,
    pub format: RawFormat,
    /// JSON file holding a schema (closed IE only).
    #[serde(default)]
    pub schema: Option<PathBuf>,
    /// Labels that mean "no item" (e.g. `no_relation`); items carrying them
    /// are dropped, which can make the instance NA.
    #[serde(default)]
    pub null_labels: Vec<String>,
    /// Skip malformed records instead of failing.
    #[serde(default)]
    pub lenient: bool,
    /// Remove duplicate gold tuples (logged) instead of rejecting them.
    #[serde(default)]
    pub dedup: bool,
}

impl ReaderSpec {
    /// Reads a spec file (TOML or JSON by extension) and resolves relative
    /// paths against the file's directory.
    pub fn from_file(path: &Path) -> Result<Vec<ReaderSpec>> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("reader spec {}: {e}", path.display())))?;
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Many {
            reader: Vec<ReaderSpec>,
        }
        let mut specs = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<Vec<ReaderSpec>>(&text)
                .map_err(|e| Error::config(format!("reader spec {}: {e}", path.display())))?
        } else {
            toml::from_str::<Many>(&text)
                .map_err(|e| Error::config(format!("reader spec {}: {e}", path.display())))?
                .reader
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut specs {
            s.resolve(base);
        }
        Ok(specs)
    }

    pub fn resolve(&mut self, base: &Path) {
        if self.path.is_relative() {
            self.path = base.join(&self.path);
        }
        if let Some(p) = self.schema.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    }

    /// Checks the spec and loads its schema.
    pub fn load_schema(&self) -> Result<Option<SchemaDef>> {
        if matches!(self.format, RawFormat::Conll { .. }) && self.task != TaskKind::Ner {
            return Err(Error::config(format!(
                "{}: CoNLL reader only produces NER instances, not {}",
                self.dataset, self.task
            )));
        }
        let Some(path) = &self.schema else {
            if self.task.is_closed() {
                return Err(Error::config(format!(
                    "{}: closed IE task {} needs a schema file",
                    self.dataset, self.task
                )));
            }
            return Ok(None);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("schema file {}: {e}", path.display())))?;
        let schema: SchemaDef = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("schema file {}: {e}", path.display())))?;
        if schema.task != self.task {
            return Err(Error::config(format!(
                "schema file {} is for {}, reader is {}",
                path.display(),
                schema.task,
                self.task
            )));
        }
        if let Some(v) = schema.violations().into_iter().next() {
            return Err(Error::config(format!("schema file {}: {v}", path.display())));
        }
        Ok(Some(schema))
    }
}

/// Result of reading one dataset.
#[derive(Debug, Default)]
pub struct Loaded {
    pub instances: Vec<IEInstance>,
    /// Per-record errors skipped in lenient mode.
    pub errors: Vec<Error>,
    /// Duplicate gold tuples removed.
    pub deduplicated: usize,
}

/// Reads the dataset described by `spec` from `path`, in source order.
pub fn load_dataset(spec: &ReaderSpec, path: &Path) -> Result<Loaded> {
    let schema = spec.load_schema()?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<(usize, Result<(String, Extraction)>)> = match &spec.format {
        RawFormat::Canonical | RawFormat::Jsonl { .. } => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, parse_json_record(spec, path, i + 1, l)))
            .collect(),
        RawFormat::Conll { tag_column } => conll_sentences(path, &text, *tag_column),
    };

    let mut out = Loaded::default();
    for (index, (line, rec)) in records.into_iter().enumerate() {
        let built = rec.and_then(|(text, gold)| {
            let gold = drop_null_items(gold, &spec.null_labels);
            let dups = gold.duplicates().len();
            let gold = if spec.dedup && dups > 0 {
                out.deduplicated += dups;
                tracing::info!(dataset = %spec.dataset, line, dups, "removed duplicate gold tuples");
                gold.dedup()
            } else {
                gold
            };
            let inst = IEInstance::new(&spec.dataset, index as u64, text, schema.clone(), gold);
            match validate_instance(&inst).into_iter().next() {
                Some(v) => Err(Error::Record {
                    path: path.to_path_buf(),
                    line,
                    field: v.field,
                    message: v.rule,
                }),
                None => Ok(inst),
            }
        });
        match built {
            Ok(inst) => out.instances.push(inst),
            Err(e) if spec.lenient => {
                tracing::warn!("{e}");
                out.errors.push(e);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn record_err(path: &Path, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn parse_json_record(
    spec: &ReaderSpec,
    path: &Path,
    line: usize,
    raw: &str,
) -> Result<(String, Extraction)> {
    if spec.format == RawFormat::Canonical {
        let inst: IEInstance =
            serde_json::from_str(raw).map_err(|e| record_err(path, line, "record", e.to_string()))?;
        if inst.task != spec.task {
            return Err(record_err(path, line, "task", format!("expected {}", spec.task)));
        }
        return Ok((inst.text, inst.gold));
    }
    let RawFormat::Jsonl {
        text_field,
        gold_field,
    } = &spec.format
    else {
        unreachable!("json record for a non-json format")
    };
    let mut v: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(raw).map_err(|e| record_err(path, line, "record", e.to_string()))?;
    let text = match v.remove(text_field) {
        Some(serde_json::Value::String(s)) if !s.trim().is_empty() => s,
        Some(_) => return Err(record_err(path, line, text_field, "must be a non-empty string")),
        None => return Err(record_err(path, line, text_field, "missing")),
    };
    let gold = v
        .remove(gold_field)
        .ok_or_else(|| record_err(path, line, gold_field, "missing"))?;
    let gold = Extraction::from_json(spec.task, gold)
        .map_err(|e| record_err(path, line, gold_field, e.to_string()))?;
    Ok((text, gold))
}

/// Drops items whose label is a null label, and arguments whose role is.
fn drop_null_items(gold: Extraction, null_labels: &[String]) -> Extraction {
    if null_labels.is_empty() {
        return gold;
    }
    let nulls: HashSet<&str> = null_labels.iter().map(String::as_str).collect();
    let mut keep: HashSet<String> = gold.labels().into_iter().collect();
    keep.retain(|l| !nulls.contains(l.as_str()));
    gold.retain_labels(&keep)
}

fn conll_sentences(
    path: &Path,
    text: &str,
    tag_column: Option<usize>,
) -> Vec<(usize, Result<(String, Extraction)>)> {
    let mut out = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut entities: Vec<Entity> = Vec::new();
    let mut current: Option<(Vec<String>, String)> = None;
    let mut start_line = 0;
    let mut error: Option<Error> = None;

    let close = |current: &mut Option<(Vec<String>, String)>, entities: &mut Vec<Entity>| {
        if let Some((words, label)) = current.take() {
            entities.push(Entity {
                mention: words.join(" "),
                label,
            });
        }
    };

    let lines: Vec<&str> = text.lines().chain([""]).collect();
    for (i, line) in lines.iter().enumerate() {
        let line_no = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() || cols[0] == "-DOCSTART-" {
            close(&mut current, &mut entities);
            if !tokens.is_empty() || error.is_some() {
                let rec = match error.take() {
                    Some(e) => Err(e),
                    None => Ok((
                        tokens.join(" "),
                        Extraction::Ner(std::mem::take(&mut entities)),
                    )),
                };
                out.push((start_line, rec));
            }
            tokens.clear();
            entities.clear();
            continue;
        }
        if tokens.is_empty() && error.is_none() {
            start_line = line_no;
        }
        if error.is_some() {
            continue;
        }
        let col = tag_column.unwrap_or(cols.len() - 1);
        let Some(tag) = cols.get(col).filter(|_| cols.len() >= 2) else {
            error = Some(record_err(path, line_no, "tag", "missing tag column"));
            continue;
        };
        let word = cols[0].to_string();
        tokens.push(word.clone());
        match tag.split_once('-') {
            _ if *tag == "O" => close(&mut current, &mut entities),
            Some(("B", label)) => {
                close(&mut current, &mut entities);
                current = Some((vec![word], label.to_string()));
            }
            Some(("I", label)) => match &mut current {
                Some((words, l)) if l == label => words.push(word),
                _ => {
                    close(&mut current, &mut entities);
                    current = Some((vec![word], label.to_string()));
                }
            },
            _ => error = Some(record_err(path, line_no, "tag", format!("bad BIO tag {tag:?}"))),
        }
    }
    out
}

/// Keeps every non-NA instance and each NA instance with probability
/// `keep_rate`. Each decision is seeded by the instance id.
pub fn filter_na(instances: Vec<IEInstance>, keep_rate: f64, seed: u64) -> Result<Vec<IEInstance>> {
    if !(0.0..=1.0).contains(&keep_rate) {
        return Err(Error::config(format!("NA keep rate must be in [0, 1], got {keep_rate}")));
    }
    Ok(instances
        .into_iter()
        .filter(|i| !i.is_na || rng_for(seed, &["na", &i.id]).random_bool(keep_rate))
        .collect())
}

/// Token count of an instance as a training example: its text plus its
/// gold in the evaluation format. The pipeline re-checks assembled
/// examples, which are longer.
pub fn instance_tokens(inst: &IEInstance, tokenizer: &dyn TokenCounter) -> usize {
    let answer = serialize_answer_ordered(&inst.gold, eval_format(inst.task)).unwrap_or_default();
    tokenizer.count(&inst.text) + tokenizer.count(&answer)
}

/// Drops instances longer than `max_tokens` (the bound is inclusive).
pub fn filter_length(
    instances: Vec<IEInstance>,
    max_tokens: usize,
    tokenizer: &dyn TokenCounter,
) -> Vec<IEInstance> {
    instances
        .into_iter()
        .filter(|i| instance_tokens(i, tokenizer) <= max_tokens)
        .collect()
}

/// Per-dataset cap and explicit quotas for the proportional mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixturePlan {
    pub cap: usize,
    pub quotas: BTreeMap<String, usize>,
    pub seed: u64,
}

impl Default for MixturePlan {
    fn default() -> Self {
        MixturePlan {
            cap: DEFAULT_CAP,
            quotas: BTreeMap::new(),
            seed: 0,
        }
    }
}

/// Per-dataset counts through ingest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub read: usize,
    pub na_dropped: usize,
    pub length_dropped: usize,
    pub sampled: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Mixture {
    pub instances: Vec<IEInstance>,
    /// `dataset` and `sampled` are filled; the caller merges the rest.
    pub stats: Vec<DatasetStats>,
}

/// Examples-proportional mixture: each dataset contributes
/// `min(|D|, cap)` instances (or its quota), sampled without replacement.
/// The union is sorted by id and then shuffled, so the result does not
/// depend on map or file order.
pub fn mix_proportional(
    datasets: &BTreeMap<String, Vec<IEInstance>>,
    plan: &MixturePlan,
) -> Result<Mixture> {
    if plan.cap == 0 {
        return Err(Error::config("mixture cap must be at least 1"));
    }
    for name in plan.quotas.keys() {
        if !datasets.contains_key(name) {
            return Err(Error::config(format!("quota for unknown dataset {name}")));
        }
    }
    let mut out = Mixture::default();
    for (name, data) in datasets {
        let n = match plan.quotas.get(name) {
            Some(&q) if q > data.len() => {
                return Err(Error::config(format!(
                    "quota {q} for dataset {name} exceeds the {} available instances",
                    data.len()
                )))
            }
            Some(&q) => q,
            None => data.len().min(plan.cap),
        };
        let mut rng = rng_for(plan.seed, &["mix", name]);
        let mut idx = rand::seq::index::sample(&mut rng, data.len(), n).into_vec();
        idx.sort_unstable();
        out.instances.extend(idx.into_iter().map(|i| data[i].clone()));
        out.stats.push(DatasetStats {
            dataset: name.clone(),
            read: data.len(),
            sampled: n,
            ..Default::default()
        });
    }
    out.instances.sort_by(|a, b| a.id.cmp(&b.id));
    out.instances.shuffle(&mut rng_for(plan.seed, &["mix", "shuffle"]));
    Ok(out)
}

/// One row of the IE/general mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mixed<A, B> {
    Ie(A),
    General(B),
}

/// How many IE and general rows reach `ie_rate` while keeping all of the
/// limiting side.
pub fn general_mix_sizes(n_ie: usize, n_general: usize, ie_rate: f64) -> Result<(usize, usize)> {
    if !(ie_rate > 0.0 && ie_rate < 1.0) {
        return Err(Error::config(format!("ie_rate must be in (0, 1), got {ie_rate}")));
    }
    if n_ie == 0 || n_general == 0 {
        return Err(Error::data("both the IE and the general corpus must be non-empty"));
    }
    let general_needed = (n_ie as f64 * (1.0 - ie_rate) / ie_rate).round() as usize;
    let (ie, general) = if general_needed <= n_general {
        (n_ie, general_needed)
    } else {
        let ie_needed = (n_general as f64 * ie_rate / (1.0 - ie_rate)).round() as usize;
        (ie_needed.min(n_ie), n_general)
    };
    if ie == 0 || general == 0 {
        let max = n_ie as f64 / (n_ie + 1) as f64;
        let min = 1.0 / (n_general + 1) as f64;
        return Err(Error::config(format!(
            "ie_rate {ie_rate} is unachievable with {n_ie} IE and {n_general} general rows; \
             achievable rates lie in [{min:.4}, {max:.4}]"
        )));
    }
    Ok((ie, general))
}

/// Mixes IE rows with general alignment rows so that the IE fraction is
/// `ie_rate` within one row; the limiting side is kept whole and the other
/// is sampled without replacement.
pub fn mix_general<A: Clone, B: Clone>(
    ie: &[A],
    general: &[B],
    ie_rate: f64,
    seed: u64,
) -> Result<Vec<Mixed<A, B>>> {
    let (n_ie, n_gen) = general_mix_sizes(ie.len(), general.len(), ie_rate)?;
    let pick = |len: usize, n: usize, tag: &str| {
        let mut idx = rand::seq::index::sample(&mut rng_for(seed, &["general-mix", tag]), len, n)
            .into_vec();
        idx.sort_unstable();
        idx
    };
    let mut out: Vec<Mixed<A, B>> = pick(ie.len(), n_ie, "ie")
        .into_iter()
        .map(|i| Mixed::Ie(ie[i].clone()))
        .chain(
            pick(general.len(), n_gen, "general")
                .into_iter()
                .map(|i| Mixed::General(general[i].clone())),
        )
        .collect();
    out.shuffle(&mut rng_for(seed, &["general-mix", "shuffle"]));
    Ok(out)
}

/// Renders a synthetic raw JSON-lines record for `inst`, re-inserting
/// `null_label` items for NA relation instances so the reader's null-label
/// rule has something to drop.
pub fn raw_record(inst: &IEInstance, null_label: Option<&str>) -> serde_json::Value {
    let gold = match (&inst.gold, null_label) {
        (Extraction::Rc(v) | Extraction::Re(v), Some(null)) if v.is_empty() => {
            let words: Vec<&str> = inst.text.split_whitespace().collect();
            let item = vec![
                SlotValue::text(*words.first().unwrap_or(&"it")),
                SlotValue::text(null),
                SlotValue::text(*words.last().unwrap_or(&"it")),
            ];
            inst.gold.with_items(vec![item]).to_json()
        }
        (Extraction::Ere(v), Some(null)) if v.is_empty() => {
            let item = vec![
                SlotValue::text("first"),
                SlotValue::text(null),
                SlotValue::text("second"),
            ];
            inst.gold.with_items(vec![item]).to_json()
        }
        _ => inst.gold.to_json(),
    };
    serde_json::json!({ "text": inst.text, "gold": gold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::text::WhitespaceTokenizer;

    fn write_schema(dir: &Path, task: TaskKind) -> PathBuf {
        let p = dir.join(format!("{}.schema.json", task.as_str()));
        fs::write(&p, serde_json::to_string(&fixtures::schema(task)).unwrap()).unwrap();
        p
    }

    fn jsonl_spec(dir: &Path, task: TaskKind, lenient: bool) -> ReaderSpec {
        ReaderSpec {
            dataset: "d".into(),
            task,
            path: dir.join("raw.jsonl"),
            format: RawFormat::Jsonl {
                text_field: "text".into(),
                gold_field: "gold".into(),
            },
            schema: task.is_closed().then(|| write_schema(dir, task)),
            null_labels: fixtures::null_label(task).map(String::from).into_iter().collect(),
            lenient,
            dedup: false,
        }
    }

    #[test]
    fn reads_jsonl_with_null_labels() {
        let dir = tempfile::tempdir().unwrap();
        let spec = jsonl_spec(dir.path(), TaskKind::Rc, false);
        let data = fixtures::dataset(TaskKind::Rc, "d", 3, 0.5, 1);
        let lines: Vec<String> = data
            .iter()
            .map(|i| raw_record(i, Some("no_relation")).to_string())
            .collect();
        fs::write(&spec.path, lines.join("\n")).unwrap();
        let loaded = load_dataset(&spec, &spec.path).unwrap();
        assert_eq!(loaded.instances.len(), 3);
        let ids: HashSet<_> = loaded.instances.iter().map(|i| &i.id).collect();
        assert_eq!(ids.len(), 3);
        for (a, b) in loaded.instances.iter().zip(&data) {
            assert_eq!(a.is_na, b.is_na);
            assert!(validate_instance(a).is_empty());
        }
    }

    #[test]
    fn no_relation_record_is_na() {
        let dir = tempfile::tempdir().unwrap();
        let spec = jsonl_spec(dir.path(), TaskKind::Rc, false);
        fs::write(
            &spec.path,
            r#"{"text": "Ada met Bob.", "gold": [{"subject": "Ada", "relation": "no_relation", "object": "Bob"}]}"#,
        )
        .unwrap();
        let loaded = load_dataset(&spec, &spec.path).unwrap();
        assert!(loaded.instances[0].is_na);
    }

    #[test]
    fn malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"text\": \"Ada ran.\", \"gold\": []}\n{\"gold\": []}\n{\"text\": \"Bob ran.\", \"gold\": []}\n";
        let strict = jsonl_spec(dir.path(), TaskKind::Ner, false);
        fs::write(&strict.path, body).unwrap();
        match load_dataset(&strict, &strict.path) {
            Err(Error::Record { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "text")),
            other => panic!("{other:?}"),
        }
        let lenient = jsonl_spec(dir.path(), TaskKind::Ner, true);
        let loaded = load_dataset(&lenient, &lenient.path).unwrap();
        assert_eq!((loaded.instances.len(), loaded.errors.len()), (2, 1));
    }

    #[test]
    fn missing_schema_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = jsonl_spec(dir.path(), TaskKind::Ner, false);
        spec.schema = Some(dir.path().join("nope.json"));
        fs::write(&spec.path, "").unwrap();
        assert!(load_dataset(&spec, &spec.path).unwrap_err().is_config());
    }

    #[test]
    fn duplicates_rejected_or_removed() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = jsonl_spec(dir.path(), TaskKind::Ner, false);
        fs::write(
            &spec.path,
            r#"{"text": "Ada Lovelace.", "gold": [{"mention": "Ada Lovelace", "label": "PER"}, {"mention": "Ada Lovelace", "label": "PER"}]}"#,
        )
        .unwrap();
        assert!(load_dataset(&spec, &spec.path).is_err());
        spec.dedup = true;
        let loaded = load_dataset(&spec, &spec.path).unwrap();
        assert_eq!((loaded.deduplicated, loaded.instances[0].gold.len()), (1, 1));
    }

    #[test]
    fn conll_bio() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = jsonl_spec(dir.path(), TaskKind::Ner, false);
        spec.format = RawFormat::Conll { tag_column: None };
        fs::write(
            &spec.path,
            "-DOCSTART- O\n\nAda NNP B-PER\nLovelace NNP I-PER\nvisited VBD O\nLagos NNP B-LOC\n\nIt PRP O\nrained VBD O\n",
        )
        .unwrap();
        let loaded = load_dataset(&spec, &spec.path).unwrap();
        assert_eq!(loaded.instances.len(), 2);
        assert_eq!(loaded.instances[0].text, "Ada Lovelace visited Lagos");
        assert_eq!(loaded.instances[0].gold.labels(), vec!["PER", "LOC"]);
        assert!(loaded.instances[1].is_na);
    }

    #[test]
    fn na_filter_rules() {
        let data = fixtures::dataset(TaskKind::Ner, "n", 300, 0.5, 2);
        let non_na = data.iter().filter(|i| !i.is_na).count();
        let kept = filter_na(data.clone(), 0.2, 5).unwrap();
        assert_eq!(kept.iter().filter(|i| !i.is_na).count(), non_na);
        assert_eq!(filter_na(data.clone(), 1.0, 5).unwrap(), data);
        let no_na: Vec<_> = data.iter().filter(|i| !i.is_na).cloned().collect();
        assert_eq!(filter_na(no_na.clone(), 0.2, 5).unwrap(), no_na);
        assert!(filter_na(data, 1.5, 5).is_err());
    }

    #[test]
    fn length_boundary() {
        let mk = |n: usize| {
            IEInstance::new("l", n as u64, vec!["w"; n].join(" "), None, Extraction::OpenIe(vec![]))
        };
        let na_answer = WhitespaceTokenizer.count(&eval_format(TaskKind::OpenIe).fail_output);
        let data = vec![mk(1), mk(5000), mk(2048 - na_answer), mk(2049 - na_answer)];
        let kept = filter_length(data, 2048, &WhitespaceTokenizer);
        let lens: Vec<usize> = kept.iter().map(|i| i.text.split(' ').count()).collect();
        assert_eq!(lens, vec![1, 2048 - na_answer]);
    }

    #[test]
    fn proportional_counts() {
        let mut ds = BTreeMap::new();
        for (name, n) in [("big", 120), ("small", 12), ("exact", 50)] {
            ds.insert(name.to_string(), fixtures::dataset(TaskKind::Ner, name, n, 0.0, 1));
        }
        let plan = MixturePlan {
            cap: 50,
            ..Default::default()
        };
        let m = mix_proportional(&ds, &plan).unwrap();
        let counts: BTreeMap<_, _> = m.stats.iter().map(|s| (s.dataset.as_str(), s.sampled)).collect();
        assert_eq!(counts, BTreeMap::from([("big", 50), ("exact", 50), ("small", 12)]));
        assert_eq!(m.instances.len(), 112);
        let ids: HashSet<_> = m.instances.iter().map(|i| &i.id).collect();
        assert_eq!(ids.len(), 112);

        let quota = MixturePlan {
            quotas: BTreeMap::from([("big".into(), 17), ("small".into(), 12)]),
            ..plan.clone()
        };
        let m = mix_proportional(&ds, &quota).unwrap();
        assert_eq!(m.stats[0].sampled, 17);
        let over = MixturePlan {
            quotas: BTreeMap::from([("small".into(), 13)]),
            ..plan
        };
        let err = mix_proportional(&ds, &over).unwrap_err();
        assert!(err.is_config() && err.to_string().contains("small"));
    }

    #[test]
    fn general_mixture_sizes() {
        assert_eq!(general_mix_sizes(2000, 8000, 0.2).unwrap(), (2000, 8000));
        assert_eq!(general_mix_sizes(2000, 8000, 0.5).unwrap(), (2000, 2000));
        let (ie, g) = general_mix_sizes(83_585, 320_000, 0.2).unwrap();
        assert!((ie as f64 / (ie + g) as f64 - 0.2).abs() <= 1.0 / (ie + g) as f64);
        assert!(general_mix_sizes(1, 1, 0.001).is_err());
        assert!(general_mix_sizes(0, 5, 0.2).is_err());
        let ie: Vec<u32> = (0..20).collect();
        let gen: Vec<String> = (0..200).map(|i| i.to_string()).collect();
        let mixed = mix_general(&ie, &gen, 0.2, 3).unwrap();
        assert_eq!(mixed.len(), 100);
        assert_eq!(mixed.iter().filter(|m| matches!(m, Mixed::Ie(_))).count(), 20);
        assert_eq!(mixed, mix_general(&ie, &gen, 0.2, 3).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn na_filter_never_drops_non_na(seed in 0u64..1000, rate in 0.0f64..=1.0) {
            let data = fixtures::dataset(TaskKind::Ed, "p", 40, 0.5, seed);
            let kept = filter_na(data.clone(), rate, seed).unwrap();
            let kept_ids: HashSet<_> = kept.iter().map(|i| i.id.clone()).collect();
            for i in data.iter().filter(|i| !i.is_na) {
                proptest::prop_assert!(kept_ids.contains(&i.id));
            }
            let order: Vec<_> = data.iter().filter(|i| kept_ids.contains(&i.id)).map(|i| &i.id).collect();
            proptest::prop_assert_eq!(order, kept.iter().map(|i| &i.id).collect::<Vec<_>>());
        }

        #[test]
        fn general_mix_hits_the_rate(n_ie in 1usize..500, n_gen in 1usize..500, rate in 0.05f64..0.95) {
            if let Ok((ie, g)) = general_mix_sizes(n_ie, n_gen, rate) {
                let total = (ie + g) as f64;
                proptest::prop_assert!((ie as f64 / total - rate).abs() <= 1.0 / total + 1e-12);
                proptest::prop_assert!(ie <= n_ie && g <= n_gen);
                proptest::prop_assert!(ie == n_ie || g == n_gen);
            }
        }
    }
}
