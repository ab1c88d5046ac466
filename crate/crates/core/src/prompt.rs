//! Input side of an alignment example: task description, schema view,
//! output-format description, demonstrations and the final input block.
//!
//! Prompt layout (sections separated by a blank line):
//!
//! ```text
//! <task description>
//!
//! Schema:                 (closed IE only)
//! - PER: guideline ...    (guideline and exemplars only when included)
//!
//! <format description>    (not for on-demand IE)
//!
//! Example 1:
//! Text: ...
//! Output: ...
//!
//! Text: <input text>
//! Trigger: <trigger> (<event type>)   (argument extraction only)
//! Output:
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::answer::serialize_answer;
use crate::assets::{manual_descriptions, pool_dir_name, read_pool_lines};
use crate::error::{Error, Result};
use crate::model::{
    placeholders, Demonstration, Extraction, FormatSpec, IEInstance, LabelDef, SchemaDef,
    SchemaView, TaskKind,
};
use crate::seed::{derive_seed, rng_for};

pub const SCHEMA_HEADER: &str = "Schema:";
pub const MAX_EXEMPLARS: usize = 3;

/// Task descriptions for one task. Only reviewed texts belong in
/// `generated`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionPool {
    pub task: TaskKind,
    pub manual: Vec<String>,
    #[serde(default)]
    pub generated: Vec<String>,
}

impl DescriptionPool {
    pub fn new(task: TaskKind, manual: Vec<String>) -> Self {
        DescriptionPool {
            task,
            manual,
            generated: Vec::new(),
        }
    }

    /// The bundled manual descriptions.
    pub fn bundled(task: TaskKind) -> Self {
        Self::new(task, manual_descriptions(task))
    }

    /// Reads `<dir>/<task>/manual.txt` and, if present, `generated.txt`.
    pub fn load(dir: &Path, task: TaskKind) -> Result<Self> {
        let sub = dir.join(pool_dir_name(task));
        let manual_path = sub.join("manual.txt");
        let manual = fs::read_to_string(&manual_path).map_err(|e| {
            Error::config(format!("description pool {}: {e}", manual_path.display()))
        })?;
        let generated_path = sub.join("generated.txt");
        let generated = match fs::read_to_string(&generated_path) {
            Ok(s) => read_pool_lines(&s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(generated_path, e)),
        };
        Ok(DescriptionPool {
            task,
            manual: read_pool_lines(&manual),
            generated,
        })
    }

    /// Writes the pool back as `<dir>/<task>/{manual,generated}.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let sub = dir.join(pool_dir_name(self.task));
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (name, lines) in [("manual.txt", &self.manual), ("generated.txt", &self.generated)] {
            let path = sub.join(name);
            let mut body = lines.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.manual.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &str> {
        self.manual.iter().chain(&self.generated).map(String::as_str)
    }
}

/// Uniform draw over manual and generated descriptions.
pub fn sample_task_description(pool: &DescriptionPool, seed: u64) -> Result<String> {
    if pool.is_empty() {
        return Err(Error::config(format!(
            "empty task description pool for {}",
            pool.task
        )));
    }
    let i = crate::seed::rng(seed).random_range(0..pool.len());
    Ok(pool.all().nth(i).expect("index in range").to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemaAugmentOptions {
    pub shuffle: bool,
    pub subset: bool,
    pub guideline_rate: f64,
    pub symbol_rate: f64,
    pub symbol_prefix: String,
}

impl Default for SchemaAugmentOptions {
    fn default() -> Self {
        SchemaAugmentOptions {
            shuffle: true,
            subset: true,
            guideline_rate: 0.2,
            symbol_rate: 0.1,
            symbol_prefix: "LABEL_".into(),
        }
    }
}

impl SchemaAugmentOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("guideline_rate", self.guideline_rate), ("symbol_rate", self.symbol_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.symbol_prefix.is_empty() {
            return Err(Error::config("symbol_prefix must not be empty"));
        }
        Ok(())
    }
}

/// Samples the schema view shown for one example and restricts (and, when
/// symbolized, renames) the gold accordingly.
///
/// Subset, order, guideline and symbol decisions use independent streams
/// derived from `seed`, so flipping one option leaves the others unchanged.
pub fn augment_schema(
    schema: &SchemaDef,
    gold: &Extraction,
    opts: &SchemaAugmentOptions,
    seed: u64,
) -> Result<(SchemaView, Extraction)> {
    if schema.labels.is_empty() {
        return Err(Error::data(format!("empty schema for {}", schema.task)));
    }
    let n = schema.labels.len();
    let mut idx: Vec<usize> = (0..n).collect();
    if opts.subset {
        let mut r = rng_for(seed, &["subset"]);
        let k = r.random_range(1..=n);
        idx = rand::seq::index::sample(&mut r, n, k).into_vec();
        idx.sort_unstable();
    }
    if opts.shuffle {
        idx.shuffle(&mut rng_for(seed, &["order"]));
    }
    let guidelines = rng_for(seed, &["guideline"]).random_bool(opts.guideline_rate);
    let symbolize = rng_for(seed, &["symbol"]).random_bool(opts.symbol_rate);

    let mut labels: Vec<LabelDef> = idx
        .iter()
        .map(|&i| {
            let src = &schema.labels[i];
            let mut l = LabelDef::new(src.name.clone());
            if guidelines {
                l.guideline = src.guideline.clone();
                l.exemplars = src.exemplars.iter().take(MAX_EXEMPLARS).cloned().collect();
            }
            l
        })
        .collect();
    let keep: HashSet<String> = labels.iter().map(|l| l.name.clone()).collect();
    let mut restricted = gold.retain_labels(&keep);

    let mut symbols = None;
    if symbolize {
        let mut forward = HashMap::new();
        let mut inverse = BTreeMap::new();
        for (i, l) in labels.iter_mut().enumerate() {
            let sym = format!("{}{}", opts.symbol_prefix, i + 1);
            if schema.contains(&sym) {
                return Err(Error::config(format!(
                    "symbol {sym} collides with a label of the {} schema",
                    schema.task
                )));
            }
            forward.insert(l.name.clone(), sym.clone());
            inverse.insert(sym.clone(), std::mem::replace(&mut l.name, sym));
        }
        restricted = restricted.rename_labels(&forward);
        symbols = Some(inverse);
    }
    Ok((
        SchemaView {
            labels,
            symbols,
            guidelines_included: guidelines,
        },
        restricted,
    ))
}

/// The view with original label names restored.
pub fn desymbolize_view(view: &SchemaView) -> SchemaView {
    let Some(map) = &view.symbols else {
        return view.clone();
    };
    SchemaView {
        labels: view
            .labels
            .iter()
            .map(|l| LabelDef {
                name: map.get(&l.name).cloned().unwrap_or_else(|| l.name.clone()),
                ..l.clone()
            })
            .collect(),
        symbols: None,
        guidelines_included: view.guidelines_included,
    }
}

/// Renames symbolized labels in `gold` back to the original names.
pub fn desymbolize_gold(view: &SchemaView, gold: &Extraction) -> Extraction {
    match &view.symbols {
        Some(map) => gold.rename_labels(&map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        None => gold.clone(),
    }
}

/// Restricts a demonstration's gold to `view` and applies its symbol map.
pub fn project_gold(view: &SchemaView, gold: &Extraction) -> Extraction {
    match &view.symbols {
        Some(map) => {
            let forward: HashMap<String, String> =
                map.iter().map(|(s, o)| (o.clone(), s.clone())).collect();
            let keep = forward.keys().cloned().collect();
            gold.retain_labels(&keep).rename_labels(&forward)
        }
        None => {
            let keep = view.labels.iter().map(|l| l.name.clone()).collect();
            gold.retain_labels(&keep)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoOptions {
    pub rate: f64,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            rate: 0.5,
            k_min: 1,
            k_max: 8,
        }
    }
}

impl DemoOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::config(format!("demo rate must be in [0, 1], got {}", self.rate)));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::config(format!(
                "demo k range [{}, {}] is invalid",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }
}

/// Outcome of one demonstration draw.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemoDraw {
    pub demos: Vec<Demonstration>,
    /// Requested count (0 when the coin said no demonstrations).
    pub requested: usize,
    pub shortfall: usize,
}

/// The `Text:` block of an instance (plus the trigger line for argument
/// extraction).
pub fn input_block(inst: &IEInstance) -> String {
    let mut s = format!("Text: {}", inst.text);
    if let Extraction::Eae(frame) = &inst.gold {
        s.push_str(&format!("\nTrigger: {} ({})", frame.trigger, frame.event_type));
    }
    s
}

/// Renders `inst` as a demonstration under the example's format and view.
pub fn render_demo(
    inst: &IEInstance,
    format: &FormatSpec,
    view: Option<&SchemaView>,
    seed: u64,
) -> Result<Demonstration> {
    let gold = match view {
        Some(v) => project_gold(v, &inst.gold),
        None => inst.gold.clone(),
    };
    Ok(Demonstration {
        instance_id: inst.id.clone(),
        input: input_block(inst),
        answer: serialize_answer(&gold, format, derive_seed(seed, &[&inst.id]))?,
    })
}

/// Draws demonstrations for the instance `target_id` from `pool`.
///
/// With probability `opts.rate`, `k ~ U[k_min, k_max]` pool instances (never
/// the target itself, never a different task) are rendered with the
/// example's format and view, in random order. A pool smaller than `k` is
/// used in full and the shortfall is logged.
pub fn sample_demonstrations(
    target_id: &str,
    task: TaskKind,
    pool: &[IEInstance],
    format: &FormatSpec,
    view: Option<&SchemaView>,
    opts: &DemoOptions,
    seed: u64,
) -> Result<DemoDraw> {
    let mut rng = rng_for(seed, &["demos"]);
    if !rng.random_bool(opts.rate) {
        return Ok(DemoDraw::default());
    }
    let k = rng.random_range(opts.k_min..=opts.k_max);
    let eligible: Vec<&IEInstance> = pool
        .iter()
        .filter(|i| i.id != target_id && i.task == task)
        .collect();
    let mut chosen: Vec<&IEInstance> = eligible.choose_multiple(&mut rng, k).copied().collect();
    chosen.shuffle(&mut rng);
    let shortfall = k - chosen.len();
    if shortfall > 0 {
        tracing::warn!(target_id, k, available = chosen.len(), "demonstration pool short");
    }
    let demos = chosen
        .into_iter()
        .map(|inst| render_demo(inst, format, view, seed))
        .collect::<Result<_>>()?;
    Ok(DemoDraw {
        demos,
        requested: k,
        shortfall,
    })
}

/// Renders the schema section (without surrounding blank lines).
pub fn render_schema(view: &SchemaView) -> String {
    let mut s = String::from(SCHEMA_HEADER);
    for l in &view.labels {
        s.push_str("\n- ");
        s.push_str(&l.name);
        if view.guidelines_included {
            if let Some(g) = &l.guideline {
                s.push_str(": ");
                s.push_str(g);
            }
            if !l.exemplars.is_empty() {
                let ex: Vec<String> = l.exemplars.iter().map(|e| format!("\"{e}\"")).collect();
                s.push_str(&format!(" Examples: {}.", ex.join(", ")));
            }
        }
    }
    s
}

/// Label names listed in the schema section of an assembled prompt.
pub fn schema_section_labels(prompt: &str, view: Option<&SchemaView>) -> Option<Vec<String>> {
    let start = if prompt.starts_with(SCHEMA_HEADER) {
        0
    } else {
        prompt.find(&format!("\n\n{SCHEMA_HEADER}\n"))? + 2
    };
    let body = &prompt[start + SCHEMA_HEADER.len()..];
    let mut out = Vec::new();
    for line in body.lines().skip(1) {
        let Some(entry) = line.strip_prefix("- ") else {
            break;
        };
        // With a view the exact names are known; otherwise cut at ": ".
        let name = match view {
            Some(v) => v
                .labels
                .iter()
                .map(|l| l.name.as_str())
                .filter(|n| entry == *n || entry.starts_with(&format!("{n}: ")) || entry.starts_with(&format!("{n} Examples: ")))
                .max_by_key(|n| n.len())
                .map(str::to_string),
            None => Some(entry.split(": ").next().unwrap_or(entry).to_string()),
        };
        out.extend(name);
    }
    Some(out)
}

fn substitute(
    section: &str,
    allowed: &dyn Fn(&str) -> bool,
    text: &str,
    used_text: &mut bool,
) -> Result<String> {
    let mut out = section.to_string();
    for name in placeholders(section) {
        if name == "text" {
            out = out.replace("{text}", text);
            *used_text = true;
        } else if !allowed(&name) {
            return Err(Error::Placeholder(name));
        }
    }
    Ok(out)
}

/// Assembles the instruction text. `{text}` anywhere in the task or format
/// description is replaced by the input text (which then is not repeated in
/// the final block); answer slot names in the format description are kept
/// verbatim; any other placeholder is an error.
pub fn assemble_input(
    inst: &IEInstance,
    view: Option<&SchemaView>,
    task_desc: &str,
    format: &FormatSpec,
    demos: &[Demonstration],
) -> Result<String> {
    if format.task != inst.task {
        return Err(Error::TaskMismatch {
            expected: inst.task.to_string(),
            found: format.task.to_string(),
        });
    }
    let task = inst.task;
    let mut used_text = false;
    let mut sections = vec![substitute(task_desc, &|_| false, &inst.text, &mut used_text)?];
    if task.is_closed() {
        let view = view.ok_or_else(|| {
            Error::data(format!("instance {}: closed IE prompt needs a schema view", inst.id))
        })?;
        sections.push(render_schema(view));
    }
    if task != TaskKind::OnDemandIe && !format.input_template.trim().is_empty() {
        let is_slot = |n: &str| {
            task.is_slot_name(n) || task.list_slots().iter().any(|s| s.name == n)
        };
        sections.push(substitute(&format.input_template, &is_slot, &inst.text, &mut used_text)?);
    }
    for (i, d) in demos.iter().enumerate() {
        sections.push(format!("Example {}:\n{}\nOutput: {}", i + 1, d.input, d.answer));
    }
    let block = input_block(inst);
    let last = if used_text {
        block.lines().skip(1).chain(["Output:"]).collect::<Vec<_>>().join("\n")
    } else {
        format!("{block}\nOutput:")
    };
    sections.push(last);
    Ok(sections.join("\n\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::formats_for;
    use crate::fixtures;
    use crate::model::Entity;

    fn ner_instance(pairs: &[(&str, &str)]) -> IEInstance {
        let gold = Extraction::Ner(
            pairs
                .iter()
                .map(|(m, l)| Entity {
                    mention: m.to_string(),
                    label: l.to_string(),
                })
                .collect(),
        );
        IEInstance::new("t", 0, "Obama visited Paris.", fixtures::schema(TaskKind::Ner), gold)
    }

    #[test]
    fn description_draws() {
        let one = DescriptionPool::new(TaskKind::Ner, vec!["only".into()]);
        for s in 0..20 {
            assert_eq!(sample_task_description(&one, s).unwrap(), "only");
        }
        let pool = DescriptionPool::bundled(TaskKind::Ner);
        assert_eq!(
            sample_task_description(&pool, 7).unwrap(),
            sample_task_description(&pool, 7).unwrap()
        );
        let empty = DescriptionPool::new(TaskKind::Ner, vec![]);
        assert!(sample_task_description(&empty, 0).unwrap_err().is_config());
    }

    #[test]
    fn restriction_and_symbols() {
        let schema = SchemaDef::new(TaskKind::Ner, ["A", "B", "C"]);
        let gold = Extraction::Ner(vec![
            Entity { mention: "x".into(), label: "A".into() },
            Entity { mention: "y".into(), label: "C".into() },
        ]);
        let full = SchemaAugmentOptions {
            subset: false,
            symbol_rate: 0.0,
            ..Default::default()
        };
        let (view, g) = augment_schema(&schema, &gold, &full, 3).unwrap();
        assert_eq!(view.labels.len(), 3);
        assert_eq!(g, gold);

        let sym = SchemaAugmentOptions {
            symbol_rate: 1.0,
            ..Default::default()
        };
        let plain = SchemaAugmentOptions {
            symbol_rate: 0.0,
            ..Default::default()
        };
        for seed in 0..50 {
            let (sv, sg) = augment_schema(&schema, &gold, &sym, seed).unwrap();
            let (pv, pg) = augment_schema(&schema, &gold, &plain, seed).unwrap();
            assert!(sv.labels.iter().enumerate().all(|(i, l)| l.name == format!("LABEL_{}", i + 1)));
            assert_eq!(desymbolize_view(&sv), pv);
            assert_eq!(desymbolize_gold(&sv, &sg), pg);
            for l in sg.labels() {
                assert!(sv.contains(&l));
            }
        }
    }

    #[test]
    fn symbol_map_example() {
        let view = SchemaView {
            labels: vec![LabelDef::new("LABEL_1"), LabelDef::new("LABEL_2")],
            symbols: Some(BTreeMap::from([
                ("LABEL_1".to_string(), "PER".to_string()),
                ("LABEL_2".to_string(), "LOC".to_string()),
            ])),
            guidelines_included: false,
        };
        let gold = ner_instance(&[("Obama", "PER")]).gold;
        let projected = project_gold(&view, &gold);
        assert_eq!(projected.labels(), vec!["LABEL_1".to_string()]);
    }

    #[test]
    fn layout_and_sections() {
        let inst = ner_instance(&[("Obama", "PER"), ("Paris", "LOC")]);
        let view = SchemaView {
            labels: vec![LabelDef::new("LOC"), LabelDef::new("PER")],
            symbols: None,
            guidelines_included: false,
        };
        let spec = &formats_for(TaskKind::Ner)[0];
        let demo = |id: &str| Demonstration {
            instance_id: id.into(),
            input: "Text: d".into(),
            answer: "NA".into(),
        };
        let p = assemble_input(&inst, Some(&view), "Find entities.", spec, &[demo("a"), demo("b")]).unwrap();
        let schema_at = p.find("Schema:").unwrap();
        let format_at = p.find(&spec.input_template).unwrap();
        let ex1 = p.find("Example 1:").unwrap();
        let ex2 = p.find("Example 2:").unwrap();
        let text_at = p.rfind("Text: Obama").unwrap();
        assert!(p.starts_with("Find entities.\n\n"));
        assert!(schema_at < format_at && format_at < ex1 && ex1 < ex2 && ex2 < text_at);
        assert!(p.ends_with("Output:"));
        assert_eq!(schema_section_labels(&p, None).unwrap(), vec!["LOC", "PER"]);
    }

    #[test]
    fn open_and_ondemand_sections() {
        let o = fixtures::dataset(TaskKind::OpenIe, "o", 1, 0.0, 1).remove(0);
        let spec = &formats_for(TaskKind::OpenIe)[0];
        let p = assemble_input(&o, None, "Extract facts.", spec, &[]).unwrap();
        assert!(!p.contains(SCHEMA_HEADER));
        assert!(p.contains(&spec.input_template));

        let d = fixtures::dataset(TaskKind::OnDemandIe, "d", 1, 0.0, 2).remove(0);
        let spec = &formats_for(TaskKind::OnDemandIe)[0];
        let p = assemble_input(&d, None, "Build the table.", spec, &[]).unwrap();
        assert_eq!(p, format!("Build the table.\n\nText: {}\nOutput:", d.text));
    }

    #[test]
    fn placeholders_resolve_or_fail() {
        let inst = ner_instance(&[]);
        let view = SchemaView {
            labels: vec![LabelDef::new("PER")],
            symbols: None,
            guidelines_included: false,
        };
        let spec = &formats_for(TaskKind::Ner)[0];
        let p = assemble_input(&inst, Some(&view), "Read {text} and find entities.", spec, &[]).unwrap();
        assert!(p.starts_with("Read Obama visited Paris. and find entities."));
        assert!(!p.contains("Text: Obama"));
        match assemble_input(&inst, Some(&view), "Use {language}.", spec, &[]) {
            Err(Error::Placeholder(name)) => assert_eq!(name, "language"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eae_trigger_line() {
        let inst = fixtures::dataset(TaskKind::Eae, "e", 1, 0.0, 3).remove(0);
        let Extraction::Eae(frame) = &inst.gold else { unreachable!() };
        assert!(input_block(&inst).ends_with(&format!("Trigger: {} ({})", frame.trigger, frame.event_type)));
    }

    #[test]
    fn demonstrations_exclude_self_and_follow_view() {
        let pool = fixtures::dataset(TaskKind::Ner, "n", 6, 0.0, 4);
        let spec = &formats_for(TaskKind::Ner)[0];
        let view = SchemaView {
            labels: vec![LabelDef::new("PER")],
            symbols: None,
            guidelines_included: false,
        };
        let opts = DemoOptions {
            rate: 1.0,
            k_min: 8,
            k_max: 8,
        };
        let d = sample_demonstrations(&pool[0].id, TaskKind::Ner, &pool, spec, Some(&view), &opts, 9).unwrap();
        assert_eq!((d.requested, d.demos.len(), d.shortfall), (8, 5, 3));
        assert!(d.demos.iter().all(|x| x.instance_id != pool[0].id));
        for demo in &d.demos {
            let parsed = crate::answer::parse_answer(&demo.answer, spec, Some(&view), crate::answer::ParseMode::Strict).unwrap();
            assert!(parsed.extraction.labels().iter().all(|l| l == "PER"));
        }
        let again = sample_demonstrations(&pool[0].id, TaskKind::Ner, &pool, spec, Some(&view), &opts, 9).unwrap();
        assert_eq!(d, again);
        let none = DemoOptions { rate: 0.0, ..Default::default() };
        assert!(sample_demonstrations(&pool[0].id, TaskKind::Ner, &pool, spec, Some(&view), &none, 9).unwrap().demos.is_empty());
    }
}
