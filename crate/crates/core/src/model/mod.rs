//! Canonical data model shared by every pipeline stage.

mod example;
mod extraction;
mod instance;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use example::{AlignmentExample, Demonstration, PairOrigin, PreferencePair, SchemaView};
pub use extraction::{
    Argument, ArgumentFrame, Entity, Event, EventRelation, Extraction, Item, OpenTuple, Relation,
    SlotValue, Trigger,
};
pub use instance::{stable_id, validate_instance, IEInstance, Violation};

use crate::error::{Error, Result};

/// The closed set of IE tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RC")]
    Rc,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "ED")]
    Ed,
    #[serde(rename = "EAE")]
    Eae,
    #[serde(rename = "EE")]
    Ee,
    #[serde(rename = "ERE")]
    Ere,
    #[serde(rename = "OpenIE")]
    OpenIe,
    #[serde(rename = "OnDemandIE")]
    OnDemandIe,
}

/// One answer slot of a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotDef {
    pub name: &'static str,
    pub optional: bool,
    /// Slot values must be schema labels.
    pub label: bool,
    /// Slot holds a nested list of (word, role) pairs.
    pub list: bool,
}

const fn slot(name: &'static str) -> SlotDef {
    SlotDef {
        name,
        optional: false,
        label: false,
        list: false,
    }
}

const fn label(name: &'static str) -> SlotDef {
    SlotDef {
        name,
        optional: false,
        label: true,
        list: false,
    }
}

const fn optional(name: &'static str) -> SlotDef {
    SlotDef {
        name,
        optional: true,
        label: false,
        list: false,
    }
}

const NER_SLOTS: &[SlotDef] = &[slot("entity"), label("type")];
const REL_SLOTS: &[SlotDef] = &[slot("subject"), label("relation"), slot("object")];
const ED_SLOTS: &[SlotDef] = &[slot("event"), label("class")];
const EAE_SLOTS: &[SlotDef] = &[slot("word"), label("role")];
const EE_SLOTS: &[SlotDef] = &[
    slot("event"),
    label("class"),
    SlotDef {
        name: "arguments",
        optional: false,
        label: false,
        list: true,
    },
];
const ERE_SLOTS: &[SlotDef] = &[slot("first event"), label("relation"), slot("second event")];
const OPENIE_SLOTS: &[SlotDef] = &[
    slot("predicate"),
    slot("subject"),
    slot("object"),
    optional("time"),
    optional("location"),
];

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::Ner,
        TaskKind::Rc,
        TaskKind::Re,
        TaskKind::Ed,
        TaskKind::Eae,
        TaskKind::Ee,
        TaskKind::Ere,
        TaskKind::OpenIe,
        TaskKind::OnDemandIe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Ner => "NER",
            TaskKind::Rc => "RC",
            TaskKind::Re => "RE",
            TaskKind::Ed => "ED",
            TaskKind::Eae => "EAE",
            TaskKind::Ee => "EE",
            TaskKind::Ere => "ERE",
            TaskKind::OpenIe => "OpenIE",
            TaskKind::OnDemandIe => "OnDemandIE",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            TaskKind::Ner => "Named Entity Recognition",
            TaskKind::Rc => "Relation Classification",
            TaskKind::Re => "Relation Extraction",
            TaskKind::Ed => "Event Detection",
            TaskKind::Eae => "Event Argument Extraction",
            TaskKind::Ee => "Event Extraction",
            TaskKind::Ere => "Event Relation Extraction",
            TaskKind::OpenIe => "Open Information Extraction",
            TaskKind::OnDemandIe => "On-demand Information Extraction",
        }
    }

    /// Closed IE tasks carry a schema.
    pub fn is_closed(self) -> bool {
        !matches!(self, TaskKind::OpenIe | TaskKind::OnDemandIe)
    }

    /// Answer slots in canonical order. Empty for on-demand IE, whose answer
    /// is a markdown table.
    pub fn slots(self) -> &'static [SlotDef] {
        match self {
            TaskKind::Ner => NER_SLOTS,
            TaskKind::Rc | TaskKind::Re => REL_SLOTS,
            TaskKind::Ed => ED_SLOTS,
            TaskKind::Eae => EAE_SLOTS,
            TaskKind::Ee => EE_SLOTS,
            TaskKind::Ere => ERE_SLOTS,
            TaskKind::OpenIe => OPENIE_SLOTS,
            TaskKind::OnDemandIe => &[],
        }
    }

    /// Sub-slots of the nested list slot (event extraction arguments).
    pub fn list_slots(self) -> &'static [SlotDef] {
        match self {
            TaskKind::Ee => EAE_SLOTS,
            _ => &[],
        }
    }

    pub fn is_slot_name(self, name: &str) -> bool {
        self.slots().iter().any(|s| s.name == name) || self.list_slots().iter().any(|s| s.name == name)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .or(match s.to_ascii_lowercase().as_str() {
                "openie" | "open_ie" | "open-ie" => Some(TaskKind::OpenIe),
                "ondemand" | "odie" | "on-demand" | "ondemandie" => Some(TaskKind::OnDemandIe),
                _ => None,
            })
            .ok_or_else(|| Error::config(format!("unknown task kind {s:?}")))
    }
}

/// One schema label with optional guideline and exemplar mentions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<String>,
}

impl LabelDef {
    pub fn new(name: impl Into<String>) -> Self {
        LabelDef {
            name: name.into(),
            guideline: None,
            exemplars: Vec::new(),
        }
    }

    pub fn with_guideline(mut self, guideline: impl Into<String>) -> Self {
        self.guideline = Some(guideline.into());
        self
    }

    pub fn with_exemplars<I, S>(mut self, exemplars: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.exemplars = exemplars.into_iter().map(Into::into).collect();
        self
    }
}

/// A task's label inventory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDef {
    pub task: TaskKind,
    pub labels: Vec<LabelDef>,
}

impl SchemaDef {
    pub fn new<I, S>(task: TaskKind, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SchemaDef {
            task,
            labels: names.into_iter().map(|n| LabelDef::new(n)).collect(),
        }
    }

    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.labels.iter().any(|l| l.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&LabelDef> {
        self.labels.iter().find(|l| l.name == name)
    }

    /// Schema-level invariant violations (duplicate names, empty guidelines).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for l in &self.labels {
            if l.name.trim().is_empty() {
                out.push("schema.labels: empty label name".to_string());
            }
            if !seen.insert(l.name.as_str()) {
                out.push(format!("schema.labels: duplicate label {:?}", l.name));
            }
            if matches!(&l.guideline, Some(g) if g.trim().is_empty()) {
                out.push(format!("schema.labels: empty guideline for {:?}", l.name));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormatFamily {
    Triplet,
    Json,
    NaturalLanguage,
    Markdown,
}

/// Nested list rendering, used for event arguments inside an event item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListGrammar {
    pub item_template: String,
    pub open: String,
    pub close: String,
    pub separator: String,
}

/// JSON answer layout: `{"task": <task>, <items_key>: [ {<key>: value} ]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonShape {
    pub items_key: String,
    /// Slot name -> JSON key. Slots not listed use their own name.
    #[serde(default)]
    pub keys: BTreeMap<String, String>,
}

impl JsonShape {
    pub fn key_for<'a>(&'a self, slot: &'a str) -> &'a str {
        self.keys.get(slot).map(String::as_str).unwrap_or(slot)
    }
}

fn default_separator() -> String {
    "; ".to_string()
}

/// An output-format contract: what the prompt asks for, and how answers are
/// rendered and parsed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatSpec {
    pub name: String,
    pub task: TaskKind,
    pub family: FormatFamily,
    /// Output-format description shown in the prompt.
    pub input_template: String,
    #[serde(default)]
    pub answer_prefix: String,
    /// Per-item template with `{slot}` placeholders (template families).
    #[serde(default)]
    pub answer_template: String,
    #[serde(default = "default_separator")]
    pub item_separator: String,
    #[serde(default)]
    pub trailing_separator: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<ListGrammar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<JsonShape>,
    pub fail_output: String,
}

impl FormatSpec {
    /// Placeholder names in `answer_template` (and the list item template).
    pub fn answer_placeholders(&self) -> Vec<String> {
        let mut out = placeholders(&self.answer_template);
        if let Some(list) = &self.list {
            out.extend(placeholders(&list.item_template));
        }
        out
    }

    /// Checks the FormatSpec invariants.
    pub fn validate(&self) -> Result<()> {
        if self.fail_output.trim().is_empty() {
            return Err(Error::config(format!("format {}: empty fail output", self.name)));
        }
        for p in self.answer_placeholders() {
            if !self.task.is_slot_name(&p) {
                return Err(Error::config(format!(
                    "format {}: placeholder {{{p}}} is not a {} slot",
                    self.name, self.task
                )));
            }
        }
        match self.family {
            FormatFamily::Markdown if self.task != TaskKind::OnDemandIe => Err(Error::config(
                format!("format {}: markdown family is only for on-demand IE", self.name),
            )),
            FormatFamily::Json if self.json.is_none() => Err(Error::config(format!(
                "format {}: json family requires a json shape",
                self.name
            ))),
            FormatFamily::Triplet | FormatFamily::NaturalLanguage => {
                if self.task == TaskKind::OnDemandIe {
                    return Err(Error::config(format!(
                        "format {}: on-demand IE answers are markdown",
                        self.name
                    )));
                }
                let names = self.answer_placeholders();
                for s in self.task.slots() {
                    if !s.optional && !s.list && !names.iter().any(|n| n == s.name) {
                        return Err(Error::config(format!(
                            "format {}: answer template lacks required slot {{{}}}",
                            self.name, s.name
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `{name}` placeholders in a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find(['}', '{']) {
            Some(end) if after.as_bytes()[end] == b'}' => {
                let name = &after[..end];
                if !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ' ')
                {
                    out.push(name.to_string());
                }
                rest = &after[end + 1..];
            }
            Some(end) => rest = &after[end..],
            None => break,
        }
    }
    out
}
