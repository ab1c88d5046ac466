use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Extraction, SchemaDef, SlotValue, TaskKind};
use crate::seed::digest_hex;

/// One canonical labeled IE example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IEInstance {
    pub id: String,
    pub dataset: String,
    pub task: TaskKind,
    pub text: String,
    pub schema: Option<SchemaDef>,
    pub gold: Extraction,
    pub is_na: bool,
}

impl IEInstance {
    /// Builds an instance with a stable id and `is_na` derived from the gold.
    pub fn new(
        dataset: impl Into<String>,
        index: u64,
        text: impl Into<String>,
        schema: Option<SchemaDef>,
        gold: Extraction,
    ) -> Self {
        let dataset = dataset.into();
        let text = text.into();
        let task = gold.task();
        IEInstance {
            id: stable_id(&dataset, index, &text),
            is_na: task != TaskKind::OnDemandIe && gold.is_empty(),
            dataset,
            task,
            text,
            schema,
            gold,
        }
    }
}

/// `<dataset>-<index>-<first 16 hex chars of SHA-256(dataset, index, text)>`.
pub fn stable_id(dataset: &str, index: u64, text: &str) -> String {
    let mut buf = Vec::with_capacity(dataset.len() + text.len() + 24);
    buf.extend_from_slice(dataset.as_bytes());
    buf.push(0);
    buf.extend_from_slice(index.to_string().as_bytes());
    buf.push(0);
    buf.extend_from_slice(text.as_bytes());
    let digest = digest_hex(&buf);
    format!("{dataset}-{index}-{}", &digest[..16])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Lists every broken instance invariant; empty when the instance is valid.
pub fn validate_instance(inst: &IEInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if inst.id.trim().is_empty() {
        out.push(Violation::new("id", "empty id"));
    }
    if inst.text.trim().is_empty() {
        out.push(Violation::new("text", "empty text"));
    }
    if inst.gold.task() != inst.task {
        out.push(Violation::new(
            "gold",
            format!("gold is {} but task is {}", inst.gold.task(), inst.task),
        ));
        return out;
    }

    match (&inst.schema, inst.task.is_closed()) {
        (None, true) => out.push(Violation::new("schema", "closed IE task without schema")),
        (Some(s), _) => {
            if s.task != inst.task {
                out.push(Violation::new(
                    "schema.task",
                    format!("schema is for {} but task is {}", s.task, inst.task),
                ));
            }
            if s.labels.is_empty() && inst.task.is_closed() {
                out.push(Violation::new("schema.labels", "empty schema"));
            }
            out.extend(s.violations().into_iter().map(|r| Violation::new("schema", r)));
            if inst.task.is_closed() {
                for label in inst.gold.labels() {
                    if !s.contains(&label) {
                        out.push(Violation::new(
                            "gold",
                            format!("label {label:?} not in schema"),
                        ));
                    }
                }
            }
        }
        (None, false) => {}
    }

    for dup in inst.gold.duplicates() {
        out.push(Violation::new("gold", format!("duplicate tuple {dup}")));
    }

    let slots = inst.task.slots();
    for item in inst.gold.to_items() {
        for (def, value) in slots.iter().zip(&item) {
            match value {
                SlotValue::Text(Some(v)) if v.trim().is_empty() => out.push(Violation::new(
                    "gold",
                    format!("empty value in slot {}", def.name),
                )),
                SlotValue::Text(None) if !def.optional => out.push(Violation::new(
                    "gold",
                    format!("missing required slot {}", def.name),
                )),
                SlotValue::List(pairs) => {
                    if pairs.iter().flatten().any(|v| v.trim().is_empty()) {
                        out.push(Violation::new("gold", "empty value in argument"));
                    }
                }
                _ => {}
            }
        }
    }
    if let Extraction::Rc(v) = &inst.gold {
        if v.len() > 1 {
            out.push(Violation::new("gold", "RC holds at most one relation"));
        }
    }
    if let Extraction::Eae(frame) = &inst.gold {
        if frame.trigger.trim().is_empty() {
            out.push(Violation::new("gold.trigger", "EAE frame without trigger"));
        }
    }

    let expect_na = inst.task != TaskKind::OnDemandIe && inst.gold.is_empty();
    if inst.is_na != expect_na {
        out.push(Violation::new(
            "is_na",
            format!("is_na = {} but gold has {} items", inst.is_na, inst.gold.len()),
        ));
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    dataset: String,
    task: TaskKind,
    text: String,
    schema: Option<SchemaDef>,
    gold: serde_json::Value,
    is_na: bool,
}

impl Serialize for IEInstance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        Record {
            id: self.id.clone(),
            dataset: self.dataset.clone(),
            task: self.task,
            text: self.text.clone(),
            schema: self.schema.clone(),
            gold: self.gold.to_json(),
            is_na: self.is_na,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IEInstance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = Record::deserialize(deserializer)?;
        let gold = Extraction::from_json(r.task, r.gold).map_err(serde::de::Error::custom)?;
        Ok(IEInstance {
            id: r.id,
            dataset: r.dataset,
            task: r.task,
            text: r.text,
            schema: r.schema,
            gold,
            is_na: r.is_na,
        })
    }
}
