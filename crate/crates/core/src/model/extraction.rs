//! Gold and predicted extractions.
//!
//! Every closed/open task is also viewable as a list of slot tuples
//! ([`Item`]) in the task's canonical slot order. The answer grammars, label
//! restriction and symbolization all work on that uniform view.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::TaskKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub mention: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub trigger: String,
    pub event_type: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Argument {
    pub text: String,
    pub role: String,
}

/// Event argument extraction gold: the arguments of one given trigger.
///
/// The trigger is part of the input; only the arguments are answer items.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgumentFrame {
    pub trigger: String,
    #[serde(default)]
    pub event_type: String,
    pub arguments: Vec<Argument>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub trigger: String,
    pub event_type: String,
    #[serde(default)]
    pub arguments: Vec<Argument>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRelation {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenTuple {
    pub predicate: String,
    pub subject: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

/// One extraction, tagged by task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extraction {
    Ner(Vec<Entity>),
    /// At most one relation; an empty list is the null relation.
    Rc(Vec<Relation>),
    Re(Vec<Relation>),
    Ed(Vec<Trigger>),
    Eae(ArgumentFrame),
    Ee(Vec<Event>),
    Ere(Vec<EventRelation>),
    OpenIe(Vec<OpenTuple>),
    /// Markdown table text.
    OnDemand(String),
}

/// A slot value inside an [`Item`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotValue {
    Text(Option<String>),
    /// Nested (word, role) pairs.
    List(Vec<Vec<String>>),
}

impl SlotValue {
    pub fn text(s: impl Into<String>) -> Self {
        SlotValue::Text(Some(s.into()))
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            SlotValue::Text(t) => t.as_deref(),
            SlotValue::List(_) => None,
        }
    }

    fn req(&self) -> String {
        self.as_text().unwrap_or_default().to_string()
    }

    fn opt(&self) -> Option<String> {
        self.as_text().map(str::to_string)
    }

    fn list(&self) -> Vec<Argument> {
        match self {
            SlotValue::List(pairs) => pairs
                .iter()
                .map(|p| Argument {
                    text: p.first().cloned().unwrap_or_default(),
                    role: p.get(1).cloned().unwrap_or_default(),
                })
                .collect(),
            SlotValue::Text(_) => Vec::new(),
        }
    }
}

/// Slot tuple in the task's canonical slot order.
pub type Item = Vec<SlotValue>;

fn t(s: &str) -> SlotValue {
    SlotValue::text(s)
}

fn args_value(args: &[Argument]) -> SlotValue {
    SlotValue::List(
        args.iter()
            .map(|a| vec![a.text.clone(), a.role.clone()])
            .collect(),
    )
}

impl Extraction {
    pub fn task(&self) -> TaskKind {
        match self {
            Extraction::Ner(_) => TaskKind::Ner,
            Extraction::Rc(_) => TaskKind::Rc,
            Extraction::Re(_) => TaskKind::Re,
            Extraction::Ed(_) => TaskKind::Ed,
            Extraction::Eae(_) => TaskKind::Eae,
            Extraction::Ee(_) => TaskKind::Ee,
            Extraction::Ere(_) => TaskKind::Ere,
            Extraction::OpenIe(_) => TaskKind::OpenIe,
            Extraction::OnDemand(_) => TaskKind::OnDemandIe,
        }
    }

    /// An empty extraction for `task`.
    pub fn empty(task: TaskKind) -> Self {
        match task {
            TaskKind::OnDemandIe => Extraction::OnDemand(String::new()),
            _ => Extraction::from_items(task, Vec::new()),
        }
    }

    /// Number of extracted items (an on-demand table counts as one).
    pub fn len(&self) -> usize {
        match self {
            Extraction::OnDemand(t) => usize::from(!t.trim().is_empty()),
            Extraction::Eae(f) => f.arguments.len(),
            Extraction::Ner(v) => v.len(),
            Extraction::Rc(v) | Extraction::Re(v) => v.len(),
            Extraction::Ed(v) => v.len(),
            Extraction::Ee(v) => v.len(),
            Extraction::Ere(v) => v.len(),
            Extraction::OpenIe(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items in canonical slot order. Empty for on-demand IE.
    pub fn to_items(&self) -> Vec<Item> {
        match self {
            Extraction::Ner(v) => v.iter().map(|e| vec![t(&e.mention), t(&e.label)]).collect(),
            Extraction::Rc(v) | Extraction::Re(v) => v
                .iter()
                .map(|r| vec![t(&r.subject), t(&r.relation), t(&r.object)])
                .collect(),
            Extraction::Ed(v) => v
                .iter()
                .map(|e| vec![t(&e.trigger), t(&e.event_type)])
                .collect(),
            Extraction::Eae(f) => f
                .arguments
                .iter()
                .map(|a| vec![t(&a.text), t(&a.role)])
                .collect(),
            Extraction::Ee(v) => v
                .iter()
                .map(|e| vec![t(&e.trigger), t(&e.event_type), args_value(&e.arguments)])
                .collect(),
            Extraction::Ere(v) => v
                .iter()
                .map(|r| vec![t(&r.head), t(&r.relation), t(&r.tail)])
                .collect(),
            Extraction::OpenIe(v) => v
                .iter()
                .map(|o| {
                    vec![
                        t(&o.predicate),
                        t(&o.subject),
                        t(&o.object),
                        SlotValue::Text(o.time.clone()),
                        SlotValue::Text(o.location.clone()),
                    ]
                })
                .collect(),
            Extraction::OnDemand(_) => Vec::new(),
        }
    }

    /// Builds an extraction from slot tuples. The EAE frame (trigger and
    /// event type) is left empty; see [`Extraction::with_items`].
    pub fn from_items(task: TaskKind, items: Vec<Item>) -> Self {
        let it = items.into_iter();
        match task {
            TaskKind::Ner => Extraction::Ner(
                it.map(|i| Entity {
                    mention: i[0].req(),
                    label: i[1].req(),
                })
                .collect(),
            ),
            TaskKind::Rc | TaskKind::Re => {
                let rels = it
                    .map(|i| Relation {
                        subject: i[0].req(),
                        relation: i[1].req(),
                        object: i[2].req(),
                    })
                    .collect();
                if task == TaskKind::Rc {
                    Extraction::Rc(rels)
                } else {
                    Extraction::Re(rels)
                }
            }
            TaskKind::Ed => Extraction::Ed(
                it.map(|i| Trigger {
                    trigger: i[0].req(),
                    event_type: i[1].req(),
                })
                .collect(),
            ),
            TaskKind::Eae => Extraction::Eae(ArgumentFrame {
                trigger: String::new(),
                event_type: String::new(),
                arguments: it
                    .map(|i| Argument {
                        text: i[0].req(),
                        role: i[1].req(),
                    })
                    .collect(),
            }),
            TaskKind::Ee => Extraction::Ee(
                it.map(|i| Event {
                    trigger: i[0].req(),
                    event_type: i[1].req(),
                    arguments: i[2].list(),
                })
                .collect(),
            ),
            TaskKind::Ere => Extraction::Ere(
                it.map(|i| EventRelation {
                    head: i[0].req(),
                    relation: i[1].req(),
                    tail: i[2].req(),
                })
                .collect(),
            ),
            TaskKind::OpenIe => Extraction::OpenIe(
                it.map(|i| OpenTuple {
                    predicate: i[0].req(),
                    subject: i[1].req(),
                    object: i[2].req(),
                    time: i[3].opt(),
                    location: i[4].opt(),
                })
                .collect(),
            ),
            TaskKind::OnDemandIe => Extraction::OnDemand(String::new()),
        }
    }

    /// Same task and frame as `self`, with the given items. On-demand
    /// tables have no items and are returned unchanged.
    pub fn with_items(&self, items: Vec<Item>) -> Self {
        if let Extraction::OnDemand(_) = self {
            return self.clone();
        }
        let mut out = Extraction::from_items(self.task(), items);
        if let (Extraction::Eae(src), Extraction::Eae(dst)) = (self, &mut out) {
            dst.trigger = src.trigger.clone();
            dst.event_type = src.event_type.clone();
        }
        out
    }

    /// Labels used by the items (entity types, relations, event types,
    /// roles), in order of first use.
    pub fn labels(&self) -> Vec<String> {
        let task = self.task();
        let slots = task.slots();
        let list_slots = task.list_slots();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut push = |s: &str| {
            if seen.insert(s.to_string()) {
                out.push(s.to_string());
            }
        };
        for item in self.to_items() {
            for (def, value) in slots.iter().zip(&item) {
                match value {
                    SlotValue::Text(Some(v)) if def.label => push(v),
                    SlotValue::List(pairs) => {
                        for pair in pairs {
                            for (sd, v) in list_slots.iter().zip(pair) {
                                if sd.label {
                                    push(v);
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Drops items (and nested arguments) whose label is not in `keep`.
    pub fn retain_labels(&self, keep: &HashSet<String>) -> Self {
        if matches!(self, Extraction::OnDemand(_)) {
            return self.clone();
        }
        let task = self.task();
        let slots = task.slots();
        let list_slots = task.list_slots();
        let items = self
            .to_items()
            .into_iter()
            .filter(|item| {
                slots.iter().zip(item).all(|(def, v)| match v {
                    SlotValue::Text(Some(s)) if def.label => keep.contains(s),
                    _ => true,
                })
            })
            .map(|item| {
                item.into_iter()
                    .map(|v| match v {
                        SlotValue::List(pairs) => SlotValue::List(
                            pairs
                                .into_iter()
                                .filter(|p| {
                                    list_slots
                                        .iter()
                                        .zip(p)
                                        .all(|(sd, s)| !sd.label || keep.contains(s))
                                })
                                .collect(),
                        ),
                        other => other,
                    })
                    .collect()
            })
            .collect();
        self.with_items(items)
    }

    /// Renames labels through `map`; labels absent from the map are kept.
    pub fn rename_labels(&self, map: &HashMap<String, String>) -> Self {
        if matches!(self, Extraction::OnDemand(_)) {
            return self.clone();
        }
        let task = self.task();
        let slots = task.slots();
        let list_slots = task.list_slots();
        let rename = |s: String| map.get(&s).cloned().unwrap_or(s);
        let items = self
            .to_items()
            .into_iter()
            .map(|item| {
                slots
                    .iter()
                    .zip(item)
                    .map(|(def, v)| match v {
                        SlotValue::Text(Some(s)) if def.label => SlotValue::Text(Some(rename(s))),
                        SlotValue::List(pairs) => SlotValue::List(
                            pairs
                                .into_iter()
                                .map(|p| {
                                    list_slots
                                        .iter()
                                        .zip(p)
                                        .map(|(sd, s)| if sd.label { rename(s) } else { s })
                                        .collect()
                                })
                                .collect(),
                        ),
                        other => other,
                    })
                    .collect()
            })
            .collect();
        self.with_items(items)
    }

    /// Flat string tuples compared by the exact-match scorer. Event
    /// extraction contributes one trigger tuple per event and one argument
    /// tuple per argument.
    pub fn metric_items(&self) -> Vec<Vec<String>> {
        match self {
            Extraction::Ee(events) => {
                let mut out = Vec::new();
                for e in events {
                    out.push(vec![
                        "trigger".to_string(),
                        e.trigger.clone(),
                        e.event_type.clone(),
                    ]);
                    for a in &e.arguments {
                        out.push(vec![
                            "argument".to_string(),
                            e.trigger.clone(),
                            e.event_type.clone(),
                            a.role.clone(),
                            a.text.clone(),
                        ]);
                    }
                }
                out
            }
            Extraction::OnDemand(t) => {
                if t.trim().is_empty() {
                    Vec::new()
                } else {
                    vec![vec![t.trim().to_string()]]
                }
            }
            _ => self
                .to_items()
                .into_iter()
                .map(|item| {
                    item.into_iter()
                        .map(|v| v.as_text().unwrap_or_default().to_string())
                        .collect()
                })
                .collect(),
        }
    }

    /// Item-multiset equality, ignoring item order (and the EAE frame).
    pub fn same_items(&self, other: &Extraction) -> bool {
        if self.task() != other.task() {
            return false;
        }
        if let (Extraction::OnDemand(a), Extraction::OnDemand(b)) = (self, other) {
            return a.trim() == b.trim();
        }
        let canon = |x: &Extraction| {
            let mut items: Vec<Item> = x
                .to_items()
                .into_iter()
                .map(|item| {
                    item.into_iter()
                        .map(|v| match v {
                            SlotValue::List(mut pairs) => {
                                pairs.sort();
                                SlotValue::List(pairs)
                            }
                            other => other,
                        })
                        .collect()
                })
                .collect();
            items.sort();
            items
        };
        canon(self) == canon(other)
    }

    /// Descriptions of duplicated tuples (items, or arguments inside one
    /// event).
    pub fn duplicates(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for item in self.to_items() {
            if !seen.insert(item.clone()) {
                out.push(format!("{item:?}"));
            }
            for v in &item {
                if let SlotValue::List(pairs) = v {
                    let mut inner = HashSet::new();
                    for p in pairs {
                        if !inner.insert(p) {
                            out.push(format!("{p:?}"));
                        }
                    }
                }
            }
        }
        out
    }

    /// Drops duplicate items, keeping first occurrences.
    pub fn dedup(&self) -> Self {
        if matches!(self, Extraction::OnDemand(_)) {
            return self.clone();
        }
        let mut seen = HashSet::new();
        let items = self
            .to_items()
            .into_iter()
            .filter(|i| seen.insert(i.clone()))
            .map(|item| {
                item.into_iter()
                    .map(|v| match v {
                        SlotValue::List(pairs) => {
                            let mut inner = HashSet::new();
                            SlotValue::List(
                                pairs.into_iter().filter(|p| inner.insert(p.clone())).collect(),
                            )
                        }
                        other => other,
                    })
                    .collect()
            })
            .collect();
        self.with_items(items)
    }

    /// Gold encoding used inside canonical records.
    pub fn to_json(&self) -> serde_json::Value {
        let r = match self {
            Extraction::Ner(v) => serde_json::to_value(v),
            Extraction::Rc(v) | Extraction::Re(v) => serde_json::to_value(v),
            Extraction::Ed(v) => serde_json::to_value(v),
            Extraction::Eae(f) => serde_json::to_value(f),
            Extraction::Ee(v) => serde_json::to_value(v),
            Extraction::Ere(v) => serde_json::to_value(v),
            Extraction::OpenIe(v) => serde_json::to_value(v),
            Extraction::OnDemand(t) => Ok(serde_json::Value::String(t.clone())),
        };
        r.expect("extraction values are always representable")
    }

    pub fn from_json(task: TaskKind, value: serde_json::Value) -> Result<Self> {
        let err = |e: serde_json::Error| Error::data(format!("gold for {task}: {e}"));
        Ok(match task {
            TaskKind::Ner => Extraction::Ner(serde_json::from_value(value).map_err(err)?),
            TaskKind::Rc => Extraction::Rc(serde_json::from_value(value).map_err(err)?),
            TaskKind::Re => Extraction::Re(serde_json::from_value(value).map_err(err)?),
            TaskKind::Ed => Extraction::Ed(serde_json::from_value(value).map_err(err)?),
            TaskKind::Eae => Extraction::Eae(serde_json::from_value(value).map_err(err)?),
            TaskKind::Ee => Extraction::Ee(serde_json::from_value(value).map_err(err)?),
            TaskKind::Ere => Extraction::Ere(serde_json::from_value(value).map_err(err)?),
            TaskKind::OpenIe => Extraction::OpenIe(serde_json::from_value(value).map_err(err)?),
            TaskKind::OnDemandIe => {
                Extraction::OnDemand(serde_json::from_value(value).map_err(err)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ner(pairs: &[(&str, &str)]) -> Extraction {
        Extraction::Ner(
            pairs
                .iter()
                .map(|(m, l)| Entity {
                    mention: m.to_string(),
                    label: l.to_string(),
                })
                .collect(),
        )
    }

    #[test]
    fn restriction_keeps_only_shown_labels() {
        let gold = ner(&[("Obama", "A"), ("Paris", "C"), ("UN", "A")]);
        let keep: HashSet<String> = ["A", "B"].iter().map(|s| s.to_string()).collect();
        assert_eq!(gold.retain_labels(&keep), ner(&[("Obama", "A"), ("UN", "A")]));
    }

    #[test]
    fn event_restriction_filters_types_and_roles() {
        let ee = Extraction::Ee(vec![
            Event {
                trigger: "attack".into(),
                event_type: "Attack".into(),
                arguments: vec![
                    Argument {
                        text: "rebels".into(),
                        role: "Attacker".into(),
                    },
                    Argument {
                        text: "town".into(),
                        role: "Place".into(),
                    },
                ],
            },
            Event {
                trigger: "met".into(),
                event_type: "Meet".into(),
                arguments: vec![],
            },
        ]);
        let keep: HashSet<String> = ["Attack", "Attacker"].iter().map(|s| s.to_string()).collect();
        let r = ee.retain_labels(&keep);
        assert_eq!(r.len(), 1);
        assert_eq!(r.labels(), vec!["Attack", "Attacker"]);
    }

    #[test]
    fn rename_and_inverse() {
        let gold = ner(&[("Obama", "PER"), ("Paris", "LOC")]);
        let fwd: HashMap<String, String> = [("PER", "LABEL_1"), ("LOC", "LABEL_2")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let inv: HashMap<String, String> = fwd.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        let sym = gold.rename_labels(&fwd);
        assert_eq!(sym, ner(&[("Obama", "LABEL_1"), ("Paris", "LABEL_2")]));
        assert_eq!(sym.rename_labels(&inv), gold);
    }

    #[test]
    fn duplicates_and_dedup() {
        let gold = ner(&[("Obama", "PER"), ("Obama", "PER"), ("Paris", "LOC")]);
        assert_eq!(gold.duplicates().len(), 1);
        assert_eq!(gold.dedup(), ner(&[("Obama", "PER"), ("Paris", "LOC")]));
    }

    #[test]
    fn json_round_trip_per_task() {
        let x = Extraction::OpenIe(vec![OpenTuple {
            predicate: "born in".into(),
            subject: "Obama".into(),
            object: "Hawaii".into(),
            time: Some("1961".into()),
            location: None,
        }]);
        let back = Extraction::from_json(TaskKind::OpenIe, x.to_json()).unwrap();
        assert_eq!(back, x);
        assert!(Extraction::from_json(TaskKind::Ner, serde_json::json!([{"mention": "a"}])).is_err());
        assert!(Extraction::from_json(
            TaskKind::Ner,
            serde_json::json!([{"mention": "a", "label": "B", "extra": 1}])
        )
        .is_err());
    }

    #[test]
    fn same_items_ignores_order() {
        let a = ner(&[("Obama", "PER"), ("Paris", "LOC")]);
        let b = ner(&[("Paris", "LOC"), ("Obama", "PER")]);
        assert!(a.same_items(&b));
        assert!(!a.same_items(&ner(&[("Paris", "LOC")])));
    }
}
