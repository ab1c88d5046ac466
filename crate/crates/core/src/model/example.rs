use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{FormatSpec, LabelDef, TaskKind};

/// The schema exactly as shown in one prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaView {
    /// Shown labels in display order. Names are symbols when `symbols` is
    /// set; guidelines and exemplars are present only when included.
    pub labels: Vec<LabelDef>,
    /// Symbol -> original label name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<BTreeMap<String, String>>,
    pub guidelines_included: bool,
}

impl SchemaView {
    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.labels.iter().any(|l| l.name == name)
    }

    pub fn is_symbolized(&self) -> bool {
        self.symbols.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demonstration {
    pub instance_id: String,
    /// Rendered input block (text, plus trigger line for argument extraction).
    pub input: String,
    pub answer: String,
}

/// One finished SFT record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentExample {
    pub instance_id: String,
    pub dataset: String,
    pub task: TaskKind,
    pub prompt: String,
    pub demonstrations: Vec<Demonstration>,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<String>,
    pub format: FormatSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_view: Option<SchemaView>,
}

impl AlignmentExample {
    /// The answer part of `output` (everything after the explanation).
    pub fn answer(&self) -> &str {
        match &self.cot {
            Some(cot) => self
                .output
                .strip_prefix(cot.as_str())
                .map(|rest| rest.trim_start_matches('\n'))
                .unwrap_or(&self.output),
            None => &self.output,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairOrigin {
    Online,
    Offline,
}

impl fmt::Display for PairOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairOrigin::Online => "online",
            PairOrigin::Offline => "offline",
        })
    }
}

/// One DPO record.
///
/// On disk it is `{id, prompt, chosen, rejected, chosen_score,
/// rejected_score, origin}` where `id` is `<instance_id>/<origin>`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub instance_id: String,
    pub dataset: String,
    pub prompt: String,
    pub preferred: String,
    pub dispreferred: String,
    pub preferred_score: f64,
    pub dispreferred_score: f64,
    pub origin: PairOrigin,
}

impl PreferencePair {
    pub fn gap(&self) -> f64 {
        self.preferred_score - self.dispreferred_score
    }

    pub fn record_id(&self) -> String {
        format!("{}/{}", self.instance_id, self.origin)
    }
}

/// Dataset name encoded in a stable id (`<dataset>-<index>-<digest>`).
pub(crate) fn dataset_of_id(id: &str) -> String {
    let parts: Vec<&str> = id.rsplitn(3, '-').collect();
    if parts.len() == 3 {
        parts[2].to_string()
    } else {
        String::new()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    id: String,
    prompt: String,
    chosen: String,
    rejected: String,
    chosen_score: f64,
    rejected_score: f64,
    origin: PairOrigin,
}

impl Serialize for PreferencePair {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PairRecord {
            id: self.record_id(),
            prompt: self.prompt.clone(),
            chosen: self.preferred.clone(),
            rejected: self.dispreferred.clone(),
            chosen_score: self.preferred_score,
            rejected_score: self.dispreferred_score,
            origin: self.origin,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PreferencePair {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = PairRecord::deserialize(deserializer)?;
        let suffix = format!("/{}", r.origin);
        let instance_id = r
            .id
            .strip_suffix(&suffix)
            .ok_or_else(|| serde::de::Error::custom(format!("id {:?} lacks {suffix}", r.id)))?
            .to_string();
        Ok(PreferencePair {
            dataset: dataset_of_id(&instance_id),
            instance_id,
            prompt: r.prompt,
            preferred: r.chosen,
            dispreferred: r.rejected,
            preferred_score: r.chosen_score,
            dispreferred_score: r.rejected_score,
            origin: r.origin,
        })
    }
}
