use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, ClientError, GenParams};
use crate::seed::{digest_hex, rng_for};

/// How the mock answers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MockPolicy {
    /// Returns the reference registered for the prompt.
    #[default]
    EchoGold,
    FixedText(String),
    /// Reference with each whitespace token replaced, with probability `p`,
    /// by a different word.
    NoisyGold(f64),
    /// Prompt digest (hex SHA-256) -> responses, cycled by sample index.
    Scripted(BTreeMap<String, Vec<String>>),
}

const NOISE_WORDS: [&str; 32] = [
    "amber", "basin", "cobalt", "delta", "ember", "fjord", "granite", "harbor", "island",
    "juniper", "kernel", "lantern", "meadow", "nickel", "orbit", "pepper", "quartz", "ridge",
    "saddle", "timber", "umber", "valley", "willow", "xenon", "yarrow", "zephyr", "anchor",
    "bramble", "cedar", "dune", "echo", "flint",
];

/// Deterministic backend. Output depends only on (policy, seed, prompt,
/// sample index) and the registered references.
#[derive(Debug)]
pub struct MockBackend {
    policy: MockPolicy,
    seed: u64,
    references: RwLock<HashMap<String, String>>,
}

impl MockBackend {
    pub fn new(policy: MockPolicy, seed: u64) -> Self {
        MockBackend {
            policy,
            seed,
            references: RwLock::new(HashMap::new()),
        }
    }

    pub fn policy(&self) -> &MockPolicy {
        &self.policy
    }

    /// Registers the gold answer the mock should echo (or corrupt) for
    /// `prompt`.
    pub fn register(&self, prompt: &str, reference: &str) {
        self.references
            .write()
            .expect("mock references poisoned")
            .insert(digest_hex(prompt.as_bytes()), reference.to_string());
    }

    fn fallback(digest: &str) -> String {
        format!("[mock] no reference for prompt {}", &digest[..12])
    }

    fn reference(&self, digest: &str) -> String {
        match self.references.read().expect("mock references poisoned").get(digest) {
            Some(r) => r.clone(),
            None => {
                tracing::warn!("mock: no reference registered for prompt {}", &digest[..12]);
                Self::fallback(digest)
            }
        }
    }
}

/// Replaces each whitespace-delimited token of `text` with probability `p`.
pub(crate) fn corrupt(text: &str, p: f64, seed: u64, digest: &str, index: usize) -> String {
    if p <= 0.0 {
        return text.to_string();
    }
    let mut rng = rng_for(seed, &["mock-noise", digest, &index.to_string()]);
    let token = Regex::new(r"\S+").expect("static regex");
    token
        .replace_all(text, |c: &regex::Captures<'_>| {
            let orig = &c[0];
            if rng.random_bool(p.min(1.0)) {
                loop {
                    let w = NOISE_WORDS[rng.random_range(0..NOISE_WORDS.len())];
                    if w != orig {
                        return w.to_string();
                    }
                }
            } else {
                orig.to_string()
            }
        })
        .into_owned()
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        let policy = serde_json::to_string(&self.policy).unwrap_or_default();
        format!("mock:{}:{}", self.seed, &digest_hex(policy.as_bytes())[..16])
    }

    fn generate(&self, prompt: &str, _params: &GenParams, index: usize) -> Result<String, ClientError> {
        let digest = digest_hex(prompt.as_bytes());
        Ok(match &self.policy {
            MockPolicy::EchoGold => self.reference(&digest),
            MockPolicy::FixedText(t) => t.clone(),
            MockPolicy::NoisyGold(p) => {
                if self.references.read().expect("mock references poisoned").contains_key(&digest) {
                    corrupt(&self.reference(&digest), *p, self.seed, &digest, index)
                } else {
                    self.reference(&digest)
                }
            }
            MockPolicy::Scripted(map) => match map.get(&digest).filter(|r| !r.is_empty()) {
                Some(responses) => responses[index % responses.len()].clone(),
                None => {
                    tracing::warn!("mock: prompt {} not scripted", &digest[..12]);
                    Self::fallback(&digest)
                }
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::Client;
    use std::sync::Arc;

    #[test]
    fn echo_and_fallback() {
        let m = Arc::new(MockBackend::new(MockPolicy::EchoGold, 1));
        m.register("p", "gold");
        let c = Client::new(m);
        let g = GenParams::generation();
        assert_eq!(c.complete("p", &g).unwrap(), "gold");
        assert!(c.complete("unknown", &g).unwrap().starts_with("[mock]"));
    }

    #[test]
    fn scripted_cycles_and_falls_back() {
        let mut map = BTreeMap::new();
        map.insert(digest_hex(b"p"), vec!["a".to_string(), "b".to_string()]);
        let c = Client::new(Arc::new(MockBackend::new(MockPolicy::Scripted(map), 0)));
        let s: Vec<_> = c
            .sample_n("p", 3, &GenParams::generation())
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(s, ["a", "b", "a"]);
        assert!(c.complete("q", &GenParams::generation()).unwrap().starts_with("[mock]"));
    }

    #[test]
    fn noisy_zero_is_verbatim() {
        let m = Arc::new(MockBackend::new(MockPolicy::NoisyGold(0.0), 3));
        m.register("p", "(a; b;  c)");
        let c = Client::new(m);
        for s in c.sample_n("p", 5, &GenParams::sampling(5)) {
            assert_eq!(s.unwrap(), "(a; b;  c)");
        }
    }

    #[test]
    fn noisy_half_corrupts_about_half() {
        let text: String = (0..1000).map(|i| format!("w{i} ")).collect();
        let out = corrupt(&text, 0.5, 9, "d", 0);
        let changed = text
            .split_whitespace()
            .zip(out.split_whitespace())
            .filter(|(a, b)| a != b)
            .count();
        let rate = changed as f64 / 1000.0;
        assert!((rate - 0.5).abs() <= 0.05, "{rate}");
        let samples: std::collections::HashSet<_> =
            (0..5).map(|i| corrupt(&text, 0.5, 9, "d", i)).collect();
        assert_eq!(samples.len(), 5);
    }
}
