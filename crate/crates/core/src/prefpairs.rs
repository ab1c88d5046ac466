//! Preference pairs for DPO: BLEU-scored model samples, the online and
//! offline pairing rules, and the mixed corpus.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::client::{Client, GenParams};
use crate::error::{Error, Result};
use crate::metrics::sentence_bleu_m3;
use crate::model::{PairOrigin, PreferencePair};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub text: String,
    pub score: f64,
}

/// Model samples for one instance with their BLEU against the gold text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSamples {
    pub instance_id: String,
    pub dataset: String,
    pub prompt: String,
    pub gold_text: String,
    pub samples: Vec<Sample>,
}

impl ScoredSamples {
    /// Scores already-drawn sample texts.
    pub fn from_texts(
        instance_id: impl Into<String>,
        dataset: impl Into<String>,
        prompt: impl Into<String>,
        gold_text: impl Into<String>,
        texts: impl IntoIterator<Item = String>,
    ) -> Self {
        let gold_text = gold_text.into();
        let samples = texts
            .into_iter()
            .map(|text| Sample {
                score: sentence_bleu_m3(&text, &gold_text),
                text,
            })
            .collect();
        ScoredSamples {
            instance_id: instance_id.into(),
            dataset: dataset.into(),
            prompt: prompt.into(),
            gold_text,
            samples,
        }
    }

    /// (index, score) of the first maximum and the first minimum.
    fn extremes(&self) -> Option<((usize, f64), (usize, f64))> {
        let mut it = self.samples.iter().enumerate();
        let (_, first) = it.next()?;
        let mut hi = (0, first.score);
        let mut lo = (0, first.score);
        for (i, s) in it {
            if s.score > hi.1 {
                hi = (i, s.score);
            }
            if s.score < lo.1 {
                lo = (i, s.score);
            }
        }
        Some((hi, lo))
    }
}

/// Draws `n` samples for `prompt` and scores them against `gold_text`.
/// Any failed sample fails the instance; the caller logs and skips it.
pub fn score_samples(
    instance_id: &str,
    dataset: &str,
    prompt: &str,
    gold_text: &str,
    client: &Client,
    n: usize,
    temperature: f64,
) -> Result<ScoredSamples> {
    let params = GenParams {
        temperature,
        ..GenParams::sampling(n)
    };
    let texts = client
        .sample_n(prompt, n, &params)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoredSamples::from_texts(instance_id, dataset, prompt, gold_text, texts))
}

/// Online pair: best sample over worst sample when their BLEU differs by
/// more than `gap`. Ties go to the lowest sample index.
pub fn build_online_pair(s: &ScoredSamples, gap: f64) -> Option<PreferencePair> {
    if s.samples.len() < 2 {
        return None;
    }
    let ((hi, hi_score), (lo, lo_score)) = s.extremes()?;
    if hi_score - lo_score <= gap {
        return None;
    }
    Some(PreferencePair {
        instance_id: s.instance_id.clone(),
        dataset: s.dataset.clone(),
        prompt: s.prompt.clone(),
        preferred: s.samples[hi].text.clone(),
        dispreferred: s.samples[lo].text.clone(),
        preferred_score: hi_score,
        dispreferred_score: lo_score,
        origin: PairOrigin::Online,
    })
}

/// Offline pair: gold text (score 1.0) over the worst sample, unless that
/// sample is already within `gap` of the gold.
pub fn build_offline_pair(s: &ScoredSamples, gap: f64) -> Option<PreferencePair> {
    let (_, (lo, lo_score)) = s.extremes()?;
    if lo_score >= 1.0 - gap || s.samples[lo].text == s.gold_text {
        return None;
    }
    Some(PreferencePair {
        instance_id: s.instance_id.clone(),
        dataset: s.dataset.clone(),
        prompt: s.prompt.clone(),
        preferred: s.gold_text.clone(),
        dispreferred: s.samples[lo].text.clone(),
        preferred_score: 1.0,
        dispreferred_score: lo_score,
        origin: PairOrigin::Offline,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpoPlan {
    pub gap_threshold: f64,
    pub offline_rate: f64,
    pub target_size: usize,
    pub sample_temperature: f64,
    pub samples_per_instance: usize,
    pub seed: u64,
}

impl Default for DpoPlan {
    fn default() -> Self {
        DpoPlan {
            gap_threshold: 0.10,
            offline_rate: 0.7,
            target_size: 10_000,
            sample_temperature: 1.0,
            samples_per_instance: 5,
            seed: 0,
        }
    }
}

impl DpoPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_threshold > 0.0 && self.gap_threshold < 1.0) {
            return Err(Error::config(format!(
                "gap_threshold must be in (0, 1), got {}",
                self.gap_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.offline_rate) {
            return Err(Error::config(format!(
                "offline_rate must be in [0, 1], got {}",
                self.offline_rate
            )));
        }
        if self.samples_per_instance < 2 {
            return Err(Error::config("samples_per_instance must be at least 2"));
        }
        if self.sample_temperature < 0.0 {
            return Err(Error::config("sample_temperature must be non-negative"));
        }
        Ok(())
    }

    /// (offline, online) counts for a corpus of `n` pairs.
    pub fn split(&self, n: usize) -> (usize, usize) {
        let off = (n as f64 * self.offline_rate).round() as usize;
        (off, n - off)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OriginCounts {
    pub online: usize,
    pub offline: usize,
    /// Mean preferred minus dispreferred score over the dataset's pairs.
    pub mean_delta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DpoSummary {
    pub target: usize,
    pub available_online: usize,
    pub available_offline: usize,
    pub online: usize,
    pub offline: usize,
    pub mean_delta: f64,
    /// Instances contributing both an online and an offline pair.
    pub overlap: usize,
    pub per_dataset: BTreeMap<String, OriginCounts>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DpoCorpus {
    pub pairs: Vec<PreferencePair>,
    pub summary: DpoSummary,
}

/// Largest corpus size `n <= cap` whose offline/online split fits the
/// available candidates.
fn feasible_size(plan: &DpoPlan, cap: usize, off: usize, on: usize) -> usize {
    (0..=cap.min(off + on))
        .rev()
        .find(|&n| {
            let (o, l) = plan.split(n);
            o <= off && l <= on
        })
        .unwrap_or(0)
}

/// Samples the final corpus from all candidate pairs.
///
/// At most one pair per (instance, origin) is kept (the first in input
/// order). The corpus has `target_size` pairs with an offline share of
/// `offline_rate` (rounded); when either origin is short the corpus shrinks
/// to the largest size that still honors the share, with a warning.
pub fn assemble_dpo_corpus(candidates: Vec<PreferencePair>, plan: &DpoPlan) -> Result<DpoCorpus> {
    plan.validate()?;
    let mut seen = HashSet::new();
    let mut online = Vec::new();
    let mut offline = Vec::new();
    for p in candidates {
        if p.preferred == p.dispreferred || p.gap() <= 0.0 {
            return Err(Error::data(format!("pair {} does not prefer anything", p.record_id())));
        }
        if !seen.insert((p.instance_id.clone(), p.origin)) {
            continue;
        }
        match p.origin {
            PairOrigin::Online => online.push(p),
            PairOrigin::Offline => offline.push(p),
        }
    }
    let mut summary = DpoSummary {
        target: plan.target_size,
        available_online: online.len(),
        available_offline: offline.len(),
        ..Default::default()
    };
    let n = feasible_size(plan, plan.target_size, offline.len(), online.len());
    if n < plan.target_size {
        let msg = format!(
            "only {} offline and {} online candidates for a target of {}; corpus shrunk to {n}",
            offline.len(),
            online.len(),
            plan.target_size
        );
        tracing::warn!("{msg}");
        summary.warnings.push(msg);
    }
    if n == 0 {
        summary.warnings.push("no qualifying pairs".into());
    }
    let (n_off, n_on) = plan.split(n);
    let take = |mut pool: Vec<PreferencePair>, k: usize, tag: &str| {
        pool.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        let mut idx = rand::seq::index::sample(&mut rng_for(plan.seed, &["dpo", tag]), pool.len(), k)
            .into_vec();
        idx.sort_unstable();
        let mut slots: Vec<Option<PreferencePair>> = pool.into_iter().map(Some).collect();
        idx.into_iter()
            .map(|i| slots[i].take().expect("distinct indices"))
            .collect::<Vec<_>>()
    };
    let mut pairs = take(offline, n_off, "offline");
    pairs.extend(take(online, n_on, "online"));
    pairs.sort_by_key(PreferencePair::record_id);
    pairs.shuffle(&mut rng_for(plan.seed, &["dpo", "shuffle"]));

    summary.offline = n_off;
    summary.online = n_on;
    let mut by_instance: BTreeMap<&str, usize> = BTreeMap::new();
    let mut deltas: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for p in &pairs {
        *by_instance.entry(&p.instance_id).or_default() += 1;
        let c = summary.per_dataset.entry(p.dataset.clone()).or_default();
        match p.origin {
            PairOrigin::Online => c.online += 1,
            PairOrigin::Offline => c.offline += 1,
        }
        let d = deltas.entry(p.dataset.clone()).or_default();
        d.0 += p.gap();
        d.1 += 1;
    }
    summary.overlap = by_instance.values().filter(|&&c| c > 1).count();
    for (ds, (sum, k)) in &deltas {
        summary.per_dataset.get_mut(ds).expect("dataset entry").mean_delta = sum / *k as f64;
    }
    if !pairs.is_empty() {
        summary.mean_delta = pairs.iter().map(PreferencePair::gap).sum::<f64>() / pairs.len() as f64;
    }
    Ok(DpoCorpus { pairs, summary })
}
