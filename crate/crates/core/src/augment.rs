//! Model-assisted growth of task descriptions and format templates, CoT
//! explanations, and the review queue that gates generated text.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::answer::{check_format, parse_answer, serialize_answer_ordered, ParseMode};
use crate::assets::{formats_for, COT_PROMPT, DESCRIPTION_PROMPT, FORMAT_PROMPT};
use crate::client::{Client, GenParams};
use crate::error::{Error, Result};
use crate::fixtures::random_extraction;
use crate::model::{placeholders, FormatFamily, FormatSpec, TaskKind};
use crate::prompt::DescriptionPool;
use crate::seed::{digest_hex, rng_for};
use crate::text::normalize;

pub const COT_MIN_WORDS: usize = 70;
pub const COT_MAX_WORDS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CandidateKind {
    TaskDescription,
    FormatTemplate,
    CotExplanation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateStatus {
    Pending,
    Accepted,
    Rejected,
}

/// A generated text waiting for (or past) review.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenCandidate {
    /// Content id: same kind, task and normalized text give the same id.
    pub id: String,
    pub kind: CandidateKind,
    pub task: TaskKind,
    pub text: String,
    pub prompt_digest: String,
    pub status: CandidateStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    /// Parsed format for accepted-able format templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<FormatSpec>,
}

impl GenCandidate {
    pub fn new(kind: CandidateKind, task: TaskKind, text: &str, prompt: &str) -> Self {
        let key = format!("{kind:?}\u{0}{task}\u{0}{}", normalize(text));
        GenCandidate {
            id: digest_hex(key.as_bytes())[..16].to_string(),
            kind,
            task,
            text: text.to_string(),
            prompt_digest: digest_hex(prompt.as_bytes()),
            status: CandidateStatus::Pending,
            diagnostics: Vec::new(),
            format: None,
        }
    }

    fn reject(mut self, why: impl Into<String>) -> Self {
        self.status = CandidateStatus::Rejected;
        self.diagnostics.push(why.into());
        self
    }
}

/// Output of a generation loop. Client failures stop the loop and are
/// reported next to whatever was generated before.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenReport {
    pub candidates: Vec<GenCandidate>,
    pub calls: usize,
    pub duplicates: usize,
    pub errors: Vec<String>,
}

fn first_line(text: &str) -> String {
    static LEAD: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let lead = LEAD.get_or_init(|| Regex::new(r#"^\s*(?:\d+[.)]|[-*])?\s*"#).expect("static regex"));
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    lead.replace(line, "").trim().trim_matches('"').trim().to_string()
}

/// Grows `pool` with new task descriptions until `target` distinct pending
/// candidates exist or `10 * target` calls have been made.
///
/// Each call shows three random manual descriptions and up to two earlier
/// generated ones. Responses equal (after normalization) to anything seen
/// before are discarded.
pub fn grow_task_descriptions(
    pool: &DescriptionPool,
    target: usize,
    client: &Client,
    seed: u64,
) -> Result<GenReport> {
    if pool.manual.len() < 3 {
        return Err(Error::config(format!(
            "growing {} descriptions needs at least 3 manual ones, found {}",
            pool.task,
            pool.manual.len()
        )));
    }
    let manual: Vec<&str> = pool.manual.iter().map(String::as_str).collect();
    let mut seen: HashSet<String> = pool.all().map(normalize).collect();
    let mut generated: Vec<String> = pool.generated.clone();
    let mut report = GenReport::default();
    let cap = 10 * target;
    let params = GenParams::generation();
    while report.candidates.len() < target && report.calls < cap {
        let mut rng = rng_for(seed, &["grow", pool.task.as_str(), &report.calls.to_string()]);
        let mut shown: Vec<&str> = manual.choose_multiple(&mut rng, 3).copied().collect();
        let prior: Vec<&str> = generated.iter().map(String::as_str).collect();
        shown.extend(prior.choose_multiple(&mut rng, 2.min(prior.len())).copied());
        let examples: Vec<String> = shown
            .iter()
            .enumerate()
            .map(|(i, d)| format!("{}. {d}", i + 1))
            .collect();
        let prompt = DESCRIPTION_PROMPT
            .replace("{task_name}", pool.task.full_name())
            .replace("{examples}", &examples.join("\n"));
        report.calls += 1;
        let text = match client.complete(&prompt, &params) {
            Ok(t) => first_line(&t),
            Err(e) => {
                report.errors.push(format!("call {}: {e}", report.calls));
                break;
            }
        };
        if text.is_empty() || !seen.insert(normalize(&text)) {
            report.duplicates += 1;
            continue;
        }
        generated.push(text.clone());
        report
            .candidates
            .push(GenCandidate::new(CandidateKind::TaskDescription, pool.task, &text, &prompt));
    }
    Ok(report)
}

/// The four numbered parts of a format-template response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateParts {
    pub instruction: String,
    pub fail_output: String,
    pub input_template: String,
    pub answer_template: String,
}

/// Reads "(1) Instruction: ... (2) Fail output: ... (3) Input template: ...
/// (4) Answer template: ..." (each part may span lines).
pub fn parse_template_parts(text: &str) -> Result<TemplateParts> {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\((\d)\)\s*(instruction|fail output|input template|answer template|output template)\s*:")
            .expect("static regex")
    });
    let marks: Vec<(usize, usize, String)> = re
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).expect("match");
            (m.start(), m.end(), c[2].to_lowercase())
        })
        .collect();
    let mut parts = BTreeMap::new();
    for (i, (_, end, name)) in marks.iter().enumerate() {
        let stop = marks.get(i + 1).map_or(text.len(), |m| m.0);
        let name = if name == "output template" { "answer template".to_string() } else { name.clone() };
        parts.insert(name, text[*end..stop].trim().to_string());
    }
    let get = |k: &str| {
        parts
            .get(k)
            .filter(|v| !v.is_empty())
            .cloned()
            .ok_or_else(|| Error::data(format!("response lacks the {k} part")))
    };
    Ok(TemplateParts {
        instruction: get("instruction")?,
        fail_output: get("fail output")?,
        input_template: get("input template")?,
        answer_template: get("answer template")?,
    })
}

fn trim_part(s: &str) -> String {
    s.trim().trim_end_matches([',', ';']).trim().to_string()
}

/// Turns template parts into a FormatSpec, checking placeholders and
/// round-tripping a few random extractions through the grammar.
pub fn parts_to_format(task: TaskKind, parts: &TemplateParts, name: &str) -> Result<FormatSpec> {
    if !placeholders(&parts.instruction).iter().any(|p| p == "text") {
        return Err(Error::data("instruction lacks the {text} placeholder"));
    }
    let mut answer = trim_part(&parts.answer_template);
    let mut prefix = String::new();
    if let Some(rest) = answer.strip_prefix(crate::answer::ANSWER_MARKER) {
        prefix = format!("{} ", crate::answer::ANSWER_MARKER);
        answer = rest.trim().to_string();
    }
    let found = placeholders(&answer);
    for p in &found {
        if !task.is_slot_name(p) {
            return Err(Error::data(format!("unknown placeholder {{{p}}} for {task}")));
        }
    }
    for s in task.slots() {
        if !s.optional && !found.iter().any(|p| p == s.name) {
            return Err(Error::data(format!("answer template lacks {{{}}}", s.name)));
        }
    }
    let mut fail = trim_part(&parts.fail_output);
    if !fail.contains(char::is_whitespace) {
        fail = fail.trim_end_matches('.').to_string();
    }
    let triplet = answer.starts_with('(') && answer.contains(';');
    let spec = FormatSpec {
        name: name.to_string(),
        task,
        family: if triplet { FormatFamily::Triplet } else { FormatFamily::NaturalLanguage },
        input_template: trim_part(&parts.input_template),
        answer_prefix: prefix,
        answer_template: answer,
        item_separator: if triplet { "; ".into() } else { " ".into() },
        trailing_separator: false,
        list: None,
        json: None,
        fail_output: fail,
    };
    check_format(&spec)?;
    let mut rng = rng_for(0, &["format-check", name]);
    for _ in 0..20 {
        let gold = random_extraction(task, &mut rng, 3, false);
        let text = serialize_answer_ordered(&gold, &spec)?;
        let back = parse_answer(&text, &spec, None, ParseMode::Strict)?;
        if !back.extraction.same_items(&gold) {
            return Err(Error::data(format!("answer template does not round-trip: {text:?}")));
        }
    }
    Ok(spec)
}

fn exemplar_block(i: usize, desc: &str, spec: &FormatSpec) -> String {
    format!(
        "Template {i}:\n(1) Instruction: {desc} Text: {{text}}\n(2) Fail output: {}\n(3) Input template: {}\n(4) Answer template: {}{}",
        spec.fail_output, spec.input_template, spec.answer_prefix, spec.answer_template
    )
}

/// Requests `count` new format templates for `task`. Responses that do
/// not parse, lack a required placeholder or do not round-trip come back
/// Rejected with a diagnostic; the rest are Pending.
pub fn generate_format_templates(
    task: TaskKind,
    count: usize,
    client: &Client,
    seed: u64,
) -> Result<GenReport> {
    let seeds: Vec<&FormatSpec> = formats_for(task)
        .iter()
        .filter(|s| matches!(s.family, FormatFamily::Triplet | FormatFamily::NaturalLanguage))
        .collect();
    if seeds.is_empty() {
        return Err(Error::config(format!("no exemplar templates for {task}")));
    }
    let descs = crate::assets::manual_descriptions(task);
    let slots: Vec<String> = task.slots().iter().map(|s| format!("{{{}}}", s.name)).collect();
    let params = GenParams::generation();
    let mut report = GenReport::default();
    let mut ids = BTreeSet::new();
    for i in 0..count {
        let mut rng = rng_for(seed, &["formats", task.as_str(), &i.to_string()]);
        let shown: Vec<&&FormatSpec> = seeds.choose_multiple(&mut rng, 3).collect();
        let blocks: Vec<String> = shown
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let d = descs.choose(&mut rng).map(String::as_str).unwrap_or("Extract the information.");
                exemplar_block(j + 1, d, s)
            })
            .collect();
        let prompt = FORMAT_PROMPT
            .replace("{task_name}", task.full_name())
            .replace("{task}", task.as_str())
            .replace("{slots}", &slots.join(", "))
            .replace("{templates}", &blocks.join("\n\n"));
        report.calls += 1;
        let text = match client.complete_indexed(&prompt, &params, i) {
            Ok(t) => t,
            Err(e) => {
                report.errors.push(format!("call {}: {e}", report.calls));
                break;
            }
        };
        let cand = GenCandidate::new(CandidateKind::FormatTemplate, task, &text, &prompt);
        if !ids.insert(cand.id.clone()) {
            report.duplicates += 1;
            continue;
        }
        let name = format!("gen-{}-{}", task.as_str().to_lowercase(), &cand.id[..8]);
        let cand = match parse_template_parts(&text).and_then(|p| parts_to_format(task, &p, &name)) {
            Ok(spec) => GenCandidate {
                format: Some(spec),
                ..cand
            },
            Err(e) => cand.reject(e.to_string()),
        };
        report.candidates.push(cand);
    }
    Ok(report)
}

/// One explanation request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRequest {
    pub question: String,
    pub answer: String,
    pub words_limit: usize,
}

impl CotRequest {
    /// Draws the word limit uniformly from [70, 200].
    pub fn new(question: impl Into<String>, answer: impl Into<String>, seed: u64) -> Self {
        CotRequest {
            question: question.into(),
            answer: answer.into(),
            words_limit: crate::seed::rng(seed).random_range(COT_MIN_WORDS..=COT_MAX_WORDS),
        }
    }

    /// The answer is shown without its own `[Answer]:` marker, which the
    /// prompt already supplies.
    pub fn prompt(&self) -> String {
        let answer = self.answer.strip_prefix("[Answer]:").map_or(self.answer.as_str(), str::trim_start);
        COT_PROMPT
            .replace("{words_number}", &self.words_limit.to_string())
            .replace("{input}", &self.question)
            .replace("{output}", answer)
    }
}

/// Asks for a step-by-step explanation. Explanations longer than 1.5 times
/// the limit are logged, not rejected.
pub fn generate_cot(req: &CotRequest, client: &Client) -> Result<String> {
    if !(COT_MIN_WORDS..=COT_MAX_WORDS).contains(&req.words_limit) {
        return Err(Error::config(format!(
            "words_limit {} outside [{COT_MIN_WORDS}, {COT_MAX_WORDS}]",
            req.words_limit
        )));
    }
    let text = client.complete(&req.prompt(), &GenParams::generation())?;
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(Error::data("empty explanation"));
    }
    let words = text.split_whitespace().count();
    if words as f64 > 1.5 * req.words_limit as f64 {
        tracing::warn!(words, limit = req.words_limit, "explanation exceeds its word limit");
    }
    Ok(text)
}

/// Chooses which ids of one task get an explanation:
/// `min(per_task, round(rate * |ids|))` of them, uniformly.
pub fn select_for_cot(ids: &[String], rate: f64, per_task: usize, seed: u64) -> BTreeSet<String> {
    let k = ((ids.len() as f64 * rate).round() as usize).min(per_task).min(ids.len());
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    rand::seq::index::sample(&mut crate::seed::rng(seed), sorted.len(), k)
        .into_iter()
        .map(|i| sorted[i].clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decision {
    pub id: String,
    pub accept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One line of the append-only review log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: String,
    pub kind: CandidateKind,
    pub task: TaskKind,
    pub status: CandidateStatus,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReviewOutcome {
    pub accepted: Vec<GenCandidate>,
    pub rejected: Vec<GenCandidate>,
    pub audit: Vec<AuditEntry>,
}

/// Applies review decisions. All decisions are checked before any is
/// applied: an unknown id, a repeated id or a candidate that is no longer
/// Pending is an error and nothing changes.
pub fn review(candidates: &mut [GenCandidate], decisions: &[Decision]) -> Result<ReviewOutcome> {
    let mut seen = HashSet::new();
    for d in decisions {
        let c = candidates
            .iter()
            .find(|c| c.id == d.id)
            .ok_or_else(|| Error::data(format!("no candidate with id {}", d.id)))?;
        if c.status != CandidateStatus::Pending {
            return Err(Error::data(format!("candidate {} was already {:?}", d.id, c.status)));
        }
        if !seen.insert(&d.id) {
            return Err(Error::data(format!("candidate {} decided twice", d.id)));
        }
    }
    let mut out = ReviewOutcome::default();
    for d in decisions {
        let c = candidates.iter_mut().find(|c| c.id == d.id).expect("checked above");
        c.status = if d.accept { CandidateStatus::Accepted } else { CandidateStatus::Rejected };
        out.audit.push(AuditEntry {
            id: c.id.clone(),
            kind: c.kind,
            task: c.task,
            status: c.status,
            text: c.text.clone(),
            note: d.note.clone(),
        });
        if d.accept {
            out.accepted.push(c.clone());
        } else {
            out.rejected.push(c.clone());
        }
    }
    Ok(out)
}

/// Appends audit entries to a JSON-lines log.
pub fn append_audit(path: &Path, entries: &[AuditEntry]) -> Result<()> {
    if entries.is_empty() {
        return Ok(());
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(crate::jsonl::to_string(entries)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

impl DescriptionPool {
    /// Appends accepted task descriptions of this pool's task; returns how
    /// many were added.
    pub fn absorb(&mut self, accepted: &[GenCandidate]) -> usize {
        let before = self.generated.len();
        let mut seen: HashSet<String> = self.all().map(normalize).collect();
        for c in accepted {
            if c.kind == CandidateKind::TaskDescription
                && c.task == self.task
                && c.status == CandidateStatus::Accepted
                && seen.insert(normalize(&c.text))
            {
                self.generated.push(c.text.clone());
            }
        }
        self.generated.len() - before
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{MockBackend, MockPolicy};
    use std::sync::Arc;

    fn mock(policy: MockPolicy) -> Client {
        Client::new(Arc::new(MockBackend::new(policy, 1)))
    }

    #[test]
    fn growth_and_review() {
        let pool = DescriptionPool::bundled(TaskKind::Ner);
        // Unregistered prompts get a per-prompt fallback text, so every call
        // yields a new description.
        let client = mock(MockPolicy::EchoGold);
        let r = grow_task_descriptions(&pool, 20, &client, 3).unwrap();
        assert_eq!(r.candidates.len(), 20);
        let again = grow_task_descriptions(&pool, 20, &client, 3).unwrap();
        assert_eq!(r.candidates, again.candidates);

        let mut cands = r.candidates.clone();
        let mut decisions: Vec<Decision> = cands
            .iter()
            .take(17)
            .map(|c| Decision { id: c.id.clone(), accept: true, note: None })
            .collect();
        decisions.extend(cands.iter().skip(17).map(|c| Decision {
            id: c.id.clone(),
            accept: false,
            note: Some("hallucinated".into()),
        }));
        let out = review(&mut cands, &decisions).unwrap();
        let mut grown = pool.clone();
        assert_eq!(grown.absorb(&out.accepted), 17);
        assert_eq!(grown.len(), 27);
        assert_eq!(out.audit.len(), 20);
        assert!(review(&mut cands, &decisions[..1]).is_err());
        let unknown = [Decision { id: "nope".into(), accept: true, note: None }];
        assert!(review(&mut cands, &unknown).is_err());
        assert_eq!(review(&mut cands, &[]).unwrap(), ReviewOutcome::default());
    }

    #[test]
    fn fixed_client_terminates() {
        let pool = DescriptionPool::bundled(TaskKind::Rc);
        let r = grow_task_descriptions(&pool, 5, &mock(MockPolicy::FixedText("Same.".into())), 0).unwrap();
        assert_eq!((r.candidates.len(), r.calls, r.duplicates), (1, 50, 49));
        let small = DescriptionPool::new(TaskKind::Rc, vec!["a".into(), "b".into()]);
        assert!(grow_task_descriptions(&small, 5, &mock(MockPolicy::EchoGold), 0)
            .unwrap_err()
            .is_config());
    }

    const OPENIE_RESPONSE: &str = "Template 6:\n(1) Instruction: Find the relations in this text: {text}. If there are none, answer 'No relationships identified.'\n(2) Fail output: No relationships identified.\n(3) Input template: Describe each relation.\n(4) Answer template: Between \"{subject}\" and \"{object}\", the connection \"{predicate}\" is established, occurring at \"{time}\" and within \"{location}\".";

    #[test]
    fn template_parsing() {
        let parts = parse_template_parts(OPENIE_RESPONSE).unwrap();
        assert_eq!(parts.fail_output, "No relationships identified.");
        let spec = parts_to_format(TaskKind::OpenIe, &parts, "g").unwrap();
        assert_eq!(spec.family, FormatFamily::NaturalLanguage);

        let missing = OPENIE_RESPONSE.replace("the connection \"{predicate}\"", "the connection");
        let parts = parse_template_parts(&missing).unwrap();
        let err = parts_to_format(TaskKind::OpenIe, &parts, "g").unwrap_err();
        assert!(err.to_string().contains("{predicate}"));
        assert!(parse_template_parts("just words").is_err());

        let triplet = "(1) Instruction: Extract from {text}.\n(2) Fail output: NA.\n(3) Input template: Use tuples.\n(4) Answer template: [Answer]: ({predicate}; {subject}; {object}; {time}; {location}),";
        let spec = parts_to_format(TaskKind::OpenIe, &parse_template_parts(triplet).unwrap(), "t").unwrap();
        assert_eq!((spec.family, spec.fail_output.as_str(), spec.answer_prefix.as_str()), (FormatFamily::Triplet, "NA", "[Answer]: "));
    }

    #[test]
    fn format_generation_marks_candidates() {
        let client = mock(MockPolicy::FixedText(OPENIE_RESPONSE.into()));
        let r = generate_format_templates(TaskKind::OpenIe, 3, &client, 0).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.duplicates, 2);
        assert_eq!(r.candidates[0].status, CandidateStatus::Pending);
        let bad = mock(MockPolicy::FixedText("nothing useful".into()));
        let r = generate_format_templates(TaskKind::OpenIe, 1, &bad, 0).unwrap();
        assert_eq!(r.candidates[0].status, CandidateStatus::Rejected);
        assert!(generate_format_templates(TaskKind::OnDemandIe, 1, &client, 0).is_err());
    }

    #[test]
    fn cot_prompt_and_selection() {
        let req = CotRequest { question: "Q".into(), answer: "A".into(), words_limit: 70 };
        assert!(req.prompt().contains("No more than 70 words."));
        let text = generate_cot(&req, &mock(MockPolicy::FixedText("Step one.".into()))).unwrap();
        assert_eq!(text, "Step one.");
        let ids: Vec<String> = (0..1000).map(|i| format!("x{i}")).collect();
        assert_eq!(select_for_cot(&ids, 0.1, 1000, 1).len(), 100);
        assert_eq!(select_for_cot(&ids, 0.1, 40, 1).len(), 40);
        assert_eq!(select_for_cot(&ids, 0.1, 1000, 1), select_for_cot(&ids, 0.1, 1000, 1));
        for s in 0..200 {
            let w = CotRequest::new("q", "a", s).words_limit;
            assert!((70..=200).contains(&w));
        }
    }
}
