//! Answer serialization, parsing and CoT splicing.
//!
//! * Triplet and natural-language families are driven by the FormatSpec's
//!   item template (see [`template`]). Triplet items are emitted in a seeded
//!   random order; NL items keep gold order.
//! * The JSON family renders `{"task": .., "<items>": [..]}` with sorted keys.
//! * Markdown passes the on-demand table through unchanged.
//! * An empty gold always renders as the spec's fail output, verbatim.
//!
//! Slot values that collide with template punctuation are wrapped in double
//! quotes with backslash escapes, so every rendered answer parses back to the
//! same items.

mod json;
pub mod markdown;
mod template;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{AlignmentExample, Extraction, FormatFamily, FormatSpec, SchemaView, TaskKind};
use crate::seed;
use template::TemplateGrammar;

/// Marker placed between an explanation and its answer when the format has
/// no answer prefix of its own.
pub const ANSWER_MARKER: &str = "[Answer]:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Malformed text is an error (corpus construction).
    #[default]
    Strict,
    /// Never errors; recovers what it can and records diagnostics
    /// (evaluation of model outputs).
    Lenient,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseOutcome {
    pub extraction: Extraction,
    pub diagnostics: Vec<Diagnostic>,
    /// The text was the fail output.
    pub fail_output: bool,
    /// Explanation found ahead of the answer, if any.
    pub cot: Option<String>,
}

impl ParseOutcome {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

fn grammar_for(spec: &FormatSpec) -> Result<Arc<TemplateGrammar>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<TemplateGrammar>>>> = OnceLock::new();
    let key = serde_json::to_string(spec)?;
    let cache = CACHE.get_or_init(Default::default);
    if let Some(g) = cache.lock().expect("grammar cache poisoned").get(&key) {
        return Ok(g.clone());
    }
    let g = Arc::new(TemplateGrammar::compile(spec)?);
    cache
        .lock()
        .expect("grammar cache poisoned")
        .insert(key, g.clone());
    Ok(g)
}

/// Validates `spec` and compiles its answer grammar.
pub fn check_format(spec: &FormatSpec) -> Result<()> {
    spec.validate()?;
    if matches!(spec.family, FormatFamily::Triplet | FormatFamily::NaturalLanguage) {
        grammar_for(spec)?;
    }
    Ok(())
}

fn check_task(gold: &Extraction, spec: &FormatSpec) -> Result<()> {
    if gold.task() != spec.task {
        return Err(Error::TaskMismatch {
            expected: spec.task.to_string(),
            found: gold.task().to_string(),
        });
    }
    let family_ok = match spec.family {
        FormatFamily::Markdown => spec.task == TaskKind::OnDemandIe,
        _ => spec.task != TaskKind::OnDemandIe,
    };
    if !family_ok {
        return Err(Error::config(format!(
            "format {}: family {:?} does not fit task {}",
            spec.name, spec.family, spec.task
        )));
    }
    Ok(())
}

fn render(gold: &Extraction, spec: &FormatSpec, shuffle_seed: Option<u64>) -> Result<String> {
    check_task(gold, spec)?;
    if gold.is_empty() {
        return Ok(spec.fail_output.clone());
    }
    match spec.family {
        FormatFamily::Markdown => match gold {
            Extraction::OnDemand(t) => Ok(t.clone()),
            _ => unreachable!("checked by check_task"),
        },
        FormatFamily::Json => json::render(&gold.to_items(), spec),
        FormatFamily::Triplet | FormatFamily::NaturalLanguage => {
            let mut items = gold.to_items();
            if let (FormatFamily::Triplet, Some(s)) = (spec.family, shuffle_seed) {
                items.shuffle(&mut seed::rng(s));
            }
            grammar_for(spec)?.render_items(&items, spec)
        }
    }
}

/// Serializes `gold` under `spec`. Triplet items are shuffled with `seed`.
pub fn serialize_answer(gold: &Extraction, spec: &FormatSpec, seed: u64) -> Result<String> {
    render(gold, spec, Some(seed))
}

/// Serializes with the gold's own item order in every family (used where a
/// single stable reference is needed, e.g. BLEU scoring).
pub fn serialize_answer_ordered(gold: &Extraction, spec: &FormatSpec) -> Result<String> {
    render(gold, spec, None)
}

fn prefix_key(spec: &FormatSpec) -> &str {
    spec.answer_prefix.trim()
}

/// Splits an explanation from its answer. The answer starts after the last
/// blank line that is followed by the answer prefix or [`ANSWER_MARKER`].
pub fn split_cot<'a>(text: &'a str, spec: &FormatSpec) -> (Option<&'a str>, &'a str) {
    let prefix = prefix_key(spec);
    let mut best = None;
    let mut search = 0;
    while let Some(rel) = text[search..].find("\n\n") {
        let at = search + rel;
        let rest = text[at..].trim_start();
        if rest.starts_with(ANSWER_MARKER) || (!prefix.is_empty() && rest.starts_with(prefix)) {
            best = Some(at);
        }
        search = at + 1;
    }
    match best {
        Some(at) => {
            let mut answer = text[at..].trim_start();
            if !prefix.starts_with(ANSWER_MARKER) && answer.starts_with(ANSWER_MARKER) {
                answer = answer[ANSWER_MARKER.len()..].trim_start();
            }
            (Some(text[..at].trim_end()), answer)
        }
        None => (None, text),
    }
}

fn is_fail(body: &str, spec: &FormatSpec, lenient: bool) -> bool {
    let fail = spec.fail_output.trim();
    let body = body.trim();
    if body == fail {
        return true;
    }
    if lenient {
        let norm = |s: &str| {
            s.trim_end_matches(['.', ';', '!'])
                .trim()
                .to_lowercase()
        };
        return norm(body) == norm(fail);
    }
    false
}

/// Parses a serialized answer back into an extraction.
///
/// With `view`, labels outside the view are reported as diagnostics (the
/// items are still returned). In lenient mode this function only fails on
/// a broken FormatSpec.
pub fn parse_answer(
    text: &str,
    spec: &FormatSpec,
    view: Option<&SchemaView>,
    mode: ParseMode,
) -> Result<ParseOutcome> {
    let strict = mode == ParseMode::Strict;
    let lenient = !strict;
    let (cot, answer) = split_cot(text, spec);
    let mut diagnostics = Vec::new();
    let base = answer.as_ptr() as usize - text.as_ptr() as usize;

    let done = |extraction: Extraction, diagnostics: Vec<Diagnostic>, fail: bool| ParseOutcome {
        extraction,
        diagnostics,
        fail_output: fail,
        cot: cot.map(str::to_string),
    };

    if is_fail(answer, spec, lenient) {
        return Ok(done(Extraction::empty(spec.task), diagnostics, true));
    }

    // Strip the answer prefix.
    let prefix = prefix_key(spec);
    let mut body_start = 0;
    if !prefix.is_empty() {
        let trimmed = answer.trim_start();
        let lead = answer.len() - trimmed.len();
        if trimmed.starts_with(prefix) {
            body_start = lead + prefix.len();
        } else if let Some(at) = answer.find(prefix).filter(|_| lenient) {
            diagnostics.push(Diagnostic {
                offset: base,
                message: "text before answer prefix ignored".into(),
            });
            body_start = at + prefix.len();
        } else if strict {
            return Err(Error::Parse {
                offset: base + lead,
                message: format!("missing answer prefix {prefix:?}"),
            });
        } else {
            diagnostics.push(Diagnostic {
                offset: base,
                message: format!("missing answer prefix {prefix:?}"),
            });
        }
    }
    let body = &answer[body_start..];
    let offset = base + body_start;
    if is_fail(body, spec, lenient) {
        return Ok(done(Extraction::empty(spec.task), diagnostics, true));
    }

    let shift = |e: Error| match e {
        Error::Parse { offset: o, message } => Error::Parse {
            offset: o + offset,
            message,
        },
        other => other,
    };

    let (extraction, problems) = match spec.family {
        FormatFamily::Markdown => {
            let t = body.trim();
            let problems = if markdown::parse_table(t).is_none() {
                if strict {
                    return Err(Error::Parse {
                        offset,
                        message: "no markdown table".into(),
                    });
                }
                vec![(0, "no markdown table".to_string())]
            } else {
                Vec::new()
            };
            (Extraction::OnDemand(t.to_string()), problems)
        }
        FormatFamily::Json => {
            let (items, p) = json::parse(body, spec, strict).map_err(shift)?;
            (Extraction::from_items(spec.task, items), p)
        }
        FormatFamily::Triplet | FormatFamily::NaturalLanguage => {
            let g = grammar_for(spec)?;
            let (items, p) = g.parse_items(body, strict).map_err(shift)?;
            if lenient && items.is_empty() && p.is_empty() && !body.trim().is_empty() {
                (
                    Extraction::from_items(spec.task, items),
                    vec![(0, "no items recognized".to_string())],
                )
            } else {
                (Extraction::from_items(spec.task, items), p)
            }
        }
    };
    diagnostics.extend(problems.into_iter().map(|(o, m)| Diagnostic {
        offset: offset + o,
        message: m,
    }));
    if strict && extraction.is_empty() && spec.family != FormatFamily::Markdown {
        return Err(Error::Parse {
            offset,
            message: "no items and not the fail output".into(),
        });
    }

    if let Some(v) = view {
        for label in extraction.labels() {
            if !v.contains(&label) {
                diagnostics.push(Diagnostic {
                    offset,
                    message: format!("label {label:?} outside the shown schema"),
                });
            }
        }
    }
    Ok(done(extraction, diagnostics, false))
}

/// Prepends an explanation to the example's answer, separated by a blank
/// line and the answer prefix (or [`ANSWER_MARKER`]).
pub fn attach_cot(example: &AlignmentExample, explanation: &str) -> Result<AlignmentExample> {
    if example.cot.is_some() {
        return Err(Error::data(format!(
            "example {} already carries an explanation",
            example.instance_id
        )));
    }
    let explanation = explanation.trim();
    if explanation.is_empty() {
        return Err(Error::data("empty explanation"));
    }
    let prefix = prefix_key(&example.format);
    let answer = example.output.trim_start();
    let output = if !prefix.is_empty() && answer.starts_with(prefix) {
        format!("{explanation}\n\n{answer}")
    } else if prefix.starts_with(ANSWER_MARKER) {
        format!("{explanation}\n\n{} {answer}", prefix)
    } else {
        format!("{explanation}\n\n{ANSWER_MARKER} {answer}")
    };
    let mut out = example.clone();
    out.output = output;
    out.cot = Some(explanation.to_string());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{eval_format, formats_for};
    use crate::model::{Entity, OpenTuple, Relation};

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
    fn rc_triplet_rendering() {
        let spec = formats_for(TaskKind::Rc)
            .iter()
            .find(|f| f.name == "rc-triplet-sro")
            .unwrap();
        let gold = Extraction::Rc(vec![Relation {
            subject: "Jobs".into(),
            relation: "founder".into(),
            object: "Apple".into(),
        }]);
        assert_eq!(serialize_answer(&gold, spec, 0).unwrap(), "(Jobs; founder; Apple)");
    }

    #[test]
    fn empty_gold_is_fail_output() {
        let spec = eval_format(TaskKind::Ner);
        assert_eq!(serialize_answer(&ner(&[]), spec, 3).unwrap(), "NA");
        let out = parse_answer("NA", spec, None, ParseMode::Strict).unwrap();
        assert!(out.fail_output && out.extraction.is_empty());
    }

    #[test]
    fn eval_ner_grammar_parses_answer_line() {
        let spec = eval_format(TaskKind::Ner);
        let out = parse_answer("[Answer]: Paris: LOC; Obama: PER;", spec, None, ParseMode::Strict)
            .unwrap();
        assert!(out.extraction.same_items(&ner(&[("Paris", "LOC"), ("Obama", "PER")])));
    }

    #[test]
    fn openie_omits_missing_trailing_slots() {
        let spec = eval_format(TaskKind::OpenIe);
        let mut t = OpenTuple {
            predicate: "visited".into(),
            subject: "Obama".into(),
            object: "Paris".into(),
            time: None,
            location: None,
        };
        let gold = Extraction::OpenIe(vec![t.clone()]);
        let s = serialize_answer(&gold, spec, 0).unwrap();
        assert_eq!(s, "[Answer]: (visited; Obama; Paris)");
        assert_eq!(
            parse_answer(&s, spec, None, ParseMode::Strict).unwrap().extraction,
            gold
        );
        t.location = Some("France".into());
        let gold = Extraction::OpenIe(vec![t]);
        let s = serialize_answer(&gold, spec, 0).unwrap();
        assert_eq!(s, "[Answer]: (visited; Obama; Paris; ; France)");
        assert_eq!(
            parse_answer(&s, spec, None, ParseMode::Strict).unwrap().extraction,
            gold
        );
    }

    #[test]
    fn delimiter_collisions_are_quoted() {
        let spec = eval_format(TaskKind::Ner);
        let gold = ner(&[("A; B: (c)", "PER"), ("say \"hi\"", "LOC")]);
        let s = serialize_answer(&gold, spec, 1).unwrap();
        assert!(s.contains("\"A; B: (c)\""), "{s}");
        let back = parse_answer(&s, spec, None, ParseMode::Strict).unwrap();
        assert!(back.extraction.same_items(&gold), "{s} -> {:?}", back.extraction);
    }

    #[test]
    fn strict_reports_offset_lenient_recovers_prefix() {
        let spec = eval_format(TaskKind::Ner);
        let text = "[Answer]: Paris: LOC; ???";
        match parse_answer(text, spec, None, ParseMode::Strict) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 22),
            other => panic!("expected parse error, got {other:?}"),
        }
        let out = parse_answer(text, spec, None, ParseMode::Lenient).unwrap();
        assert!(out.extraction.same_items(&ner(&[("Paris", "LOC"), ("???", "")]))
            || out.extraction.same_items(&ner(&[("Paris", "LOC")])));
        assert!(!out.diagnostics.is_empty());
    }

    #[test]
    fn lenient_never_errors_on_garbage() {
        for spec in TaskKind::ALL.iter().flat_map(|t| formats_for(*t)) {
            for junk in ["", "???", "{\"broken\": ", "[Answer]: (a; b", "\u{0}\u{1}", "(;;;)"] {
                let out = parse_answer(junk, spec, None, ParseMode::Lenient);
                assert!(out.is_ok(), "{} on {junk:?}: {out:?}", spec.name);
            }
        }
    }

    #[test]
    fn labels_outside_view_are_flagged() {
        let spec = eval_format(TaskKind::Ner);
        let view = SchemaView {
            labels: vec![crate::model::LabelDef::new("PER")],
            symbols: None,
            guidelines_included: false,
        };
        let out = parse_answer("[Answer]: Paris: LOC;", spec, Some(&view), ParseMode::Lenient)
            .unwrap();
        assert_eq!(out.diagnostics.len(), 1);
        assert!(out.diagnostics[0].message.contains("LOC"));
    }

    fn example(spec: &FormatSpec, output: &str) -> AlignmentExample {
        AlignmentExample {
            instance_id: "i".into(),
            dataset: "d".into(),
            task: spec.task,
            prompt: "p".into(),
            demonstrations: vec![],
            output: output.into(),
            cot: None,
            format: spec.clone(),
            schema_view: None,
        }
    }

    #[test]
    fn cot_on_fail_output_still_parses_empty() {
        let spec = eval_format(TaskKind::Ner);
        let ex = attach_cot(&example(spec, "NA"), "No entities are mentioned.").unwrap();
        assert_eq!(ex.output, "No entities are mentioned.\n\n[Answer]: NA");
        let out = parse_answer(&ex.output, spec, None, ParseMode::Strict).unwrap();
        assert!(out.extraction.is_empty() && out.fail_output);
        assert_eq!(out.cot.as_deref(), Some("No entities are mentioned."));
        assert_eq!(ex.answer(), "[Answer]: NA");
    }

    #[test]
    fn cot_on_prefixless_format() {
        let spec = formats_for(TaskKind::Ner)
            .iter()
            .find(|f| f.family == FormatFamily::Json)
            .unwrap();
        let gold = ner(&[("Obama", "PER")]);
        let answer = serialize_answer(&gold, spec, 0).unwrap();
        let ex = attach_cot(&example(spec, &answer), "Obama is a person.").unwrap();
        let out = parse_answer(&ex.output, spec, None, ParseMode::Strict).unwrap();
        assert!(out.extraction.same_items(&gold));
    }

    #[test]
    fn cot_preconditions() {
        let spec = eval_format(TaskKind::Ner);
        let ex = attach_cot(&example(spec, "NA"), "E").unwrap();
        assert!(attach_cot(&ex, "again").is_err());
        assert!(attach_cot(&example(spec, "NA"), "  ").is_err());
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let spec = eval_format(TaskKind::Ner);
        let gold = Extraction::Re(vec![]);
        assert!(matches!(
            serialize_answer(&gold, spec, 0),
            Err(Error::TaskMismatch { .. })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_every_bundled_format(seed in proptest::prelude::any::<u64>()) {
            let mut rng = crate::seed::rng(seed);
            for task in TaskKind::ALL {
                let gold = crate::fixtures::random_extraction(task, &mut rng, 6, true);
                for spec in formats_for(task).iter().chain([eval_format(task)]) {
                    let text = serialize_answer(&gold, spec, seed).unwrap();
                    proptest::prop_assert!(!text.is_empty());
                    let back = parse_answer(&text, spec, None, ParseMode::Strict)
                        .map_err(|e| proptest::test_runner::TestCaseError::fail(format!("{}: {e}\n{text}", spec.name)))?;
                    proptest::prop_assert!(back.extraction.same_items(&gold),
                        "{}: {text:?}\n{:?}\n{:?}", spec.name, gold, back.extraction);
                    let lenient = parse_answer(&text, spec, None, ParseMode::Lenient).unwrap();
                    proptest::prop_assert!(lenient.is_clean(), "{}: {:?}", spec.name, lenient.diagnostics);
                }
            }
        }

        #[test]
        fn triplet_shuffle_keeps_the_multiset(seed in proptest::prelude::any::<u64>()) {
            let mut rng = crate::seed::rng(seed);
            let gold = crate::fixtures::random_extraction(TaskKind::Re, &mut rng, 6, false);
            let spec = &formats_for(TaskKind::Re)[0];
            let a = serialize_answer(&gold, spec, seed).unwrap();
            let b = serialize_answer(&gold, spec, seed.wrapping_add(1)).unwrap();
            let pa = parse_answer(&a, spec, None, ParseMode::Strict).unwrap().extraction;
            let pb = parse_answer(&b, spec, None, ParseMode::Strict).unwrap().extraction;
            proptest::prop_assert!(pa.same_items(&pb));
        }
    }
}
