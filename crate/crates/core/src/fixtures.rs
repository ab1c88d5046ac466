//! Synthetic data for every task: schemas with guidelines, labeled
//! instances whose mentions occur in the text, general-domain records, and
//! random extractions for property tests.
//!
//! Nothing here resembles a real dataset beyond its shape.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    Argument, ArgumentFrame, Entity, Event, EventRelation, Extraction, IEInstance, LabelDef,
    OpenTuple, Relation, SchemaDef, TaskKind, Trigger,
};
use crate::seed::rng_for;

const PEOPLE: &[&str] = &[
    "Ada Lovelace", "Alan Turing", "Grace Hopper", "Marie Curie", "Nikola Tesla", "Rosalind Franklin",
    "Carl Gauss", "Emmy Noether", "Isaac Newton", "Hedy Lamarr", "Lise Meitner", "Srinivasa Ramanujan",
    "Katherine Johnson", "Niels Bohr", "Barbara Liskov", "John Nash", "Edsger Dijkstra", "Tim Berners-Lee",
];
const PLACES: &[&str] = &[
    "Paris", "Lagos", "Osaka", "Quito", "Oslo", "Hanoi", "Cairo", "Lima", "Perth", "Riga", "Turin",
    "Dakar", "Kyoto", "Bergen", "Porto", "Tbilisi", "Montreal", "Valparaiso",
];
const ORGS: &[&str] = &[
    "Acme Corp", "Globex", "Initech", "Umbrella Labs", "Stark Industries", "Wayne Enterprises",
    "Hooli", "Vandelay Imports", "Cyberdyne", "Soylent Co", "Tyrell Corp", "Wonka Foods",
];
const DATES: &[&str] = &[
    "Monday", "last spring", "in 1998", "March 3", "the following week", "2011", "at dawn", "in May",
];
const FILLER: &[&str] = &[
    "reportedly", "according to officials", "earlier today", "in a statement", "once again",
    "after a long delay", "despite objections", "as expected", "without comment", "quietly",
];
const VERBS: &[&str] = &[
    "visited", "founded", "praised", "acquired", "criticized", "joined", "left", "met", "funded",
    "sued", "hired", "thanked",
];

const NER_LABELS: &[(&str, &str, &[&str])] = &[
    ("PER", "Names of people, real or fictional.", &["Ada Lovelace", "Alan Turing"]),
    ("LOC", "Geographic locations such as cities and countries.", &["Paris", "Oslo"]),
    ("ORG", "Companies, agencies and other organizations.", &["Acme Corp", "Globex"]),
    ("DATE", "Absolute or relative dates and times.", &["Monday", "in 1998"]),
    ("MISC", "Other named things such as events or nationalities.", &["Olympics"]),
];
const REL_LABELS: &[(&str, &str, &[&str])] = &[
    ("org:founded_by", "The organization was founded by the person.", &["Globex; Ada Lovelace"]),
    ("per:city_of_birth", "The person was born in the city.", &["Alan Turing; Paris"]),
    ("per:employee_of", "The person works for the organization.", &["Grace Hopper; Hooli"]),
    ("org:city_of_headquarters", "The organization is based in the city.", &["Initech; Oslo"]),
    ("per:visited", "The person travelled to the place.", &[]),
    ("no_relation", "No relation holds between the pair.", &[]),
];
const EVENT_LABELS: &[(&str, &str, &[&str])] = &[
    ("Movement.Transport", "Someone or something moves from one place to another.", &["travelled", "flew"]),
    ("Business.Start-Org", "A new organization is created.", &["founded", "launched"]),
    ("Conflict.Attack", "A violent physical act.", &["attacked", "bombed"]),
    ("Contact.Meet", "Two or more parties meet in person.", &["met", "gathered"]),
    ("Personnel.Start-Position", "A person starts working for an organization.", &["hired", "joined"]),
];
const ROLE_LABELS: &[(&str, &str, &[&str])] = &[
    ("Agent", "The party that performs the action.", &["Ada Lovelace"]),
    ("Place", "Where the event happens.", &["Lagos"]),
    ("Time", "When the event happens.", &["Monday"]),
    ("Entity", "The participant affected by the event.", &["Globex"]),
    ("Destination", "Where the movement ends.", &["Osaka"]),
];
const ERE_LABELS: &[(&str, &str, &[&str])] = &[
    ("BEFORE", "The first event happens before the second.", &[]),
    ("AFTER", "The first event happens after the second.", &[]),
    ("CAUSE", "The first event causes the second.", &[]),
    ("SUBEVENT", "The second event is part of the first.", &[]),
    ("NONE", "The events are not related.", &[]),
];

fn labels(defs: &[(&str, &str, &[&str])], skip_null: bool) -> Vec<LabelDef> {
    defs.iter()
        .filter(|(n, _, _)| !(skip_null && null_label_names().contains(n)))
        .map(|(n, g, ex)| LabelDef::new(*n).with_guideline(*g).with_exemplars(ex.iter().copied()))
        .collect()
}

fn null_label_names() -> [&'static str; 2] {
    ["no_relation", "NONE"]
}

/// The synthetic schema for a closed task (`None` for open tasks). Null
/// labels are not part of the schema; readers map them to "no item".
pub fn schema(task: TaskKind) -> Option<SchemaDef> {
    let labels = match task {
        TaskKind::Ner => labels(NER_LABELS, true),
        TaskKind::Rc | TaskKind::Re => labels(REL_LABELS, true),
        TaskKind::Ed => labels(EVENT_LABELS, true),
        TaskKind::Eae => labels(ROLE_LABELS, true),
        TaskKind::Ee => {
            let mut l = labels(EVENT_LABELS, true);
            l.extend(labels(ROLE_LABELS, true));
            l
        }
        TaskKind::Ere => labels(ERE_LABELS, true),
        TaskKind::OpenIe | TaskKind::OnDemandIe => return None,
    };
    Some(SchemaDef { task, labels })
}

/// Null label used by the synthetic raw files for this task.
pub fn null_label(task: TaskKind) -> Option<&'static str> {
    match task {
        TaskKind::Rc | TaskKind::Re => Some("no_relation"),
        TaskKind::Ere => Some("NONE"),
        _ => None,
    }
}

fn event_types() -> Vec<&'static str> {
    EVENT_LABELS.iter().map(|l| l.0).collect()
}

fn roles() -> Vec<&'static str> {
    ROLE_LABELS.iter().map(|l| l.0).collect()
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty list")
}

/// Draws `k` distinct strings from `xs` (fewer if `xs` is short).
fn pick_distinct<'a, R: Rng>(rng: &mut R, xs: &[&'a str], k: usize) -> Vec<&'a str> {
    xs.choose_multiple(rng, k).copied().collect()
}

fn sentence<R: Rng>(rng: &mut R, parts: &[&str]) -> String {
    let mut words: Vec<String> = parts.iter().map(|s| s.to_string()).collect();
    for _ in 0..rng.random_range(1..=3) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, pick(rng, FILLER).to_string());
    }
    let mut s = words.join(" ");
    s.push('.');
    s
}

/// One synthetic (text, gold) pair. `na` forces an empty gold.
fn synth_gold<R: Rng>(task: TaskKind, rng: &mut R, na: bool) -> (String, Extraction) {
    let n_items = if na { 0 } else { rng.random_range(1..=3) };
    match task {
        TaskKind::Ner => {
            let mut pool: Vec<(&str, &str)> = Vec::new();
            pool.extend(pick_distinct(rng, PEOPLE, 2).into_iter().map(|p| (p, "PER")));
            pool.extend(pick_distinct(rng, PLACES, 2).into_iter().map(|p| (p, "LOC")));
            pool.extend(pick_distinct(rng, ORGS, 1).into_iter().map(|p| (p, "ORG")));
            pool.extend(pick_distinct(rng, DATES, 1).into_iter().map(|p| (p, "DATE")));
            pool.shuffle(rng);
            pool.truncate(n_items);
            let mut parts: Vec<&str> = pool.iter().map(|p| p.0).collect();
            if parts.is_empty() {
                parts.extend(["the committee", "the proposal"]);
            }
            let verb = pick(rng, VERBS);
            parts.insert(1.min(parts.len()), verb);
            let gold = pool
                .into_iter()
                .map(|(m, l)| Entity {
                    mention: m.into(),
                    label: l.into(),
                })
                .collect();
            (sentence(rng, &parts), Extraction::Ner(gold))
        }
        TaskKind::Rc | TaskKind::Re => {
            let k = if task == TaskKind::Rc { n_items.min(1) } else { n_items };
            let mut rels = Vec::new();
            let mut parts = Vec::new();
            let people = pick_distinct(rng, PEOPLE, 3);
            let orgs = pick_distinct(rng, ORGS, 3);
            let places = pick_distinct(rng, PLACES, 3);
            for i in 0..k {
                let (s, r, o, verb) = match rng.random_range(0..5) {
                    0 => (orgs[i], "org:founded_by", people[i], "was founded by"),
                    1 => (people[i], "per:city_of_birth", places[i], "was born in"),
                    2 => (people[i], "per:employee_of", orgs[i], "works for"),
                    3 => (orgs[i], "org:city_of_headquarters", places[i], "is based in"),
                    _ => (people[i], "per:visited", places[i], "visited"),
                };
                parts.push(format!("{s} {verb} {o}"));
                rels.push(Relation {
                    subject: s.into(),
                    relation: r.into(),
                    object: o.into(),
                });
            }
            if parts.is_empty() {
                parts.push(format!("{} and {} were mentioned", people[0], orgs[0]));
            }
            let parts: Vec<&str> = parts.iter().map(String::as_str).collect();
            let text = sentence(rng, &[parts.join(" and ").as_str()]);
            let gold = if task == TaskKind::Rc {
                Extraction::Rc(rels)
            } else {
                Extraction::Re(rels)
            };
            (text, gold)
        }
        TaskKind::Ed => {
            let mut items = Vec::new();
            let mut parts = Vec::new();
            for (ty, _, words) in EVENT_LABELS.choose_multiple(rng, n_items) {
                let w = pick(rng, words);
                parts.push(format!("{} {w} {}", pick(rng, PEOPLE), pick(rng, PLACES)));
                items.push(Trigger {
                    trigger: w.into(),
                    event_type: (*ty).into(),
                });
            }
            if parts.is_empty() {
                parts.push(format!("{} stayed calm", pick(rng, PEOPLE)));
            }
            (sentence(rng, &[parts.join(", then ").as_str()]), Extraction::Ed(items))
        }
        TaskKind::Eae => {
            let (ty, _, words) = EVENT_LABELS.choose(rng).expect("labels");
            let trig = pick(rng, words);
            let fillers = [pick(rng, PEOPLE), pick(rng, PLACES), pick(rng, DATES), pick(rng, ORGS)];
            let role_names = ["Agent", "Place", "Time", "Entity"];
            let mut idx: Vec<usize> = (0..4).collect();
            idx.shuffle(rng);
            idx.truncate(n_items);
            let arguments = idx
                .iter()
                .map(|&i| Argument {
                    text: fillers[i].into(),
                    role: role_names[i].into(),
                })
                .collect();
            let text = sentence(rng, &[fillers[0], trig, fillers[3], "near", fillers[1], fillers[2]]);
            let frame = ArgumentFrame {
                trigger: trig.into(),
                event_type: (*ty).into(),
                arguments,
            };
            (text, Extraction::Eae(frame))
        }
        TaskKind::Ee => {
            let mut events = Vec::new();
            let mut parts = Vec::new();
            for (ty, _, words) in EVENT_LABELS.choose_multiple(rng, n_items) {
                let w = pick(rng, words);
                let agent = pick(rng, PEOPLE);
                let place = pick(rng, PLACES);
                parts.push(format!("{agent} {w} in {place}"));
                let mut arguments = vec![Argument {
                    text: agent.into(),
                    role: "Agent".into(),
                }];
                if rng.random_bool(0.6) {
                    arguments.push(Argument {
                        text: place.into(),
                        role: "Place".into(),
                    });
                }
                if rng.random_bool(0.2) {
                    arguments.clear();
                }
                events.push(Event {
                    trigger: w.into(),
                    event_type: (*ty).into(),
                    arguments,
                });
            }
            if parts.is_empty() {
                parts.push("nothing happened".into());
            }
            (sentence(rng, &[parts.join(" and ").as_str()]), Extraction::Ee(events))
        }
        TaskKind::Ere => {
            let mut rels = Vec::new();
            let mut parts = Vec::new();
            let words: Vec<&str> = EVENT_LABELS.iter().flat_map(|l| l.2.iter().copied()).collect();
            let evs = pick_distinct(rng, &words, 6);
            for i in 0..n_items {
                let (a, b) = (evs[2 * i], evs[2 * i + 1]);
                let rel = pick(rng, &["BEFORE", "AFTER", "CAUSE", "SUBEVENT"]);
                parts.push(format!("they {a} and later {b}"));
                rels.push(EventRelation {
                    head: a.into(),
                    relation: rel.into(),
                    tail: b.into(),
                });
            }
            if parts.is_empty() {
                parts.push(format!("they {} while others {}", evs[0], evs[1]));
            }
            (sentence(rng, &[parts.join("; ").as_str()]), Extraction::Ere(rels))
        }
        TaskKind::OpenIe => {
            let mut tuples = Vec::new();
            let mut parts = Vec::new();
            let people = pick_distinct(rng, PEOPLE, 3);
            let verbs = pick_distinct(rng, VERBS, 3);
            for i in 0..n_items {
                let obj = pick(rng, ORGS);
                let time = rng.random_bool(0.4).then(|| pick(rng, DATES).to_string());
                let location = rng.random_bool(0.3).then(|| pick(rng, PLACES).to_string());
                let mut p = format!("{} {} {obj}", people[i], verbs[i]);
                if let Some(l) = &location {
                    p.push_str(&format!(" in {l}"));
                }
                if let Some(t) = &time {
                    p.push_str(&format!(" {t}"));
                }
                parts.push(p);
                tuples.push(OpenTuple {
                    predicate: verbs[i].into(),
                    subject: people[i].into(),
                    object: obj.into(),
                    time,
                    location,
                });
            }
            if parts.is_empty() {
                parts.push("it rained".into());
            }
            (sentence(rng, &[parts.join(", and ").as_str()]), Extraction::OpenIe(tuples))
        }
        TaskKind::OnDemandIe => {
            let rows = rng.random_range(1..=4);
            let people = pick_distinct(rng, PEOPLE, rows);
            let mut text = String::from("Instruction: List each person with the organization they joined and the city.\nText:");
            let mut table = String::from("| Person | Organization | City |\n|---|---|---|\n");
            for p in people {
                let o = pick(rng, ORGS);
                let c = pick(rng, PLACES);
                text.push_str(&format!(" {p} joined {o} in {c}."));
                table.push_str(&format!("| {p} | {o} | {c} |\n"));
            }
            (text, Extraction::OnDemand(table.trim_end().to_string()))
        }
    }
}

/// `n` synthetic instances of `task`. Roughly `na_fraction` of them (never
/// on-demand ones) have an empty gold.
pub fn dataset(task: TaskKind, name: &str, n: usize, na_fraction: f64, seed: u64) -> Vec<IEInstance> {
    let mut rng = rng_for(seed, &["fixture", name]);
    let schema = schema(task);
    (0..n)
        .map(|i| {
            let na = task != TaskKind::OnDemandIe && rng.random_bool(na_fraction.clamp(0.0, 1.0));
            let (text, gold) = synth_gold(task, &mut rng, na);
            IEInstance::new(name, i as u64, text, schema.clone(), gold)
        })
        .collect()
}

/// One dataset per task, named `synth-<task>`, of `per_task` instances.
pub fn corpus(per_task: usize, na_fraction: f64, seed: u64) -> BTreeMap<String, Vec<IEInstance>> {
    TaskKind::ALL
        .iter()
        .map(|t| {
            let name = format!("synth-{}", t.as_str().to_lowercase());
            let data = dataset(*t, &name, per_task, na_fraction, seed);
            (name, data)
        })
        .collect()
}

/// A general-domain (non-IE) alignment record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralRecord {
    pub id: String,
    pub prompt: String,
    pub output: String,
}

pub fn general_records(n: usize, seed: u64) -> Vec<GeneralRecord> {
    let mut rng = rng_for(seed, &["fixture", "general"]);
    (0..n)
        .map(|i| {
            let p = pick(&mut rng, PEOPLE);
            GeneralRecord {
                id: format!("general-{i}"),
                prompt: format!("Write one sentence about {p}."),
                output: format!("{p} is remembered {}.", pick(&mut rng, FILLER)),
            }
        })
        .collect()
}

/// Values that collide with the punctuation of the bundled grammars.
const TRICKY: &[&str] = &[
    "a; b", "x)", "(y", "q: r", "say \"hi\"", "back\\slash", "line\nbreak", " lead", "trail ",
    "[arr]", "c, d", "is a", "U.S.", "{brace}", "NA", "LABEL_1", "x and y", "The type of",
    "50%", "-", "()", ";", "\"", "a.b", "Event", "with arguments", "é ü ß", "tab\there",
];

fn random_value<R: Rng>(rng: &mut R, tricky: bool) -> String {
    if tricky && rng.random_bool(0.35) {
        let mut v = pick(rng, TRICKY).to_string();
        if rng.random_bool(0.3) {
            v = format!("{v} {}", pick(rng, PLACES));
        }
        return v;
    }
    let pools = [PEOPLE, PLACES, ORGS, VERBS, DATES];
    let pool = pools[rng.random_range(0..pools.len())];
    pick(rng, pool).to_string()
}

fn random_label<R: Rng>(rng: &mut R, labels: &[String], tricky: bool) -> String {
    if tricky && rng.random_bool(0.1) {
        return random_value(rng, true);
    }
    labels.choose(rng).cloned().expect("non-empty labels")
}

/// A random extraction with up to `max_items` distinct items. With
/// `tricky`, values include delimiter characters, quotes, escapes, edge
/// whitespace and keywords from the answer templates.
pub fn random_extraction<R: Rng>(task: TaskKind, rng: &mut R, max_items: usize, tricky: bool) -> Extraction {
    let label_names: Vec<String> = match schema(task) {
        Some(s) if task == TaskKind::Ee => {
            let _ = s;
            event_types().into_iter().map(str::to_string).collect()
        }
        Some(s) => s.labels.into_iter().map(|l| l.name).collect(),
        None => Vec::new(),
    };
    let role_names: Vec<String> = roles().into_iter().map(str::to_string).collect();
    let n = if task == TaskKind::Rc {
        rng.random_range(0..=1)
    } else {
        rng.random_range(0..=max_items)
    };
    if task == TaskKind::OnDemandIe {
        let rows = rng.random_range(1..=3);
        let mut t = String::from("| A | B |\n|---|---|");
        for _ in 0..rows {
            t.push_str(&format!("\n| {} | {} |", pick(rng, PEOPLE), pick(rng, PLACES)));
        }
        return Extraction::OnDemand(t);
    }
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    let mut guard = 0;
    while items.len() < n && guard < 50 * (n + 1) {
        guard += 1;
        let mut v = || random_value(rng, tricky);
        let ext = match task {
            TaskKind::Ner => Extraction::Ner(vec![Entity {
                mention: v(),
                label: random_label(rng, &label_names, tricky),
            }]),
            TaskKind::Rc | TaskKind::Re => {
                let (s, o) = (v(), v());
                Extraction::Re(vec![Relation {
                    subject: s,
                    relation: random_label(rng, &label_names, tricky),
                    object: o,
                }])
            }
            TaskKind::Ed => Extraction::Ed(vec![Trigger {
                trigger: v(),
                event_type: random_label(rng, &label_names, tricky),
            }]),
            TaskKind::Eae => Extraction::Ed(vec![Trigger {
                trigger: v(),
                event_type: random_label(rng, &label_names, tricky),
            }]),
            TaskKind::Ee => {
                let trig = v();
                let n_args = rng.random_range(0..=3);
                let mut args: Vec<Argument> = Vec::new();
                for _ in 0..n_args {
                    let a = Argument {
                        text: random_value(rng, tricky),
                        role: random_label(rng, &role_names, tricky),
                    };
                    if !args.contains(&a) {
                        args.push(a);
                    }
                }
                Extraction::Ee(vec![Event {
                    trigger: trig,
                    event_type: random_label(rng, &label_names, tricky),
                    arguments: args,
                }])
            }
            TaskKind::Ere => {
                let (h, t) = (v(), v());
                Extraction::Ere(vec![EventRelation {
                    head: h,
                    relation: random_label(rng, &label_names, tricky),
                    tail: t,
                }])
            }
            TaskKind::OpenIe => {
                let (p, s, o) = (v(), v(), v());
                let time = rng.random_bool(0.4).then(|| random_value(rng, tricky));
                let location = rng.random_bool(0.4).then(|| random_value(rng, tricky));
                Extraction::OpenIe(vec![OpenTuple {
                    predicate: p,
                    subject: s,
                    object: o,
                    time,
                    location,
                }])
            }
            TaskKind::OnDemandIe => unreachable!("handled above"),
        };
        let item = ext.to_items().remove(0);
        if seen.insert(format!("{item:?}")) {
            items.push(item);
        }
    }
    let mut out = Extraction::from_items(task, items);
    if let Extraction::Eae(f) = &mut out {
        f.trigger = "attacked".into();
        f.event_type = "Conflict.Attack".into();
    }
    out
}
