//! Template-driven grammar shared by the triplet and natural-language
//! families.
//!
//! An item template such as `({subject}; {relation}; {object})` is split into
//! literals and slots. Rendering substitutes slot values, quoting any value
//! that could be confused with the template's own punctuation. Parsing
//! compiles the same template into a regex in which literals tolerate
//! whitespace variation and each value is either a quoted string or the
//! shortest run of text up to the next literal.

use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{FormatFamily, FormatSpec, Item, SlotDef, SlotValue, TaskKind};

#[derive(Clone, Debug)]
enum Seg {
    Lit(String),
    Slot(usize),
    List(usize),
}

/// A compiled item template (top level or nested list).
#[derive(Debug)]
pub(crate) struct ItemTemplate {
    segs: Vec<Seg>,
    slots: &'static [SlotDef],
    /// Index in `segs` where omittable trailing optional groups start.
    omit_from: Option<usize>,
    item_re: Regex,
    /// Capture group index per slot (by slot index).
    groups: Vec<Option<usize>>,
    separator: String,
    sep_re: String,
    nested: Option<Box<NestedList>>,
}

#[derive(Debug)]
struct NestedList {
    open: String,
    close: String,
    inner: ItemTemplate,
}

const QUOTED: &str = r#""(?:[^"\\]|\\.)*""#;
/// Unquoted value: no quote anywhere, no whitespace at either edge.
const BARE: &str = r#"[^"\s](?:[^"]*?[^"\s])??"#;

/// Regex source for a literal with flexible whitespace.
fn literal_re(lit: &str) -> String {
    let chars: Vec<char> = lit.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            let start = i;
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            let left = if start == 0 { None } else { Some(chars[start - 1]) };
            let right = chars.get(i).copied();
            let wordy = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
            let required = match (left, right) {
                (Some(l), Some(r)) => wordy(Some(l)) && wordy(Some(r)),
                (None, r) => wordy(r),
                (l, None) => wordy(l),
            };
            out.push_str(if required { r"\s+" } else { r"\s*" });
        } else {
            out.push_str(&regex::escape(&chars[i].to_string()));
            i += 1;
        }
    }
    out
}

/// Regex source matching a literal's occurrence inside a slot value. Edges
/// that the template surrounds with whitespace only match on word
/// boundaries.
fn trigger_re(lit: &str) -> Option<String> {
    let core = lit.trim();
    if core.is_empty() {
        return None;
    }
    let mut out = literal_re(core);
    let wordy = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    if lit.starts_with(char::is_whitespace) && wordy(core.chars().next()) {
        out.insert_str(0, r"\b");
    }
    if lit.ends_with(char::is_whitespace) && wordy(core.chars().last()) {
        out.push_str(r"\b");
    }
    Some(out)
}

fn separator_re(sep: &str) -> String {
    if sep.trim().is_empty() {
        r"\s+".to_string()
    } else {
        format!(r"\s*{}", literal_re(sep.trim_start()))
    }
}

fn split_template(template: &str, task: TaskKind, slots: &'static [SlotDef]) -> Result<Vec<Seg>> {
    let mut segs = Vec::new();
    let mut lit = String::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name.and_then(|n| slots.iter().position(|s| s.name == n)) {
            Some(idx) => {
                lit.push_str(&rest[..start]);
                if !lit.is_empty() {
                    segs.push(Seg::Lit(std::mem::take(&mut lit)));
                }
                if matches!(segs.last(), Some(Seg::Slot(_) | Seg::List(_))) {
                    return Err(Error::config(format!(
                        "template {template:?}: adjacent slots need a literal between them"
                    )));
                }
                segs.push(if slots[idx].list {
                    Seg::List(idx)
                } else {
                    Seg::Slot(idx)
                });
                rest = &after[close.unwrap_or(0) + 1..];
            }
            None => {
                if let Some(n) = name {
                    if task.is_slot_name(n) {
                        return Err(Error::config(format!(
                            "template {template:?}: slot {{{n}}} not allowed here"
                        )));
                    }
                }
                lit.push_str(&rest[..start + 1]);
                rest = after;
            }
        }
    }
    lit.push_str(rest);
    if !lit.is_empty() {
        segs.push(Seg::Lit(lit));
    }
    Ok(segs)
}

impl ItemTemplate {
    fn compile(
        template: &str,
        task: TaskKind,
        slots: &'static [SlotDef],
        family: FormatFamily,
        separator: &str,
        list: Option<&crate::model::ListGrammar>,
    ) -> Result<Self> {
        let segs = split_template(template, task, slots)?;
        for w in segs.windows(3) {
            if let [Seg::Slot(_) | Seg::List(_), Seg::Lit(l), Seg::Slot(_) | Seg::List(_)] = w {
                if l.trim().is_empty() {
                    return Err(Error::config(format!(
                        "template {template:?}: slots separated only by whitespace are ambiguous"
                    )));
                }
            }
        }
        if matches!(segs.last(), Some(Seg::Slot(_))) && separator.trim().is_empty() {
            return Err(Error::config(format!(
                "template {template:?} ends with a slot; its separator needs a non-space delimiter"
            )));
        }

        // Trailing optional groups: Lit Opt Lit Opt ... Lit? at the end.
        let mut omit_from = None;
        if family == FormatFamily::Triplet {
            let mut i = segs.len();
            if matches!(segs.last(), Some(Seg::Lit(_))) {
                i -= 1;
            }
            while i >= 2 {
                match (&segs[i - 2], &segs[i - 1]) {
                    (Seg::Lit(_), Seg::Slot(s)) if slots[*s].optional => {
                        i -= 2;
                        omit_from = Some(i);
                    }
                    _ => break,
                }
            }
        }

        let nested = match (segs.iter().any(|s| matches!(s, Seg::List(_))), list) {
            (true, Some(lg)) => Some(Box::new(NestedList {
                open: lg.open.clone(),
                close: lg.close.clone(),
                inner: ItemTemplate::compile(
                    &lg.item_template,
                    task,
                    task.list_slots(),
                    family,
                    &lg.separator,
                    None,
                )?,
            })),
            (true, None) => {
                return Err(Error::config(format!(
                    "template {template:?} has a list slot but no list grammar"
                )))
            }
            (false, _) => None,
        };

        let mut groups = vec![None; slots.len()];
        let mut group = 0usize;
        let mut body = String::from("(?s)");
        let tail_start = omit_from.unwrap_or(segs.len());
        let mut open_groups = 0usize;
        for (i, seg) in segs.iter().enumerate() {
            let closing = i + 1 == segs.len() && matches!(seg, Seg::Lit(_)) && i > tail_start;
            if closing {
                for _ in 0..open_groups {
                    body.push_str(")?");
                }
                open_groups = 0;
            } else if i >= tail_start && matches!(seg, Seg::Lit(_)) {
                body.push_str("(?:");
                open_groups += 1;
            }
            let optional_at = |j: usize| matches!(segs.get(j), Some(Seg::Slot(s)) if slots[*s].optional);
            match seg {
                Seg::Lit(l) => {
                    if i > 0 && optional_at(i - 1) {
                        body.push_str(r"\s*");
                    }
                    // Whitespace before an optional slot belongs to the slot's
                    // group, so an absent value leaves nothing to backtrack into.
                    let l = if optional_at(i + 1) { l.trim_end() } else { l.as_str() };
                    body.push_str(&literal_re(l));
                }
                Seg::Slot(s) => {
                    group += 1;
                    groups[*s] = Some(group);
                    if slots[*s].optional {
                        body.push_str(&format!(r#"(?:\s*({QUOTED}|{BARE}))??"#));
                    } else {
                        body.push_str(&format!(r#"({QUOTED}|{BARE})"#));
                    }
                }
                Seg::List(s) => {
                    group += 1;
                    groups[*s] = Some(group);
                    let n = nested.as_ref().expect("checked above");
                    body.push_str(&format!(
                        r#"({}(?:{QUOTED}|[^"])*?{})"#,
                        literal_re(&n.open),
                        literal_re(&n.close)
                    ));
                }
            }
        }
        for _ in 0..open_groups {
            body.push_str(")?");
        }
        let sep_re = separator_re(separator);
        let item_re = Regex::new(&format!(r"{body}(?:{sep_re}|\s*\z)"))
            .map_err(|e| Error::config(format!("template {template:?}: {e}")))?;

        Ok(ItemTemplate {
            segs,
            slots,
            omit_from,
            item_re,
            groups,
            separator: separator.to_string(),
            sep_re,
            nested,
        })
    }

    /// Literal tokens whose presence inside a value forces quoting.
    fn trigger_sources(&self, out: &mut Vec<String>) {
        for seg in &self.segs {
            if let Seg::Lit(l) = seg {
                out.extend(trigger_re(l));
            }
        }
        out.extend(trigger_re(&self.separator));
        if let Some(n) = &self.nested {
            out.extend(trigger_re(&n.open));
            out.extend(trigger_re(&n.close));
            n.inner.trigger_sources(out);
        }
    }

    fn literal_chars(&self) -> Vec<char> {
        let mut out: Vec<char> = Vec::new();
        let mut push = |s: &str| {
            out.extend(s.chars().filter(|c| !c.is_whitespace() && !c.is_alphanumeric()))
        };
        for seg in &self.segs {
            if let Seg::Lit(l) = seg {
                push(l);
            }
        }
        push(&self.separator);
        if let Some(n) = &self.nested {
            push(&n.open);
            push(&n.close);
            out.extend(n.inner.literal_chars());
        }
        out
    }
}

/// Full compiled grammar for a template-family [`FormatSpec`].
#[derive(Debug)]
pub(crate) struct TemplateGrammar {
    pub(crate) item: ItemTemplate,
    trigger: Regex,
    edge_chars: Vec<char>,
}

impl TemplateGrammar {
    pub(crate) fn compile(spec: &FormatSpec) -> Result<Self> {
        let item = ItemTemplate::compile(
            &spec.answer_template,
            spec.task,
            spec.task.slots(),
            spec.family,
            &spec.item_separator,
            spec.list.as_ref(),
        )?;
        let mut sources = vec![r#"""#.to_string(), r"\\".to_string(), r"[\r\n]".to_string()];
        item.trigger_sources(&mut sources);
        sources.extend(trigger_re(&spec.answer_prefix));
        let trigger = Regex::new(&sources.join("|"))
            .map_err(|e| Error::config(format!("format {}: {e}", spec.name)))?;
        let mut edge_chars = item.literal_chars();
        edge_chars.sort_unstable();
        edge_chars.dedup();
        Ok(TemplateGrammar {
            item,
            trigger,
            edge_chars,
        })
    }

    fn needs_quotes(&self, value: &str) -> bool {
        value.is_empty()
            || value.trim() != value
            || self.trigger.is_match(value)
            || value.chars().next().is_some_and(|c| self.edge_chars.contains(&c))
            || value.chars().last().is_some_and(|c| self.edge_chars.contains(&c))
    }

    fn render_value(&self, value: &str) -> String {
        if self.needs_quotes(value) {
            let mut out = String::with_capacity(value.len() + 2);
            out.push('"');
            for c in value.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        } else {
            value.to_string()
        }
    }

    fn render_item_with(&self, tpl: &ItemTemplate, item: &Item) -> Result<String> {
        // Last optional slot (in the omittable tail) that carries a value.
        let keep_until = tpl.omit_from.map(|from| {
            let mut last = from;
            for (i, seg) in tpl.segs.iter().enumerate().skip(from) {
                if let Seg::Slot(s) = seg {
                    if item[*s].as_text().is_some() {
                        last = i + 1;
                    }
                }
            }
            last
        });
        let mut out = String::new();
        for (i, seg) in tpl.segs.iter().enumerate() {
            if let (Some(from), Some(until)) = (tpl.omit_from, keep_until) {
                let is_closing = i + 1 == tpl.segs.len() && matches!(seg, Seg::Lit(_));
                if i >= from && i >= until && !is_closing {
                    continue;
                }
            }
            match seg {
                Seg::Lit(l) => out.push_str(l),
                Seg::Slot(s) => match &item[*s] {
                    SlotValue::Text(Some(v)) => {
                        if v.is_empty() {
                            return Err(Error::Serialize {
                                item: format!("{item:?}"),
                                message: format!("empty value in slot {}", tpl.slots[*s].name),
                            });
                        }
                        out.push_str(&self.render_value(v));
                    }
                    SlotValue::Text(None) if tpl.slots[*s].optional => {}
                    _ => {
                        return Err(Error::Serialize {
                            item: format!("{item:?}"),
                            message: format!("missing slot {}", tpl.slots[*s].name),
                        })
                    }
                },
                Seg::List(s) => {
                    let nested = tpl.nested.as_ref().expect("compiled with list grammar");
                    let SlotValue::List(pairs) = &item[*s] else {
                        return Err(Error::Serialize {
                            item: format!("{item:?}"),
                            message: "list slot holds text".into(),
                        });
                    };
                    out.push_str(&nested.open);
                    let rendered = pairs
                        .iter()
                        .map(|p| {
                            let sub: Item = p.iter().map(|v| SlotValue::text(v.clone())).collect();
                            self.render_item_with(&nested.inner, &sub)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    out.push_str(&rendered.join(&nested.inner.separator));
                    out.push_str(&nested.close);
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn render_items(&self, items: &[Item], spec: &FormatSpec) -> Result<String> {
        let rendered = items
            .iter()
            .map(|i| self.render_item_with(&self.item, i))
            .collect::<Result<Vec<_>>>()?;
        let mut out = spec.answer_prefix.clone();
        out.push_str(&rendered.join(&spec.item_separator));
        if spec.trailing_separator {
            out.push_str(spec.item_separator.trim_end());
        }
        Ok(out)
    }

    /// Parses a run of items. Returns the items plus, for each malformed
    /// stretch, its byte offset. With `strict`, the first malformed stretch
    /// is an error.
    pub(crate) fn parse_items(
        &self,
        body: &str,
        strict: bool,
    ) -> Result<(Vec<Item>, Vec<(usize, String)>)> {
        parse_with(&self.item, body, strict)
    }
}

fn unquote(raw: &str) -> String {
    let inner = &raw[1..raw.len() - 1];
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn value_of(raw: &str) -> String {
    if raw.len() >= 2 && raw.starts_with('"') && raw.ends_with('"') {
        unquote(raw)
    } else {
        raw.trim().to_string()
    }
}

fn parse_with(
    tpl: &ItemTemplate,
    body: &str,
    strict: bool,
) -> Result<(Vec<Item>, Vec<(usize, String)>)> {
    let mut items = Vec::new();
    let mut problems = Vec::new();
    let sep_only = Regex::new(&format!(r"\A(?:{})", tpl.sep_re)).expect("separator regex");
    let mut pos = skip_ws(body, 0);
    while pos < body.len() {
        let found = tpl.item_re.captures_at(body, pos);
        let anchored = found.as_ref().filter(|c| c.get(0).map(|m| m.start()) == Some(pos));
        let caps = match anchored {
            Some(c) => c,
            None => {
                // stray separator between items
                if let Some(m) = sep_only.find(&body[pos..]) {
                    if m.end() > 0 && !strict {
                        pos = skip_ws(body, pos + m.end());
                        continue;
                    }
                }
                let msg = format!("unrecognized text {:?}", snippet(&body[pos..]));
                if strict {
                    return Err(Error::Parse {
                        offset: pos,
                        message: msg,
                    });
                }
                problems.push((pos, msg));
                match found {
                    Some(c) => {
                        pos = c.get(0).expect("match").start();
                        continue;
                    }
                    None => break,
                }
            }
        };
        let whole = caps.get(0).expect("match");
        // Items with no opening literal end only at the separator, so an
        // unquoted value that contains it has swallowed the next item.
        let sep = tpl.separator.trim();
        if !sep.is_empty() && matches!(tpl.segs.first(), Some(Seg::Slot(_))) {
            let bare = tpl.groups.iter().zip(tpl.slots).filter(|(_, d)| !d.list);
            let spill = bare.filter_map(|(g, _)| g.and_then(|g| caps.get(g))).find_map(|m| {
                (!m.as_str().starts_with('"'))
                    .then(|| m.as_str().find(sep).map(|k| m.start() + k + sep.len()))
                    .flatten()
            });
            if let Some(resume) = spill {
                let msg = format!("unrecognized text {:?}", snippet(&body[pos..resume]));
                if strict {
                    return Err(Error::Parse { offset: pos, message: msg });
                }
                problems.push((pos, msg));
                pos = skip_ws(body, resume);
                continue;
            }
        }
        let mut item: Item = Vec::with_capacity(tpl.slots.len());
        let mut bad = None;
        for (idx, def) in tpl.slots.iter().enumerate() {
            let raw = tpl.groups[idx].and_then(|g| caps.get(g)).map(|m| m.as_str());
            if def.list {
                let nested = tpl.nested.as_ref().expect("compiled with list grammar");
                let raw = raw.unwrap_or_default().trim();
                let inner = raw
                    .strip_prefix(nested.open.trim())
                    .and_then(|r| r.strip_suffix(nested.close.trim()))
                    .unwrap_or(raw);
                match parse_with(&nested.inner, inner, strict) {
                    Ok((sub, sub_problems)) => {
                        problems.extend(sub_problems.into_iter().map(|(o, m)| (pos + o, m)));
                        item.push(SlotValue::List(
                            sub.into_iter()
                                .map(|s| {
                                    s.into_iter()
                                        .map(|v| v.as_text().unwrap_or_default().to_string())
                                        .collect()
                                })
                                .collect(),
                        ));
                    }
                    Err(e) => return Err(e),
                }
                continue;
            }
            let value = raw.map(value_of).filter(|v| !v.is_empty() || raw.is_some_and(|r| r.starts_with('"')));
            if value.is_none() && !def.optional {
                bad = Some(format!("missing value for slot {}", def.name));
            }
            item.push(SlotValue::Text(value));
        }
        match bad {
            Some(msg) if strict => {
                return Err(Error::Parse {
                    offset: pos,
                    message: msg,
                })
            }
            Some(msg) => problems.push((pos, msg)),
            None => items.push(item),
        }
        if whole.end() == pos {
            break;
        }
        pos = skip_ws(body, whole.end());
    }
    Ok((items, problems))
}

fn skip_ws(s: &str, mut pos: usize) -> usize {
    while let Some(c) = s[pos..].chars().next() {
        if c.is_whitespace() {
            pos += c.len_utf8();
        } else {
            break;
        }
    }
    pos
}

fn snippet(s: &str) -> String {
    s.chars().take(40).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_whitespace_flex() {
        assert_eq!(literal_re("; "), r";\s*");
        assert_eq!(literal_re(" is a "), r"\s+is\s+a\s+");
        assert_eq!(literal_re("[Answer]: "), r"\[Answer\]:\s*");
    }

    #[test]
    fn quote_round_trip() {
        let raw = "\"a \\\"b\\\" \\\\ c\\nd\"";
        assert_eq!(unquote(raw), "a \"b\" \\ c\nd");
    }
}
