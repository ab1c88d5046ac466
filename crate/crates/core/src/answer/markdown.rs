//! Minimal markdown table reader for on-demand IE answers.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Cells joined row-major into one text, used for content scoring.
    pub fn content_text(&self) -> String {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn cells(line: &str) -> Vec<String> {
    let t = line.trim();
    let t = t.strip_prefix('|').unwrap_or(t);
    let t = t.strip_suffix('|').unwrap_or(t);
    t.split('|').map(|c| c.trim().to_string()).collect()
}

fn is_rule(line: &str) -> bool {
    let t = line.trim();
    t.contains('-') && t.chars().all(|c| matches!(c, '|' | '-' | ':' | ' ' | '\t'))
}

/// Reads the first pipe table in `text`: header row, optional rule row, and
/// body rows.
pub fn parse_table(text: &str) -> Option<Table> {
    let lines: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.contains('|'))
        .take_while(|l| l.contains('|'))
        .collect();
    let (head, rest) = lines.split_first()?;
    let headers = cells(head);
    if headers.iter().all(String::is_empty) {
        return None;
    }
    let rows = rest
        .iter()
        .filter(|l| !is_rule(l))
        .map(|l| cells(l))
        .collect();
    Some(Table { headers, rows })
}
