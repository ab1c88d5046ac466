//! JSON-lines reading and atomic writing.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Serializes `rows` one per line. Output ends with a newline unless empty.
pub fn to_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, to_string(rows)?.as_bytes())
}

/// Reads every non-blank line; the first malformed line is an error.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let (rows, errors) = read_lenient(path)?;
    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

/// Reads every non-blank line, collecting per-line errors instead of
/// stopping.
pub fn read_lenient<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Vec<Error>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => rows.push(r),
            Err(e) => errors.push(Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                field: "record".into(),
                message: e.to_string(),
            }),
        }
    }
    Ok((rows, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.jsonl");
        write(&p, &[1, 2, 3]).unwrap();
        assert_eq!(read::<i32>(&p).unwrap(), vec![1, 2, 3]);
        fs::write(&p, "1\n\nnope\n4\n").unwrap();
        let (rows, errs) = read_lenient::<i32>(&p).unwrap();
        assert_eq!(rows, vec![1, 4]);
        assert!(matches!(errs[0], Error::Record { line: 3, .. }));
        assert!(read::<i32>(&p).is_err());
    }
}
