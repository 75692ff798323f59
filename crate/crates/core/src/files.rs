//! Text and binary formats for scores, selections and training lists.
//!
//! Text outputs may start with `# key=value` lines recording the parameters
//! that produced them; readers skip any line starting with `#` except where
//! noted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scores::ScoreVector;
use crate::select::{Selection, TrainingList};

pub const SCR1_MAGIC: &[u8; 4] = b"SCR1";

fn write_text(path: &Path, body: String) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn header(params: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    for (k, v) in params {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

fn parse_header_line(line: &str) -> Option<(String, String)> {
    let rest = line.strip_prefix('#')?.trim();
    let (k, v) = rest.split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

/// Full parameter record for a score vector, including the metric and direction.
fn score_params(scores: &ScoreVector) -> BTreeMap<String, String> {
    let mut p = scores.params.clone();
    p.insert("metric".into(), scores.metric.clone());
    p.insert("higher_is_better".into(), scores.higher_is_better.to_string());
    p
}

pub fn encode_scores_csv(scores: &ScoreVector) -> String {
    let mut s = header(&score_params(scores));
    s.push_str("index,score\n");
    for (i, v) in scores.values.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:?}");
    }
    s
}

pub fn decode_scores_csv(text: &str) -> Result<ScoreVector> {
    let mut params = BTreeMap::new();
    let mut values = Vec::new();
    let mut seen_header = false;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some((k, v)) = parse_header_line(line) {
                params.insert(k, v);
            }
            continue;
        }
        if !seen_header {
            if line != "index,score" {
                return Err(Error::Parse { line: line_no, message: "expected header `index,score`".into() });
            }
            seen_header = true;
            continue;
        }
        let (i, v) = line.split_once(',').ok_or_else(|| Error::Parse { line: line_no, message: "expected `index,score`".into() })?;
        let i: usize = i.trim().parse().map_err(|_| Error::Parse { line: line_no, message: format!("bad index `{i}`") })?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Parse { line: line_no, message: format!("bad score `{v}`") })?;
        if i != values.len() {
            return Err(Error::Parse { line: line_no, message: format!("expected index {}, found {i}", values.len()) });
        }
        if !v.is_finite() {
            return Err(Error::Parse { line: line_no, message: "non-finite score".into() });
        }
        values.push(v);
    }
    if !seen_header {
        return Err(Error::Parse { line: 1, message: "missing header `index,score`".into() });
    }
    Ok(scores_from_record(values, params))
}

fn scores_from_record(values: Vec<f64>, mut params: BTreeMap<String, String>) -> ScoreVector {
    let metric = params.remove("metric").unwrap_or_else(|| "unknown".into());
    let higher_is_better = params.remove("higher_is_better").map_or(true, |v| v != "false");
    ScoreVector { values, metric, params, higher_is_better }
}

pub fn encode_scores_scr1(scores: &ScoreVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * scores.len());
    out.extend_from_slice(SCR1_MAGIC);
    out.extend_from_slice(&(scores.len() as u64).to_le_bytes());
    for v in &scores.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scores_scr1(bytes: &[u8]) -> Result<ScoreVector> {
    if bytes.len() < 4 || &bytes[..4] != SCR1_MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::BadMagic { expected: "SCR1".into(), found });
    }
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile { expected: 12, found: bytes.len() as u64 });
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let expected = n.checked_mul(8).and_then(|p| p.checked_add(12)).ok_or_else(|| Error::TooLarge(format!("score count {n}")))?;
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedFile { expected, found: bytes.len() as u64 });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::TrailingBytes { offset: expected, extra: bytes.len() as u64 - expected });
    }
    let mut values = Vec::with_capacity(n as usize);
    for (i, chunk) in bytes[12..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { row: i, col: 0, offset: 12 + 8 * i as u64 });
        }
        values.push(v);
    }
    Ok(ScoreVector::new("unknown", values))
}

/// Writes SCR1 when the path ends in `.scr1`, CSV otherwise.
pub fn write_scores(scores: &ScoreVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_scr1(path) {
        fs::write(path, encode_scores_scr1(scores)).map_err(|e| Error::io(path, e))
    } else {
        write_text(path, encode_scores_csv(scores))
    }
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreVector> {
    let path = path.as_ref();
    if is_scr1(path) {
        decode_scores_scr1(&fs::read(path).map_err(|e| Error::io(path, e))?)
    } else {
        decode_scores_csv(&read_text(path)?)
    }
}

fn is_scr1(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("scr1"))
}

pub fn encode_selection(sel: &Selection, params: &BTreeMap<String, String>) -> String {
    let mut p = params.clone();
    p.insert("pool_n".into(), sel.pool_n().to_string());
    let mut s = header(&p);
    for i in sel.indices() {
        let _ = writeln!(s, "{i}");
    }
    s
}

fn parse_indices(text: &str) -> Result<(Vec<usize>, BTreeMap<String, String>)> {
    let mut params = BTreeMap::new();
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some((k, v)) = parse_header_line(line) {
                params.insert(k, v);
            }
            continue;
        }
        out.push(line.parse().map_err(|_| Error::Parse { line: ln + 1, message: format!("bad index `{line}`") })?);
    }
    Ok((out, params))
}

fn pool_n_of(params: &BTreeMap<String, String>, fallback: Option<usize>) -> Result<usize> {
    match params.get("pool_n") {
        Some(v) => v.parse().map_err(|_| Error::Parse { line: 1, message: format!("bad pool_n `{v}`") }),
        None => fallback.ok_or_else(|| Error::InvalidParameter("selection file has no `# pool_n=` line".into())),
    }
}

/// `pool_n` comes from the file's header, or from `pool_n` when absent there.
pub fn decode_selection(text: &str, pool_n: Option<usize>) -> Result<Selection> {
    let (indices, params) = parse_indices(text)?;
    let n = pool_n_of(&params, pool_n)?;
    if let Some(expected) = pool_n {
        if expected != n {
            return Err(Error::PoolMismatch { left: expected, right: n });
        }
    }
    Selection::new(n, indices)
}

pub fn write_selection(sel: &Selection, params: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), encode_selection(sel, params))
}

pub fn read_selection(path: impl AsRef<Path>, pool_n: Option<usize>) -> Result<Selection> {
    decode_selection(&read_text(path.as_ref())?, pool_n)
}

pub fn encode_training_list(list: &TrainingList, params: &BTreeMap<String, String>) -> String {
    let mut s = format!("# unique={}\n", list.unique_count());
    let mut p = params.clone();
    p.insert("pool_n".into(), list.pool_n.to_string());
    s.push_str(&header(&p));
    for i in &list.entries {
        let _ = writeln!(s, "{i}");
    }
    s
}

pub fn decode_training_list(text: &str) -> Result<TrainingList> {
    let (entries, params) = parse_indices(text)?;
    let pool_n = pool_n_of(&params, None)?;
    if let Some(&bad) = entries.iter().find(|&&i| i >= pool_n) {
        return Err(Error::IndexOutOfRange { index: bad, len: pool_n });
    }
    Ok(TrainingList { pool_n, entries })
}

pub fn write_training_list(list: &TrainingList, params: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), encode_training_list(list, params))
}
