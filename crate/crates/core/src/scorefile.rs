//! Score file formats.
//!
//! * Plain: one score per line. Blank lines and `#` comments are skipped.
//! * Labeled: CSV `score,label` with `label` in `{0, 1}` (1 = anomalous). An
//!   optional `score,label` header is accepted on the first data line.
//!
//! Non-finite values are rejected with their 1-based line number.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::ScoreSet;
use crate::scalar::Scalar;

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_score<T: Scalar>(line: usize, field: &str) -> Result<T> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite score {field:?}")));
    }
    Ok(T::lit(v))
}

pub fn parse_scores<T: Scalar>(text: &str) -> Result<Vec<T>> {
    data_lines(text).map(|(n, l)| parse_score(n, l)).collect()
}

pub fn parse_labeled<T: Scalar>(text: &str) -> Result<ScoreSet<T>> {
    let mut pairs = Vec::new();
    for (idx, (n, line)) in data_lines(text).enumerate() {
        let mut fields = line.split(',');
        let (score, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(l), None) => (s.trim(), l.trim()),
            _ => return Err(Error::parse(n, "expected `score,label`")),
        };
        if idx == 0 && score == "score" && label == "label" {
            continue;
        }
        let is_anomaly = match label {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(n, format!("label must be 0 or 1, got {other:?}"))),
        };
        pairs.push((parse_score(n, score)?, is_anomaly));
    }
    ScoreSet::from_labeled(pairs)
}

pub fn read_scores<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    parse_scores(&std::fs::read_to_string(path)?).map_err(|e| e.with_source(path))
}

pub fn read_labeled<T: Scalar>(path: impl AsRef<Path>) -> Result<ScoreSet<T>> {
    let path = path.as_ref();
    parse_labeled(&std::fs::read_to_string(path)?).map_err(|e| e.with_source(path))
}

pub fn format_scores<T: Scalar>(scores: &[T]) -> String {
    let mut s = String::with_capacity(scores.len() * 20);
    for v in scores {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn format_labeled<T: Scalar>(scores: &ScoreSet<T>) -> String {
    let mut s = String::from("score,label\n");
    for v in &scores.normal {
        let _ = writeln!(s, "{v},0");
    }
    for v in &scores.anomaly {
        let _ = writeln!(s, "{v},1");
    }
    s
}
