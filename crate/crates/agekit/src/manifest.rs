//! Corpus manifests in CSV or JSON-lines form.
//!
//! Required keys are `utt_id`, `clean_path` and `degraded_path`; `wer` is
//! optional and every other key is kept as a tag. Relative paths resolve
//! against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Column names that cannot be used as tags because score files use them.
pub const RESERVED: [&str; 8] = ["utt_id", "clean_path", "degraded_path", "wer", "n_frames", "age", "entropy", "stoi"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub clean_path: PathBuf,
    pub degraded_path: PathBuf,
    pub wer_percent: Option<f64>,
    pub tags: BTreeMap<String, String>,
}

struct RawRow {
    line: u64,
    fields: BTreeMap<String, String>,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jsonl" | "json" | "ndjson"))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = if is_jsonl(path) { parse_jsonl(path, &text)? } else { parse_csv(path, &text)? };
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(rows.len());
    for row in rows {
        let entry = build_entry(path, base, row)?;
        if !seen.insert(entry.utt_id.clone()) {
            return Err(Error::DuplicateId(entry.utt_id));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn parse_csv(path: &Path, text: &str) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::format(path, e))?.clone();
    for column in ["utt_id", "clean_path", "degraded_path"] {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::MissingColumn { path: path.into(), column: column.into() });
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Manifest {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fields = headers.iter().zip(record.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect();
        rows.push(RawRow { line, fields });
    }
    Ok(rows)
}

fn parse_jsonl(path: &Path, text: &str) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Manifest { path: path.into(), line, message };
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let object = value.as_object().ok_or_else(|| bad("expected a JSON object".into()))?;
        let mut fields = BTreeMap::new();
        for (key, v) in object {
            let text = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Null => String::new(),
                _ => return Err(bad(format!("field {key:?} must be a scalar"))),
            };
            fields.insert(key.clone(), text);
        }
        for column in ["utt_id", "clean_path", "degraded_path"] {
            if !fields.contains_key(column) {
                return Err(bad(format!("missing required key {column:?}")));
            }
        }
        rows.push(RawRow { line, fields });
    }
    Ok(rows)
}

fn build_entry(path: &Path, base: &Path, mut row: RawRow) -> Result<ManifestEntry> {
    let line = row.line;
    let bad = |message: String| Error::Manifest { path: path.into(), line, message };
    let mut take = |key: &str| row.fields.remove(key).unwrap_or_default();
    let utt_id = take("utt_id");
    let clean = take("clean_path");
    let degraded = take("degraded_path");
    let wer = take("wer");
    if utt_id.is_empty() {
        return Err(bad("empty utt_id".into()));
    }
    if clean.is_empty() || degraded.is_empty() {
        return Err(bad(format!("{utt_id}: empty audio path")));
    }
    let wer_percent = match wer.trim() {
        "" => None,
        w => {
            let v: f64 = w.parse().map_err(|_| bad(format!("{utt_id}: wer {w:?} is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("{utt_id}: wer {w} must be a finite non-negative percentage")));
            }
            Some(v)
        }
    };
    if let Some(key) = row.fields.keys().find(|k| RESERVED.contains(&k.as_str())) {
        return Err(bad(format!("{key:?} cannot be used as a tag")));
    }
    Ok(ManifestEntry {
        utt_id,
        clean_path: base.join(clean),
        degraded_path: base.join(degraded),
        wer_percent,
        // an empty cell means the tag is absent
        tags: row.fields.into_iter().filter(|(_, v)| !v.is_empty()).collect(),
    })
}

/// Writes a CSV manifest with paths made relative to the manifest directory
/// where possible. Tag columns are the sorted union of all tag keys.
pub fn save_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let tag_keys: std::collections::BTreeSet<&String> = entries.iter().flat_map(|e| e.tags.keys()).collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["utt_id", "clean_path", "degraded_path", "wer"];
    header.extend(tag_keys.iter().map(|k| k.as_str()));
    writer.write_record(&header).map_err(|e| Error::format(path, e))?;
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
    for e in entries {
        let mut record = vec![
            e.utt_id.clone(),
            rel(&e.clean_path),
            rel(&e.degraded_path),
            e.wer_percent.map(|w| w.to_string()).unwrap_or_default(),
        ];
        record.extend(tag_keys.iter().map(|k| e.tags.get(*k).cloned().unwrap_or_default()));
        writer.write_record(&record).map_err(|e| Error::format(path, e))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::format(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
