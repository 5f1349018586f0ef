//! JSONL dataset ingestion and serialization.
//!
//! One record per line: `{"type":"doc","id":…,"text":…}` or
//! `{"type":"query","id":…,"text":…,"positives":[…],"split":…}`. Unknown
//! fields are ignored with a warning; malformed lines fail with their line
//! number; dangling positives fail dataset validation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{DocRec, QueryRec, RetrievalDataset, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Doc { id: String, text: String },
    Query { id: String, text: String, positives: Vec<String>, split: Split },
}

const KNOWN_FIELDS: [&str; 5] = ["type", "id", "text", "positives", "split"];

fn parse_line(line_no: usize, line: &str) -> Result<Record> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !KNOWN_FIELDS.contains(&key.as_str()) {
                log::warn!("line {line_no}: ignoring unknown field '{key}'");
            }
        }
    }
    // Re-parse from the known fields only so extras stay non-fatal.
    let mut trimmed = serde_json::Map::new();
    if let Some(obj) = value.as_object() {
        for key in KNOWN_FIELDS {
            if let Some(v) = obj.get(key) {
                trimmed.insert(key.to_string(), v.clone());
            }
        }
    }
    serde_json::from_value(serde_json::Value::Object(trimmed))
        .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })
}

/// Load a dataset from a JSONL file and validate it.
pub fn load_jsonl(path: &Path) -> Result<RetrievalDataset> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut dataset = RetrievalDataset::default();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(idx + 1, line)? {
            Record::Doc { id, text } => dataset.pool.push(DocRec { id, text }),
            Record::Query { id, text, positives, split } => {
                dataset
                    .positives
                    .insert(id.clone(), positives.into_iter().collect::<BTreeSet<_>>());
                dataset.queries.push(QueryRec { id, text, split });
            }
        }
    }
    dataset.validate()?;
    Ok(dataset)
}

/// Serialize a dataset to JSONL text: documents first, then queries, in
/// dataset order. Stable field order makes the output byte-deterministic.
pub fn to_jsonl_string(dataset: &RetrievalDataset) -> Result<String> {
    let mut out = String::new();
    for d in &dataset.pool {
        let rec = Record::Doc { id: d.id.clone(), text: d.text.clone() };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    for q in &dataset.queries {
        let positives = dataset
            .positives_of(&q.id)
            .map(|p| p.iter().cloned().collect())
            .unwrap_or_default();
        let rec = Record::Query {
            id: q.id.clone(),
            text: q.text.clone(),
            positives,
            split: q.split,
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_jsonl(dataset: &RetrievalDataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_jsonl_string(dataset)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synth_task, SynthRule};

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn empty_file_is_a_validation_error() {
        let (_dir, path) = write_tmp("");
        let err = load_jsonl(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn minimal_dataset_loads() {
        let (_dir, path) = write_tmp(concat!(
            r#"{"type":"doc","id":"d0","text":"STRATEGY"}"#,
            "\n",
            r#"{"type":"query","id":"q0","text":"hi","positives":["d0"],"split":"train"}"#,
            "\n",
        ));
        let ds = load_jsonl(&path).unwrap();
        assert_eq!(ds.pool.len(), 1);
        assert_eq!(ds.queries.len(), 1);
        assert!(ds.is_positive("q0", "d0"));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let (_dir, path) = write_tmp(concat!(
            r#"{"type":"doc","id":"d0","text":"ok"}"#,
            "\n",
            "not json at all\n",
        ));
        let err = load_jsonl(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn dangling_positive_is_rejected() {
        let (_dir, path) = write_tmp(concat!(
            r#"{"type":"doc","id":"d0","text":"ok"}"#,
            "\n",
            r#"{"type":"query","id":"q0","text":"hi","positives":["ghost"],"split":"test"}"#,
            "\n",
        ));
        assert!(load_jsonl(&path).is_err());
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let (_dir, path) = write_tmp(concat!(
            r#"{"type":"doc","id":"d0","text":"ok","embedding":[1,2]}"#,
            "\n",
            r#"{"type":"query","id":"q0","text":"hi","positives":["d0"],"split":"dev","note":"x"}"#,
            "\n",
        ));
        let ds = load_jsonl(&path).unwrap();
        assert_eq!(ds.queries[0].split, Split::Dev);
    }

    #[test]
    fn round_trip_preserves_structure() {
        let ds = synth_task(&SynthRule::default(), 12, 4, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        save_jsonl(&ds, &path).unwrap();
        let loaded = load_jsonl(&path).unwrap();
        assert_eq!(ds, loaded);
        // Serialization itself is byte-deterministic.
        assert_eq!(to_jsonl_string(&ds).unwrap(), to_jsonl_string(&loaded).unwrap());
    }
}
