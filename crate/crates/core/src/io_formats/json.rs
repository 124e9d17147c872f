//! JSON documents with lexicographic keys, and JSONL streams.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    // Value objects are BTreeMap-backed, so keys come out sorted.
    let v = serde_json::to_value(value)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_canonical_string(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::decode(path, e.to_string()))
}

/// Serializes rows one compact JSON object per line. Every row must carry a
/// string `schema` field.
pub fn encode_jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let v = serde_json::to_value(row).map_err(|e| Error::Internal(e.to_string()))?;
        match v.get("schema") {
            Some(Value::String(_)) => {}
            _ => {
                return Err(Error::Jsonl {
                    line: i + 1,
                    reason: "row has no string `schema` field".into(),
                })
            }
        }
        out.push_str(&serde_json::to_string(&v).map_err(|e| Error::Internal(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    fs::write(path, encode_jsonl(rows)?).map_err(|e| Error::io(path, e))
}

/// Parses a JSONL stream. Blank lines are skipped. When `schema` is given,
/// every row's `schema` field must equal it.
pub fn decode_jsonl<T: DeserializeOwned>(text: &str, schema: Option<&str>) -> Result<Vec<T>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Jsonl {
            line: line_no,
            reason,
        };
        let v: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        match (v.get("schema"), schema) {
            (Some(Value::String(found)), Some(want)) if found != want => {
                return Err(err(format!("schema `{found}` where `{want}` was expected")));
            }
            (Some(Value::String(_)), _) => {}
            _ => return Err(err("missing `schema` field".into())),
        }
        rows.push(serde_json::from_value(v).map_err(|e| err(e.to_string()))?);
    }
    Ok(rows)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: Option<&str>) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_jsonl(&text, schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted() {
        #[derive(Serialize)]
        struct Doc {
            zeta: u8,
            alpha: u8,
            mid: Value,
        }
        let s = to_canonical_string(&Doc {
            zeta: 1,
            alpha: 2,
            mid: json!({"b": 1, "a": 2}),
        })
        .unwrap();
        assert_eq!(s, "{\n  \"alpha\": 2,\n  \"mid\": {\n    \"a\": 2,\n    \"b\": 1\n  },\n  \"zeta\": 1\n}\n");
    }

    #[test]
    fn empty_stream() {
        let rows: Vec<Value> = vec![];
        assert_eq!(encode_jsonl(&rows).unwrap(), "");
        let back: Vec<Value> = decode_jsonl("", None).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn unknown_fields_survive() {
        let rows = vec![json!({"schema": "s/v1", "extra": {"deep": [1, 2]}, "x": 1.5})];
        let text = encode_jsonl(&rows).unwrap();
        let back: Vec<Value> = decode_jsonl(&text, Some("s/v1")).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn missing_schema_reports_line() {
        let text = "{\"schema\":\"s/v1\"}\n{\"x\":1}\n";
        match decode_jsonl::<Value>(text, None) {
            Err(Error::Jsonl { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match decode_jsonl::<Value>("{\"schema\":\"s/v1\"}\nnot json\n", None) {
            Err(Error::Jsonl { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(encode_jsonl(&[json!({"a": 1})]).is_err());
    }

    #[test]
    fn wrong_schema_is_rejected() {
        assert!(decode_jsonl::<Value>("{\"schema\":\"other\"}", Some("s/v1")).is_err());
    }
}
