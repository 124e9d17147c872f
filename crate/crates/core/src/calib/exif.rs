//! Raw EXIF tag records as dumped by an external tool (`exiftool -j`).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Tag name to value, exactly as dumped. Keys may carry a group prefix
/// (`EXIF:FNumber`); lookups match either form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExifRecord {
    pub tags: BTreeMap<String, Value>,
}

const CREATE_DATE_FORMAT: &str = "%Y:%m:%d %H:%M:%S";

impl ExifRecord {
    pub fn from_pairs<K: Into<String>>(pairs: impl IntoIterator<Item = (K, Value)>) -> Self {
        ExifRecord {
            tags: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.tags.get(key).or_else(|| {
            self.tags
                .iter()
                .find(|(k, _)| k.rsplit(':').next() == Some(key))
                .map(|(_, v)| v)
        })
    }

    pub fn text(&self, key: &str) -> Option<String> {
        match self.get(key)? {
            Value::String(s) => Some(s.trim().to_string()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }

    /// Numeric tag value. Accepts JSON numbers and strings such as `"f/2.8"`,
    /// `"50.0 mm"`, `"1.5 m"`, `"1/200"` and `"inf"`. Lengths with a unit
    /// suffix are returned in that unit; use [`ExifRecord::distance_m`] for
    /// distances.
    pub fn number(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => parse_lenient(s).map(|(v, _)| v),
            _ => None,
        }
    }

    /// Distance tag converted to meters. Bare numbers are taken as meters.
    pub fn distance_m(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => {
                let (v, unit) = parse_lenient(s)?;
                let scale = match unit.as_str() {
                    "" | "m" => 1.0,
                    "cm" => 0.01,
                    "mm" => 0.001,
                    _ => return None,
                };
                Some(v * scale)
            }
            _ => None,
        }
    }

    pub fn create_date(&self) -> Option<NaiveDateTime> {
        let s = self
            .text("CreateDate")
            .or_else(|| self.text("DateTimeOriginal"))?;
        let head: String = s.chars().take(19).collect();
        NaiveDateTime::parse_from_str(&head, CREATE_DATE_FORMAT).ok()
    }

    /// Focus distance: `ApproximateFocusDistance`, else the mean of the upper
    /// and lower focus limits.
    pub fn focus_distance_m(&self) -> Option<f64> {
        if let Some(d) = self.distance_m("ApproximateFocusDistance") {
            return Some(d);
        }
        let upper = self.distance_m("FocusDistanceUpper")?;
        let lower = self.distance_m("FocusDistanceLower")?;
        Some(0.5 * (upper + lower))
    }

    pub fn image_width(&self) -> Option<u32> {
        ["ImageWidth", "ExifImageWidth"]
            .iter()
            .find_map(|k| self.number(k))
            .filter(|w| *w >= 1.0)
            .map(|w| w as u32)
    }

    pub fn image_height(&self) -> Option<u32> {
        ["ImageHeight", "ExifImageHeight"]
            .iter()
            .find_map(|k| self.number(k))
            .filter(|h| *h >= 1.0)
            .map(|h| h as u32)
    }

    /// Millimeters per focal-plane resolution unit. Defaults to inches.
    pub fn focal_plane_unit_mm(&self) -> Option<f64> {
        let Some(v) = self.get("FocalPlaneResolutionUnit") else {
            return Some(25.4);
        };
        let code = match v {
            Value::Number(n) => n.as_f64().map(|c| c as i64),
            Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inch" | "inches" | "none" => Some(2),
                "cm" => Some(3),
                "mm" => Some(4),
                "um" | "µm" => Some(5),
                other => other.parse::<i64>().ok(),
            },
            _ => None,
        }?;
        match code {
            1 | 2 => Some(25.4),
            3 => Some(10.0),
            4 => Some(1.0),
            5 => Some(0.001),
            _ => None,
        }
    }

    pub fn source_file(&self) -> Option<String> {
        self.text("SourceFile")
    }
}

/// Splits a tag string into a number and a lowercase unit suffix.
fn parse_lenient(raw: &str) -> Option<(f64, String)> {
    let s = raw.trim().to_ascii_lowercase();
    let s = s.strip_prefix("f/").unwrap_or(&s).trim();
    if matches!(s, "inf" | "infinity" | "∞") {
        return Some((f64::INFINITY, String::new()));
    }
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | '/')))
        .map_or(s.len(), |(i, _)| i);
    let (num, unit) = s.split_at(end);
    let value = match num.split_once('/') {
        Some((a, b)) => {
            let (a, b) = (a.parse::<f64>().ok()?, b.parse::<f64>().ok()?);
            if b == 0.0 {
                return None;
            }
            a / b
        }
        None => num.parse::<f64>().ok()?,
    };
    Some((value, unit.trim().to_string()))
}

/// Reads an `exiftool -j` dump: a JSON array of records (or one record).
pub fn read_exif_dump(path: &Path) -> Result<Vec<ExifRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::decode(path, e.to_string()))?;
    let items = match value {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => return Err(Error::decode(path, "expected a JSON array of tag objects")),
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value(v).map_err(|e| Error::decode(path, format!("record {i}: {e}")))
        })
        .collect()
}
