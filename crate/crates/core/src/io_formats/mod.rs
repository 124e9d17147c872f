//! File formats: 8-bit PNG, PFM float maps, JSON, JSONL and stack directories.

pub mod json;
pub mod pfm;
pub mod png;
pub mod stack;

pub use json::{
    decode_jsonl, encode_jsonl, read_json, read_jsonl, to_canonical_string, write_json, write_jsonl,
};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use png::{decode_image8, encode_png8, gradient_ramp, read_image8, write_jpeg, write_png8};
pub use stack::{read_stack_dir, write_stack_dir, StackManifest, STACK_SCHEMA};

use std::path::Path;

use crate::error::{Error, Result};

/// Creates `dir` and its parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
