//! Activation dumps: a JSON manifest next to a raw little-endian f32 file.
//!
//! ```json
//! {
//!   "format": "gardenpath-trace/1",
//!   "config": { "n_layer": 12, "n_head": 12, "d_model": 768, ... },
//!   "ids": [2215, 262, ...],
//!   "layers": ["embed", "block.0", ..., "ln_f"],
//!   "has_logits": true,
//!   "data": "npz01.garden.bin"
//! }
//! ```
//!
//! The data file holds one `[positions, d_model]` block per listed layer, in
//! manifest order, followed by a `[positions, vocab_size]` logits block when
//! `has_logits` is true. `data` is resolved relative to the manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForwardTrace, ModelConfig};
use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

pub const TRACE_FORMAT: &str = "gardenpath-trace/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: serde_json::Value,
    ids: Vec<TokenId>,
    layers: Vec<String>,
    #[serde(default)]
    has_logits: bool,
    data: String,
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`, returning the manifest path.
pub fn write_trace_dump(trace: &ForwardTrace, dir: impl AsRef<Path>, stem: &str) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_name = format!("{stem}.bin");
    let manifest = Manifest {
        format: TRACE_FORMAT.into(),
        config: serde_json::to_value(trace.config)?,
        ids: trace.ids.clone(),
        layers: trace.layer_names.clone(),
        has_logits: trace.logits.is_some(),
        data: data_name.clone(),
    };
    let mut bytes = Vec::new();
    for block in trace.hidden.iter().chain(trace.logits.iter()) {
        bytes.extend(block.iter().flat_map(|v| v.to_le_bytes()));
    }
    let data_path = dir.join(&data_name);
    std::fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let manifest_path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

pub fn load_trace_dump(path: impl AsRef<Path>) -> Result<ForwardTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != TRACE_FORMAT {
        return Err(Error::TraceDump(format!(
            "{}: unsupported format `{}`",
            path.display(),
            manifest.format
        )));
    }
    let config = ModelConfig::from_json_value(&manifest.config)?;
    let n = manifest.ids.len();
    if n == 0 {
        return Err(Error::TraceDump(format!("{}: no token ids", path.display())));
    }
    if n > config.n_ctx {
        return Err(Error::TraceDump(format!(
            "{}: {n} positions exceed n_ctx {}",
            path.display(),
            config.n_ctx
        )));
    }
    if let Some(id) = manifest.ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(Error::TraceDump(format!(
            "{}: token id {id} outside vocab_size",
            path.display()
        )));
    }
    let data_path = path.parent().unwrap_or(Path::new(".")).join(&manifest.data);
    let bytes = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let hidden_len = n * config.d_model;
    let logits_len = if manifest.has_logits { n * config.vocab_size } else { 0 };
    let expected = 4 * (manifest.layers.len() * hidden_len + logits_len);
    if bytes.len() != expected {
        return Err(Error::TraceDump(format!(
            "{}: shape mismatch: {} layers × {n} positions × d_model {}{} needs {expected} bytes, found {}",
            data_path.display(),
            manifest.layers.len(),
            config.d_model,
            if manifest.has_logits {
                format!(" + logits × vocab {}", config.vocab_size)
            } else {
                String::new()
            },
            bytes.len()
        )));
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let hidden: Vec<Vec<f32>> = manifest
        .layers
        .iter()
        .map(|_| floats.by_ref().take(hidden_len).collect())
        .collect();
    let logits = manifest.has_logits.then(|| floats.collect::<Vec<f32>>());
    Ok(ForwardTrace {
        config,
        ids: manifest.ids,
        layer_names: manifest.layers,
        hidden,
        logits,
    })
}
