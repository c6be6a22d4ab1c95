//! Tensor archive: 8-byte little-endian header length, a JSON header mapping
//! tensor names to `{dtype, shape, data_offsets}`, then the raw payload. This is
//! the safetensors layout, so the published GPT-2 `model.safetensors` loads as is.

use std::collections::HashMap;
use std::path::Path;

use half::{bf16, f16};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use super::config::ModelConfig;
use crate::error::{Error, Result};

/// A decoded, f32-promoted tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Parsed archive: tensors keyed by name with any `transformer.` prefix removed.
#[derive(Debug, Clone)]
pub struct TensorArchive {
    tensors: HashMap<String, Tensor>,
    metadata: HashMap<String, String>,
}

fn to_f32(view: &TensorView<'_>, name: &str) -> Result<Vec<f32>> {
    let bytes = view.data();
    let out = match view.dtype() {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|c| bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")) as f32)
            .collect(),
        other => {
            return Err(Error::Tensor {
                name: name.to_string(),
                reason: format!("unsupported dtype {other:?}"),
            })
        }
    };
    Ok(out)
}

impl TensorArchive {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Model(format!("archive header: {e}")))?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Model(format!("archive: {e}")))?;
        let mut tensors = HashMap::new();
        for (name, view) in st.iter() {
            let key = name.strip_prefix("transformer.").unwrap_or(name).to_string();
            let data = to_f32(&view, name)?;
            tensors.insert(
                key,
                Tensor {
                    shape: view.shape().to_vec(),
                    data,
                },
            );
        }
        Ok(TensorArchive {
            tensors,
            metadata: meta.metadata().clone().unwrap_or_default(),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn metadata(&self) -> &HashMap<String, String> {
        &self.metadata
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Removes a tensor, checking its shape.
    pub(crate) fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let t = self.tensors.remove(name).ok_or_else(|| Error::Tensor {
            name: name.to_string(),
            reason: "missing from archive".into(),
        })?;
        if t.shape != shape {
            return Err(Error::Tensor {
                name: name.to_string(),
                reason: format!("expected shape {shape:?}, found {:?}", t.shape),
            });
        }
        Ok(t.data)
    }

    /// Config from archive metadata, falling back to tensor shapes. Without an
    /// `n_head` entry the GPT-2 family's 64-wide heads are assumed.
    pub fn infer_config(&self) -> Result<ModelConfig> {
        let md = &self.metadata;
        if ["n_layer", "n_head", "vocab_size", "n_ctx"]
            .iter()
            .all(|k| md.contains_key(*k))
            && (md.contains_key("d_model") || md.contains_key("n_embd"))
        {
            let value = serde_json::to_value(md)?;
            return ModelConfig::from_json_value(&value);
        }
        let wte = self.get("wte.weight").ok_or_else(|| Error::Tensor {
            name: "wte.weight".into(),
            reason: "missing from archive".into(),
        })?;
        let wpe = self.get("wpe.weight").ok_or_else(|| Error::Tensor {
            name: "wpe.weight".into(),
            reason: "missing from archive".into(),
        })?;
        let (&[vocab_size, d_model], &[n_ctx, _]) = (wte.shape.as_slice(), wpe.shape.as_slice()) else {
            return Err(Error::Model("embedding tensors must be 2-D".into()));
        };
        let n_layer = (0..)
            .take_while(|i| self.tensors.contains_key(&format!("h.{i}.ln_1.weight")))
            .count();
        let n_head = match md.get("n_head") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Model(format!("metadata n_head `{v}` is not an integer")))?,
            None => {
                log::warn!("archive metadata has no n_head; assuming 64-wide heads");
                d_model / 64
            }
        };
        let layernorm_epsilon = md
            .get("layernorm_epsilon")
            .and_then(|v| v.parse().ok())
            .unwrap_or(ModelConfig::DEFAULT_EPSILON);
        let config = ModelConfig {
            n_layer,
            n_head,
            d_model,
            vocab_size,
            n_ctx,
            layernorm_epsilon,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Serializes named f32 tensors (row-major) into archive bytes.
pub fn write_archive(tensors: &[(String, Vec<usize>, Vec<f32>)], metadata: &[(String, String)]) -> Result<Vec<u8>> {
    let raw: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(name, shape, data)| {
            (
                name.clone(),
                shape.clone(),
                data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            )
        })
        .collect();
    let views = raw
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Tensor {
                    name: name.clone(),
                    reason: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let info: HashMap<String, String> = metadata.iter().cloned().collect();
    let bytes = safetensors::serialize(views, Some(info)).map_err(|e| Error::Model(format!("archive write: {e}")))?;
    canonical_header(bytes)
}

/// Rewrites the JSON header with sorted keys so equal inputs give equal bytes.
fn canonical_header(bytes: Vec<u8>) -> Result<Vec<u8>> {
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len])?;
    let mut text = serde_json::to_vec(&header)?;
    while text.len() % 8 != 0 {
        text.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + text.len() + bytes.len() - 8 - header_len);
    out.extend((text.len() as u64).to_le_bytes());
    out.extend(text);
    out.extend(&bytes[8 + header_len..]);
    Ok(out)
}
