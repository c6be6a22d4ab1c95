use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    /// Maximum number of positions.
    pub n_ctx: usize,
    pub layernorm_epsilon: f64,
}

impl ModelConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layer", self.n_layer),
            ("n_head", self.n_head),
            ("d_model", self.d_model),
            ("vocab_size", self.vocab_size),
            ("n_ctx", self.n_ctx),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Model(format!("config field `{name}` must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_head) {
            return Err(Error::Model(format!(
                "d_model {} not divisible by n_head {}",
                self.d_model, self.n_head
            )));
        }
        if !(self.layernorm_epsilon.is_finite() && self.layernorm_epsilon > 0.0) {
            return Err(Error::Model("layernorm_epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_head
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.d_model
    }

    /// Reads either our own field names or the Hugging Face GPT-2 names
    /// (`n_embd`, `n_positions`, `layer_norm_epsilon`).
    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Model("model config must be a JSON object".into()))?;
        let count = |keys: &[&str]| -> Result<usize> {
            keys.iter()
                .find_map(|k| obj.get(*k))
                .and_then(|v| v.as_u64().or_else(|| v.as_str().and_then(|s| s.parse().ok())))
                .map(|v| v as usize)
                .ok_or_else(|| Error::Model(format!("model config lacks `{}`", keys[0])))
        };
        let epsilon = ["layernorm_epsilon", "layer_norm_epsilon"]
            .iter()
            .find_map(|k| obj.get(*k))
            .and_then(|v| v.as_f64().or_else(|| v.as_str().and_then(|s| s.parse().ok())))
            .unwrap_or(Self::DEFAULT_EPSILON);
        let config = ModelConfig {
            n_layer: count(&["n_layer", "num_hidden_layers"])?,
            n_head: count(&["n_head", "num_attention_heads"])?,
            d_model: count(&["d_model", "n_embd", "hidden_size"])?,
            vocab_size: count(&["vocab_size"])?,
            n_ctx: count(&["n_ctx", "n_positions", "max_position_embeddings"])?,
            layernorm_epsilon: epsilon,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        Self::from_json_value(&value)
    }

    /// String map stored in archive metadata.
    pub fn to_metadata(&self) -> Vec<(String, String)> {
        vec![
            ("n_layer".into(), self.n_layer.to_string()),
            ("n_head".into(), self.n_head.to_string()),
            ("d_model".into(), self.d_model.to_string()),
            ("vocab_size".into(), self.vocab_size.to_string()),
            ("n_ctx".into(), self.n_ctx.to_string()),
            ("layernorm_epsilon".into(), format!("{:e}", self.layernorm_epsilon)),
        ]
    }
}
