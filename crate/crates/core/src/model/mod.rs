//! Minimal GPT-2 style decoder inference.
//!
//! Pre-layernorm residual blocks: `h = wte[id] + wpe[pos]`, then per block
//! `h += attn(ln_1(h))` under a causal mask and `h += mlp(ln_2(h))`, and finally
//! `logits = ln_f(h) · wteᵀ`. Weights are stored as f32; every reduction (dot
//! products, layernorm moments, softmax sums) accumulates in f64 in a fixed
//! order, so a row's result never depends on thread count or sequence length.

mod archive;
mod config;
mod dump;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use archive::{write_archive, Tensor, TensorArchive};
pub use config::ModelConfig;
pub use dump::{load_trace_dump, write_trace_dump, TRACE_FORMAT};

use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

struct Block {
    ln1_gain: Vec<f32>,
    ln1_bias: Vec<f32>,
    /// `[d_model, 3 * d_model]`, columns ordered q | k | v.
    qkv_weight: Vec<f32>,
    qkv_bias: Vec<f32>,
    attn_out_weight: Vec<f32>,
    attn_out_bias: Vec<f32>,
    ln2_gain: Vec<f32>,
    ln2_bias: Vec<f32>,
    mlp_in_weight: Vec<f32>,
    mlp_in_bias: Vec<f32>,
    mlp_out_weight: Vec<f32>,
    mlp_out_bias: Vec<f32>,
}

pub struct Model {
    config: ModelConfig,
    token_embedding: Vec<f32>,
    position_embedding: Vec<f32>,
    blocks: Vec<Block>,
    final_gain: Vec<f32>,
    final_bias: Vec<f32>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Names of the captured residual-stream boundaries, in trace order.
pub fn layer_names(n_layer: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(n_layer + 2);
    names.push("embed".to_string());
    names.extend((0..n_layer).map(|i| format!("block.{i}")));
    names.push("ln_f".to_string());
    names
}

/// Which residual-stream boundary to read hidden states from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HiddenLayer {
    Embedding,
    Block(usize),
    /// Output of the last block, before the final layernorm.
    #[default]
    LastBlock,
    FinalLayerNorm,
}

impl HiddenLayer {
    pub fn name(&self, n_layer: usize) -> String {
        match self {
            HiddenLayer::Embedding => "embed".into(),
            HiddenLayer::Block(i) => format!("block.{i}"),
            HiddenLayer::LastBlock => format!("block.{}", n_layer.saturating_sub(1)),
            HiddenLayer::FinalLayerNorm => "ln_f".into(),
        }
    }
}

impl fmt::Display for HiddenLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HiddenLayer::Embedding => f.write_str("embed"),
            HiddenLayer::Block(i) => write!(f, "block.{i}"),
            HiddenLayer::LastBlock => f.write_str("last"),
            HiddenLayer::FinalLayerNorm => f.write_str("ln_f"),
        }
    }
}

impl FromStr for HiddenLayer {
    type Err = Error;

    /// Accepts `last`, `embed`, `ln_f`, `block.N` or a bare block index `N`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "last" | "final" => return Ok(HiddenLayer::LastBlock),
            "embed" | "embedding" => return Ok(HiddenLayer::Embedding),
            "ln_f" | "final_ln" | "final_layernorm" => return Ok(HiddenLayer::FinalLayerNorm),
            _ => {}
        }
        s.strip_prefix("block.")
            .unwrap_or(s)
            .parse()
            .map(HiddenLayer::Block)
            .map_err(|_| {
                Error::Model(format!(
                    "unknown layer `{s}` (expected last, embed, ln_f, block.N or N)"
                ))
            })
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub config: ModelConfig,
    pub ids: Vec<TokenId>,
    pub layer_names: Vec<String>,
    /// One `[positions, d_model]` row-major block per entry of `layer_names`.
    pub hidden: Vec<Vec<f32>>,
    /// `[positions, vocab_size]`, absent for dumps without an LM head section.
    pub logits: Option<Vec<f32>>,
}

impl ForwardTrace {
    pub fn positions(&self) -> usize {
        self.ids.len()
    }

    pub fn layer_index(&self, layer: HiddenLayer) -> Result<usize> {
        let name = layer.name(self.config.n_layer);
        self.layer_names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Model(format!("trace has no layer `{name}`")))
    }

    /// Hidden state at `position` for the given boundary.
    pub fn hidden_state(&self, layer: usize, position: usize) -> &[f32] {
        let d = self.config.d_model;
        &self.hidden[layer][position * d..(position + 1) * d]
    }

    pub fn logits_at(&self, position: usize) -> Option<&[f32]> {
        let v = self.config.vocab_size;
        self.logits.as_ref().map(|l| &l[position * v..(position + 1) * v])
    }
}

/// Log base for surprisal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "e" | "nats" | "ln" => Ok(LogBase::Nats),
            "2" | "bits" => Ok(LogBase::Bits),
            other => Err(Error::Model(format!("unknown log base `{other}` (expected e or 2)"))),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogBase::Nats => "nats",
            LogBase::Bits => "bits",
        })
    }
}

/// `-log softmax(logits)[target]`, max-shifted for stability.
pub fn negative_log_prob(logits: &[f32], target: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let sum: f64 = logits.iter().map(|&v| (v as f64 - max).exp()).sum();
    max + sum.ln() - logits[target] as f64
}

/// Surprisal of each token given its prefix; position 0 has no prefix and is `None`.
pub fn surprisal_series(trace: &ForwardTrace, base: LogBase) -> Result<Vec<Option<f64>>> {
    if trace.logits.is_none() {
        return Err(Error::Model("trace has no logits; surprisal is unavailable".into()));
    }
    let scale = match base {
        LogBase::Nats => 1.0,
        LogBase::Bits => std::f64::consts::LN_2.recip(),
    };
    let mut out = Vec::with_capacity(trace.positions());
    for (i, &id) in trace.ids.iter().enumerate() {
        if i == 0 {
            out.push(None);
            continue;
        }
        let logits = trace.logits_at(i - 1).expect("checked above");
        if id as usize >= logits.len() {
            return Err(Error::Model(format!("token id {id} outside vocabulary")));
        }
        out.push(Some(negative_log_prob(logits, id as usize) * scale));
    }
    Ok(out)
}

fn layer_norm(x: &[f32], gain: &[f32], bias: &[f32], eps: f64, d: usize) -> Vec<f32> {
    let mut out = vec![0f32; x.len()];
    out.par_chunks_mut(d).zip(x.par_chunks(d)).for_each(|(o, row)| {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..d {
            o[j] = ((row[j] as f64 - mean) * inv * gain[j] as f64 + bias[j] as f64) as f32;
        }
    });
    out
}

/// `x · w + b` for row-major `x: [n, d_in]`, `w: [d_in, d_out]`.
fn linear(x: &[f32], w: &[f32], b: &[f32], d_in: usize, d_out: usize) -> Vec<f32> {
    let mut out = vec![0f32; x.len() / d_in * d_out];
    out.par_chunks_mut(d_out).zip(x.par_chunks(d_in)).for_each(|(o, row)| {
        let mut acc = vec![0f64; d_out];
        for (i, &xi) in row.iter().enumerate() {
            let xi = xi as f64;
            let w_row = &w[i * d_out..(i + 1) * d_out];
            for (a, &wv) in acc.iter_mut().zip(w_row) {
                *a += xi * wv as f64;
            }
        }
        for ((o, a), &bv) in o.iter_mut().zip(acc).zip(b) {
            *o = (a + bv as f64) as f32;
        }
    });
    out
}

/// GELU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
fn gelu(x: f32) -> f32 {
    let x = x as f64;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    (0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())) as f32
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Builds a model from an archive; tensor names follow the GPT-2 checkpoint
    /// layout (`wte.weight`, `h.{i}.attn.c_attn.weight`, ..., `ln_f.bias`).
    pub fn load(mut archive: TensorArchive, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let m = config.mlp_dim();
        let token_embedding = archive.take("wte.weight", &[config.vocab_size, d])?;
        let position_embedding = archive.take("wpe.weight", &[config.n_ctx, d])?;
        let mut blocks = Vec::with_capacity(config.n_layer);
        for i in 0..config.n_layer {
            let mut t = |suffix: &str, shape: &[usize]| archive.take(&format!("h.{i}.{suffix}"), shape);
            blocks.push(Block {
                ln1_gain: t("ln_1.weight", &[d])?,
                ln1_bias: t("ln_1.bias", &[d])?,
                qkv_weight: t("attn.c_attn.weight", &[d, 3 * d])?,
                qkv_bias: t("attn.c_attn.bias", &[3 * d])?,
                attn_out_weight: t("attn.c_proj.weight", &[d, d])?,
                attn_out_bias: t("attn.c_proj.bias", &[d])?,
                ln2_gain: t("ln_2.weight", &[d])?,
                ln2_bias: t("ln_2.bias", &[d])?,
                mlp_in_weight: t("mlp.c_fc.weight", &[d, m])?,
                mlp_in_bias: t("mlp.c_fc.bias", &[m])?,
                mlp_out_weight: t("mlp.c_proj.weight", &[m, d])?,
                mlp_out_bias: t("mlp.c_proj.bias", &[d])?,
            });
        }
        let final_gain = archive.take("ln_f.weight", &[d])?;
        let final_bias = archive.take("ln_f.bias", &[d])?;
        Ok(Model {
            config,
            token_embedding,
            position_embedding,
            blocks,
            final_gain,
            final_bias,
        })
    }

    /// Loads an archive file, reading the config from `config_path` when given
    /// and otherwise from archive metadata or tensor shapes.
    pub fn from_files(
        archive_path: impl AsRef<std::path::Path>,
        config_path: Option<&std::path::Path>,
    ) -> Result<Self> {
        let archive = TensorArchive::from_file(archive_path)?;
        let config = match config_path {
            Some(p) => ModelConfig::from_json_file(p)?,
            None => archive.infer_config()?,
        };
        Self::load(archive, config)
    }

    fn attention(&self, x: &[f32], block: &Block, n: usize) -> Vec<f32> {
        let d = self.config.d_model;
        let heads = self.config.n_head;
        let hd = self.config.head_dim();
        let qkv = linear(x, &block.qkv_weight, &block.qkv_bias, d, 3 * d);
        let scale = 1.0 / (hd as f64).sqrt();
        let mut mixed = vec![0f32; n * d];
        mixed.par_chunks_mut(d).enumerate().for_each(|(i, out)| {
            let q_row = &qkv[i * 3 * d..i * 3 * d + d];
            for h in 0..heads {
                let q = &q_row[h * hd..(h + 1) * hd];
                let scores: Vec<f64> = (0..=i)
                    .map(|j| {
                        let k = &qkv[j * 3 * d + d + h * hd..j * 3 * d + d + (h + 1) * hd];
                        q.iter().zip(k).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() * scale
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = weights.iter().sum();
                for c in 0..hd {
                    let mut acc = 0f64;
                    for (j, w) in weights.iter().enumerate() {
                        acc += w * qkv[j * 3 * d + 2 * d + h * hd + c] as f64;
                    }
                    out[h * hd + c] = (acc / total) as f32;
                }
            }
        });
        linear(&mixed, &block.attn_out_weight, &block.attn_out_bias, d, d)
    }

    fn mlp(&self, x: &[f32], block: &Block) -> Vec<f32> {
        let d = self.config.d_model;
        let m = self.config.mlp_dim();
        let mut inner = linear(x, &block.mlp_in_weight, &block.mlp_in_bias, d, m);
        inner.par_iter_mut().for_each(|v| *v = gelu(*v));
        linear(&inner, &block.mlp_out_weight, &block.mlp_out_bias, m, d)
    }

    pub fn forward(&self, ids: &[TokenId]) -> Result<ForwardTrace> {
        let c = &self.config;
        let n = ids.len();
        if n == 0 {
            return Err(Error::Model("forward: empty input".into()));
        }
        if n > c.n_ctx {
            return Err(Error::Model(format!("forward: {n} tokens exceed n_ctx {}", c.n_ctx)));
        }
        let d = c.d_model;
        let mut h = vec![0f32; n * d];
        for (pos, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= c.vocab_size {
                return Err(Error::Model(format!(
                    "forward: token id {id} outside vocabulary {}",
                    c.vocab_size
                )));
            }
            let tok = &self.token_embedding[id * d..(id + 1) * d];
            let posv = &self.position_embedding[pos * d..(pos + 1) * d];
            for j in 0..d {
                h[pos * d + j] = tok[j] + posv[j];
            }
        }
        let mut hidden = Vec::with_capacity(c.n_layer + 2);
        hidden.push(h.clone());
        for block in &self.blocks {
            let a = self.attention(
                &layer_norm(&h, &block.ln1_gain, &block.ln1_bias, c.layernorm_epsilon, d),
                block,
                n,
            );
            h.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
            let f = self.mlp(
                &layer_norm(&h, &block.ln2_gain, &block.ln2_bias, c.layernorm_epsilon, d),
                block,
            );
            h.iter_mut().zip(&f).for_each(|(x, y)| *x += y);
            hidden.push(h.clone());
        }
        let normed = layer_norm(&h, &self.final_gain, &self.final_bias, c.layernorm_epsilon, d);
        let v = c.vocab_size;
        let mut logits = vec![0f32; n * v];
        for (pos, row) in logits.chunks_mut(v).enumerate() {
            let x = &normed[pos * d..(pos + 1) * d];
            row.par_iter_mut().enumerate().for_each(|(tok, out)| {
                let e = &self.token_embedding[tok * d..(tok + 1) * d];
                *out = x.iter().zip(e).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() as f32;
            });
        }
        hidden.push(normed);
        if let Some(bad) = logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::Model(format!("non-finite logit at flat index {bad}")));
        }
        Ok(ForwardTrace {
            config: *c,
            ids: ids.to_vec(),
            layer_names: layer_names(c.n_layer),
            hidden,
            logits: Some(logits),
        })
    }
}
