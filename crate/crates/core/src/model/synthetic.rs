//! Seeded random-weight archives with the GPT-2 tensor layout, for tests and
//! for exercising the pipeline without published weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::{write_archive, Model, ModelConfig, TensorArchive};
use crate::error::Result;

/// Every tensor the loader requires, in a fixed order, with gaussian weights of
/// standard deviation `std` and layernorm gains near one.
pub fn synthetic_tensors(config: &ModelConfig, seed: u64, std: f32) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, std).expect("std is positive");
    let mut gen = |shape: Vec<usize>, offset: f32| -> (Vec<usize>, Vec<f32>) {
        let n = shape.iter().product();
        let data = (0..n).map(|_| offset + rng.sample(normal)).collect();
        (shape, data)
    };
    let d = config.d_model;
    let m = config.mlp_dim();
    let mut out = Vec::new();
    let mut push = |name: String, (shape, data): (Vec<usize>, Vec<f32>)| out.push((name, shape, data));
    push("wte.weight".into(), gen(vec![config.vocab_size, d], 0.0));
    push("wpe.weight".into(), gen(vec![config.n_ctx, d], 0.0));
    for i in 0..config.n_layer {
        push(format!("h.{i}.ln_1.weight"), gen(vec![d], 1.0));
        push(format!("h.{i}.ln_1.bias"), gen(vec![d], 0.0));
        push(format!("h.{i}.attn.c_attn.weight"), gen(vec![d, 3 * d], 0.0));
        push(format!("h.{i}.attn.c_attn.bias"), gen(vec![3 * d], 0.0));
        push(format!("h.{i}.attn.c_proj.weight"), gen(vec![d, d], 0.0));
        push(format!("h.{i}.attn.c_proj.bias"), gen(vec![d], 0.0));
        push(format!("h.{i}.ln_2.weight"), gen(vec![d], 1.0));
        push(format!("h.{i}.ln_2.bias"), gen(vec![d], 0.0));
        push(format!("h.{i}.mlp.c_fc.weight"), gen(vec![d, m], 0.0));
        push(format!("h.{i}.mlp.c_fc.bias"), gen(vec![m], 0.0));
        push(format!("h.{i}.mlp.c_proj.weight"), gen(vec![m, d], 0.0));
        push(format!("h.{i}.mlp.c_proj.bias"), gen(vec![d], 0.0));
    }
    push("ln_f.weight".into(), gen(vec![d], 1.0));
    push("ln_f.bias".into(), gen(vec![d], 0.0));
    out
}

/// Archive bytes with the config recorded in the header metadata.
pub fn synthetic_archive(config: &ModelConfig, seed: u64, std: f32) -> Result<Vec<u8>> {
    write_archive(&synthetic_tensors(config, seed, std), &config.to_metadata())
}

pub fn synthetic_model(config: ModelConfig, seed: u64, std: f32) -> Result<Model> {
    let bytes = synthetic_archive(&config, seed, std)?;
    Model::load(TensorArchive::from_bytes(&bytes)?, config)
}
