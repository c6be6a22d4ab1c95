#![allow(dead_code)]

use std::collections::HashMap;
use std::ops::Range;
use std::path::PathBuf;
use std::sync::OnceLock;

use gardenpath::corpus::{enumerate_forms, render, seed_corpus, RenderedSentence, SentenceFamily};
use gardenpath::{PairMap, TokenSequence, Vocabulary};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

pub fn vocab() -> &'static Vocabulary {
    static V: OnceLock<Vocabulary> = OnceLock::new();
    V.get_or_init(|| Vocabulary::gpt2().expect("bundled vocabulary loads"))
}

pub fn seed() -> Vec<SentenceFamily> {
    seed_corpus().expect("seed corpus parses")
}

/// Every (non-negated form, negated form) pair of a corpus.
pub fn comparison_pairs(corpus: &[SentenceFamily]) -> Vec<(RenderedSentence, RenderedSentence)> {
    corpus
        .iter()
        .flat_map(|f| {
            enumerate_forms(f)
                .into_iter()
                .filter(|form| !form.negated)
                .map(move |form| (render(f, form).unwrap(), render(f, form.with_negated(true)).unwrap()))
        })
        .collect()
}

pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Straight-line GPT-2 in f64, reading tensors with the safetensors crate.
pub struct ReferenceGpt2 {
    tensors: HashMap<String, Vec<f64>>,
    pub n_layer: usize,
    pub n_head: usize,
    pub d: usize,
    pub vocab: usize,
    pub eps: f64,
}

pub struct ReferenceTrace {
    /// `[boundary][position][dim]` for embed, each block, ln_f.
    pub hidden: Vec<Vec<Vec<f64>>>,
    pub logits: Vec<Vec<f64>>,
}

impl ReferenceGpt2 {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let st = safetensors::SafeTensors::deserialize(bytes).unwrap();
        let (_, meta) = safetensors::SafeTensors::read_metadata(bytes).unwrap();
        let md = meta.metadata().clone().unwrap();
        let mut tensors = HashMap::new();
        for (name, view) in st.tensors() {
            let data = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.insert(name, data);
        }
        let get = |k: &str| md[k].parse::<usize>().unwrap();
        ReferenceGpt2 {
            n_layer: get("n_layer"),
            n_head: get("n_head"),
            d: get("d_model"),
            vocab: get("vocab_size"),
            eps: md["layernorm_epsilon"].parse().unwrap(),
            tensors,
        }
    }

    fn t(&self, name: &str) -> &[f64] {
        &self.tensors[name]
    }

    fn layer_norm(&self, x: &[f64], prefix: &str) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let g = self.t(&format!("{prefix}.weight"));
        let b = self.t(&format!("{prefix}.bias"));
        (0..x.len())
            .map(|i| (x[i] - mean) / (var + self.eps).sqrt() * g[i] + b[i])
            .collect()
    }

    /// `x · W + b` with `W` stored `[in, out]`.
    fn affine(&self, x: &[f64], prefix: &str) -> Vec<f64> {
        let w = self.t(&format!("{prefix}.weight"));
        let b = self.t(&format!("{prefix}.bias"));
        let out = b.len();
        let mut y = b.to_vec();
        for (i, xi) in x.iter().enumerate() {
            for j in 0..out {
                y[j] += xi * w[i * out + j];
            }
        }
        y
    }

    pub fn forward(&self, ids: &[u32]) -> ReferenceTrace {
        let d = self.d;
        let hd = d / self.n_head;
        let wte = self.t("wte.weight");
        let wpe = self.t("wpe.weight");
        let mut x: Vec<Vec<f64>> = ids
            .iter()
            .enumerate()
            .map(|(p, &id)| (0..d).map(|k| wte[id as usize * d + k] + wpe[p * d + k]).collect())
            .collect();
        let mut hidden = vec![x.clone()];
        for l in 0..self.n_layer {
            let qkv: Vec<Vec<f64>> = x
                .iter()
                .map(|row| {
                    self.affine(
                        &self.layer_norm(row, &format!("h.{l}.ln_1")),
                        &format!("h.{l}.attn.c_attn"),
                    )
                })
                .collect();
            let mut attn = vec![vec![0.0; d]; x.len()];
            for h in 0..self.n_head {
                for t in 0..x.len() {
                    let q = &qkv[t][h * hd..(h + 1) * hd];
                    let scores: Vec<f64> = (0..=t)
                        .map(|u| {
                            let k = &qkv[u][d + h * hd..d + (h + 1) * hd];
                            q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (hd as f64).sqrt()
                        })
                        .collect();
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for (u, e) in exps.iter().enumerate() {
                        for k in 0..hd {
                            attn[t][h * hd + k] += e / z * qkv[u][2 * d + h * hd + k];
                        }
                    }
                }
            }
            for (t, row) in x.iter_mut().enumerate() {
                let proj = self.affine(&attn[t], &format!("h.{l}.attn.c_proj"));
                row.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);
                let h2 = self.layer_norm(row, &format!("h.{l}.ln_2"));
                let fc: Vec<f64> = self
                    .affine(&h2, &format!("h.{l}.mlp.c_fc"))
                    .into_iter()
                    .map(|v| {
                        0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh())
                    })
                    .collect();
                let out = self.affine(&fc, &format!("h.{l}.mlp.c_proj"));
                row.iter_mut().zip(&out).for_each(|(a, b)| *a += b);
            }
            hidden.push(x.clone());
        }
        let normed: Vec<Vec<f64>> = x.iter().map(|row| self.layer_norm(row, "ln_f")).collect();
        let logits = normed
            .iter()
            .map(|row| {
                (0..self.vocab)
                    .map(|v| (0..d).map(|k| row[k] * wte[v * d + k]).sum())
                    .collect()
            })
            .collect();
        hidden.push(normed);
        ReferenceTrace { hidden, logits }
    }
}

/// ‖a − b‖∞ / ‖b‖∞.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum TokenClass {
    Inserted,
    Straddles,
    Core(usize, usize),
}

fn classes(spans: &[Range<usize>], inserted: &[Range<usize>]) -> Vec<TokenClass> {
    let is_inserted = |b: usize| inserted.iter().any(|r| r.contains(&b));
    spans
        .iter()
        .map(|s| {
            let inside = s.clone().filter(|&b| is_inserted(b)).count();
            if inside == s.len() {
                TokenClass::Inserted
            } else if inside > 0 {
                TokenClass::Straddles
            } else {
                let before = (0..s.start).filter(|&b| is_inserted(b)).count();
                TokenClass::Core(s.start - before, s.end - before)
            }
        })
        .collect()
}

/// Best achievable (exact-span pairs, total pairs) over all monotone
/// matchings in which each pair is an exact core-span match or shares a token id.
pub fn alignment_optimum(
    base: (&RenderedSentence, &TokenSequence),
    variant: (&RenderedSentence, &TokenSequence),
) -> (usize, usize) {
    let bc = classes(&base.1.spans, &base.0.inserted_spans);
    let vc = classes(&variant.1.spans, &variant.0.inserted_spans);
    let (n, m) = (bc.len(), vc.len());
    let mut memo = vec![vec![None; m + 1]; n + 1];
    fn best(
        i: usize,
        j: usize,
        bc: &[TokenClass],
        vc: &[TokenClass],
        bi: &[u32],
        vi: &[u32],
        memo: &mut Vec<Vec<Option<(usize, usize)>>>,
    ) -> (usize, usize) {
        if i == bc.len() || j == vc.len() {
            return (0, 0);
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let mut r = best(i + 1, j, bc, vc, bi, vi, memo).max(best(i, j + 1, bc, vc, bi, vi, memo));
        if let (TokenClass::Core(a0, a1), TokenClass::Core(b0, b1)) = (bc[i], vc[j]) {
            let exact = (a0, a1) == (b0, b1);
            if exact || bi[i] == vi[j] {
                let (e, t) = best(i + 1, j + 1, bc, vc, bi, vi, memo);
                r = r.max((e + exact as usize, t + 1));
            }
        }
        memo[i][j] = Some(r);
        r
    }
    best(0, 0, &bc, &vc, &base.1.ids, &variant.1.ids, &mut memo)
}

/// Validates a pair map and returns its (exact-span pairs, total pairs).
pub fn score_alignment(
    base: (&RenderedSentence, &TokenSequence),
    variant: (&RenderedSentence, &TokenSequence),
    map: &PairMap,
) -> (usize, usize) {
    let bc = classes(&base.1.spans, &base.0.inserted_spans);
    let vc = classes(&variant.1.spans, &variant.0.inserted_spans);
    let mut exact = 0;
    for w in map.pairs.windows(2) {
        assert!(
            w[0].0 < w[1].0 && w[0].1 < w[1].1,
            "pairs not strictly monotone: {:?}",
            map.pairs
        );
    }
    for &(i, j) in &map.pairs {
        match (bc[i], vc[j]) {
            (TokenClass::Core(a0, a1), TokenClass::Core(b0, b1)) => {
                if (a0, a1) == (b0, b1) {
                    exact += 1;
                } else {
                    assert_eq!(base.1.ids[i], variant.1.ids[j], "inadmissible pair ({i},{j})");
                }
            }
            other => panic!("pair ({i},{j}) touches non-core tokens: {other:?}"),
        }
    }
    (exact, map.pairs.len())
}
