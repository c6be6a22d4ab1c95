//! Comparison metrics between aligned hidden states.

use serde::{Deserialize, Serialize};

use crate::align::PairMap;
use crate::error::{Error, Result};

/// Mean hidden state of an analysis run at one layer; cosine similarities are
/// taken around this point rather than the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringStats {
    pub mean: Vec<f64>,
    pub count: usize,
    pub layer: String,
}

impl CenteringStats {
    pub fn center(&self, v: &[f32]) -> Vec<f64> {
        v.iter().zip(&self.mean).map(|(&x, &m)| x as f64 - m).collect()
    }
}

/// Arithmetic mean of `vectors`, summed in iteration order in f64.
pub fn compute_centering<'a, I>(vectors: I, layer: &str) -> Result<CenteringStats>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for v in vectors {
        if count == 0 {
            sum = vec![0.0; v.len()];
        } else if v.len() != sum.len() {
            return Err(Error::Metric(format!(
                "centering: vector length {} differs from {}",
                v.len(),
                sum.len()
            )));
        }
        for (s, &x) in sum.iter_mut().zip(v) {
            *s += x as f64;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Metric("centering: no vectors".into()));
    }
    let mean: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::Metric("centering: non-finite mean".into()));
    }
    Ok(CenteringStats {
        mean,
        count,
        layer: layer.to_string(),
    })
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("vector lengths differ: {a} vs {b}")));
    }
    Ok(())
}

/// L1 distance.
pub fn manhattan(a: &[f32], b: &[f32]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum())
}

fn cosine_f64(a: &[f64], b: &[f64]) -> Result<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Metric("cosine: zero-norm centered vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of `a - mean` and `b - mean`.
pub fn cosine_centered(a: &[f32], b: &[f32], stats: &CenteringStats) -> Result<f64> {
    check_len(a.len(), b.len())?;
    check_len(a.len(), stats.mean.len())?;
    cosine_f64(&stats.center(a), &stats.center(b))
}

/// `base[i] - variant[j]` for every pair; positive when the non-negated form
/// was more surprising. `None` where either side is undefined.
pub fn surprisal_difference(base: &[Option<f64>], variant: &[Option<f64>], pairs: &PairMap) -> Vec<Option<f64>> {
    pairs
        .pairs
        .iter()
        .map(
            |&(i, j)| match (base.get(i).copied().flatten(), variant.get(j).copied().flatten()) {
                (Some(b), Some(v)) => Some(b - v),
                _ => None,
            },
        )
        .collect()
}

/// Metric values per paired position of one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub manhattan: Vec<f64>,
    /// `None` where a centered vector was degenerate.
    pub cosine: Vec<Option<f64>>,
    /// `None` at position 0 or when the source had no logits.
    pub surprisal_diff: Vec<Option<f64>>,
    pub labels: Vec<String>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.manhattan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manhattan.is_empty()
    }

    /// Builds the series from per-pair hidden state slices.
    pub fn compute<'a>(
        states: impl IntoIterator<Item = (&'a [f32], &'a [f32])>,
        surprisal_diff: Vec<Option<f64>>,
        labels: Vec<String>,
        stats: &CenteringStats,
    ) -> Result<Self> {
        let mut manhattan_values = Vec::new();
        let mut cosine = Vec::new();
        for (position, (a, b)) in states.into_iter().enumerate() {
            manhattan_values.push(manhattan(a, b)?);
            cosine.push(match cosine_centered(a, b, stats) {
                Ok(c) => Some(c),
                Err(e) => {
                    log::warn!("dropping cosine at pair {position}: {e}");
                    None
                }
            });
        }
        if surprisal_diff.len() != manhattan_values.len() || labels.len() != manhattan_values.len() {
            return Err(Error::Metric("metric series components differ in length".into()));
        }
        Ok(MetricSeries {
            manhattan: manhattan_values,
            cosine,
            surprisal_diff,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStat {
    pub dimension: usize,
    pub mean: f64,
    pub variance: f64,
    pub max_abs: f64,
    /// This dimension's share of the summed variance over all dimensions.
    pub variance_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub count: usize,
    /// Sorted by variance, largest first (ties by dimension index).
    pub ranked: Vec<DimensionStat>,
    pub rogue: Vec<usize>,
    /// Combined variance share of the rogue dimensions.
    pub rogue_variance_share: f64,
}

/// Per-dimension moments over a collection of vectors, ranked by variance;
/// the top `k` dimensions are flagged as rogue candidates.
pub fn dimension_diagnostics<'a, I>(vectors: I, k: usize) -> Result<DimensionReport>
where
    I: IntoIterator<Item = &'a [f32]> + Clone,
{
    let stats = compute_centering(vectors.clone(), "diagnostics")?;
    let d = stats.mean.len();
    let mut var = vec![0f64; d];
    let mut max_abs = vec![0f64; d];
    for v in vectors {
        for (j, &x) in v.iter().enumerate() {
            let x = x as f64;
            var[j] += (x - stats.mean[j]).powi(2);
            max_abs[j] = max_abs[j].max(x.abs());
        }
    }
    var.iter_mut().for_each(|v| *v /= stats.count as f64);
    let total: f64 = var.iter().sum();
    let mut ranked: Vec<DimensionStat> = (0..d)
        .map(|j| DimensionStat {
            dimension: j,
            mean: stats.mean[j],
            variance: var[j],
            max_abs: max_abs[j],
            variance_share: if total > 0.0 { var[j] / total } else { 0.0 },
        })
        .collect();
    ranked.sort_by(|a, b| b.variance.total_cmp(&a.variance).then(a.dimension.cmp(&b.dimension)));
    let rogue: Vec<usize> = ranked.iter().take(k).map(|s| s.dimension).collect();
    let rogue_variance_share = ranked.iter().take(k).map(|s| s.variance_share).sum();
    Ok(DimensionReport {
        count: stats.count,
        ranked,
        rogue,
        rogue_variance_share,
    })
}

/// How much the rogue dimensions drive each metric over a set of pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RogueInfluence {
    pub dimensions: Vec<usize>,
    pub pairs: usize,
    pub manhattan_mean: f64,
    pub manhattan_mean_ablated: f64,
    /// Share of summed |Δ| carried by the rogue dimensions.
    pub rogue_l1_share: f64,
    pub cosine_mean: f64,
    pub cosine_mean_ablated: f64,
    /// Mean absolute change in cosine when the rogue dimensions are zeroed.
    pub cosine_mean_abs_change: f64,
}

/// Recomputes Manhattan and centered cosine with `dimensions` zeroed.
pub fn rogue_influence<'a, I>(pairs: I, stats: &CenteringStats, dimensions: &[usize]) -> Result<RogueInfluence>
where
    I: IntoIterator<Item = (&'a [f32], &'a [f32])>,
{
    let mut n = 0usize;
    let (mut man, mut man_ab, mut rogue_l1) = (0f64, 0f64, 0f64);
    let (mut cos, mut cos_ab, mut cos_change, mut n_cos) = (0f64, 0f64, 0f64, 0usize);
    for (a, b) in pairs {
        check_len(a.len(), b.len())?;
        let full = manhattan(a, b)?;
        let rogue: f64 = dimensions.iter().map(|&j| (a[j] as f64 - b[j] as f64).abs()).sum();
        man += full;
        man_ab += full - rogue;
        rogue_l1 += rogue;
        let (mut ca, mut cb) = (stats.center(a), stats.center(b));
        if let Ok(c) = cosine_f64(&ca, &cb) {
            for &j in dimensions {
                ca[j] = 0.0;
                cb[j] = 0.0;
            }
            if let Ok(c2) = cosine_f64(&ca, &cb) {
                cos += c;
                cos_ab += c2;
                cos_change += (c - c2).abs();
                n_cos += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Metric("rogue influence: no pairs".into()));
    }
    let nc = n_cos.max(1) as f64;
    Ok(RogueInfluence {
        dimensions: dimensions.to_vec(),
        pairs: n,
        manhattan_mean: man / n as f64,
        manhattan_mean_ablated: man_ab / n as f64,
        rogue_l1_share: if man > 0.0 { rogue_l1 / man } else { 0.0 },
        cosine_mean: cos / nc,
        cosine_mean_ablated: cos_ab / nc,
        cosine_mean_abs_change: cos_change / nc,
    })
}
