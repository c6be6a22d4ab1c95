//! Token pairing between a sentence and a perturbed variant of it.
//!
//! Both sides are projected onto their shared "core" text (the text with
//! inserted spans removed). Tokens whose core byte ranges coincide are paired
//! directly. Between those anchors, leftover tokens are matched by a longest
//! common subsequence over token ids; whatever is still unmatched is excluded
//! with a reason. Tokens made entirely of inserted bytes are never paired.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{excise, RenderedSentence};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Base,
    Variant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryExclusion {
    pub side: Side,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMap {
    /// `(base_index, variant_index)`, strictly increasing in both coordinates.
    pub pairs: Vec<(usize, usize)>,
    /// Variant tokens lying wholly inside the variant's inserted spans.
    pub excluded_variant: Vec<usize>,
    /// Base tokens lying wholly inside the base's inserted spans (empty when the
    /// base is the unperturbed form).
    pub excluded_base: Vec<usize>,
    pub excluded_boundary: Vec<BoundaryExclusion>,
}

impl PairMap {
    /// Position in `pairs` of the pair whose base token is `base_index`.
    pub fn pair_for_base(&self, base_index: usize) -> Option<usize> {
        self.pairs.iter().position(|&(b, _)| b == base_index)
    }

    /// Same alignment seen from the other side.
    pub fn transposed(&self) -> PairMap {
        let flip = |s: Side| match s {
            Side::Base => Side::Variant,
            Side::Variant => Side::Base,
        };
        let mut boundary: Vec<BoundaryExclusion> = self
            .excluded_boundary
            .iter()
            .map(|e| BoundaryExclusion {
                side: flip(e.side),
                ..e.clone()
            })
            .collect();
        sort_exclusions(&mut boundary);
        PairMap {
            pairs: self.pairs.iter().map(|&(b, v)| (v, b)).collect(),
            excluded_variant: self.excluded_base.clone(),
            excluded_base: self.excluded_variant.clone(),
            excluded_boundary: boundary,
        }
    }
}

fn sort_exclusions(list: &mut [BoundaryExclusion]) {
    list.sort_by_key(|e| (e.side == Side::Variant, e.index));
}

/// One side of an alignment.
#[derive(Debug, Clone, Copy)]
pub struct AlignSide<'a> {
    pub text: &'a str,
    pub inserted: &'a [Range<usize>],
    pub tokens: &'a TokenSequence,
}

impl<'a> AlignSide<'a> {
    pub fn new(sentence: &'a RenderedSentence, tokens: &'a TokenSequence) -> Self {
        AlignSide {
            text: &sentence.text,
            inserted: &sentence.inserted_spans,
            tokens,
        }
    }
}

enum Class {
    Inserted,
    Straddles,
    Core(Range<usize>),
}

fn classify(side: &AlignSide<'_>) -> Vec<Class> {
    // core offset of every byte that is not inserted
    let mut core_of = vec![None; side.text.len()];
    let mut next = 0;
    for (i, slot) in core_of.iter_mut().enumerate() {
        if !side.inserted.iter().any(|r| r.contains(&i)) {
            *slot = Some(next);
            next += 1;
        }
    }
    side.tokens
        .spans
        .iter()
        .map(|span| {
            let mapped: Vec<Option<usize>> = span.clone().map(|b| core_of[b]).collect();
            if mapped.iter().all(Option::is_none) {
                Class::Inserted
            } else if mapped.iter().any(Option::is_none) {
                Class::Straddles
            } else {
                let start = mapped[0].expect("checked");
                Class::Core(start..start + mapped.len())
            }
        })
        .collect()
}

/// LCS over token ids with a tie-break on token content, so swapping the two
/// sequences yields the transposed matching.
fn lcs_pairs(a: &[TokenId], b: &[TokenId]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
            continue;
        }
        let skip_a = table[i + 1][j];
        let skip_b = table[i][j + 1];
        if skip_a > skip_b || (skip_a == skip_b && a[i] > b[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

pub fn align(base: AlignSide<'_>, variant: AlignSide<'_>) -> Result<PairMap> {
    for side in [&base, &variant] {
        if side.tokens.spans.last().map_or(0, |s| s.end) != side.text.len() {
            return Err(Error::Align("token spans do not cover the sentence".into()));
        }
    }
    let base_core = excise(base.text, base.inserted);
    let variant_core = excise(variant.text, variant.inserted);
    if base_core != variant_core {
        return Err(Error::Align(format!(
            "texts differ outside inserted spans: `{base_core}` vs `{variant_core}`"
        )));
    }

    let base_class = classify(&base);
    let variant_class = classify(&variant);

    let mut map = PairMap::default();
    let mut base_by_core: HashMap<Range<usize>, usize> = HashMap::new();
    for (i, c) in base_class.iter().enumerate() {
        match c {
            Class::Core(r) => {
                base_by_core.insert(r.clone(), i);
            }
            Class::Inserted => map.excluded_base.push(i),
            Class::Straddles => map.excluded_boundary.push(BoundaryExclusion {
                side: Side::Base,
                index: i,
                reason: "token straddles an inserted span".into(),
            }),
        }
    }
    let mut anchors = Vec::new();
    for (j, c) in variant_class.iter().enumerate() {
        match c {
            Class::Core(r) => {
                if let Some(&i) = base_by_core.get(r) {
                    anchors.push((i, j));
                }
            }
            Class::Inserted => map.excluded_variant.push(j),
            Class::Straddles => map.excluded_boundary.push(BoundaryExclusion {
                side: Side::Variant,
                index: j,
                reason: "token straddles an inserted span".into(),
            }),
        }
    }

    // Fill the gaps between anchors with LCS matches.
    let eligible = |class: &[Class], lo: usize, hi: usize| -> Vec<usize> {
        (lo..hi).filter(|&k| matches!(class[k], Class::Core(_))).collect()
    };
    let mut pairs = anchors.clone();
    let mut bounds = vec![(0usize, 0usize)];
    bounds.extend(anchors.iter().map(|&(i, j)| (i + 1, j + 1)));
    let mut ends: Vec<(usize, usize)> = anchors.clone();
    ends.push((base_class.len(), variant_class.len()));
    let mut unmatched = Vec::new();
    for (&(b_lo, v_lo), &(b_hi, v_hi)) in bounds.iter().zip(&ends) {
        let bs = eligible(&base_class, b_lo, b_hi);
        let vs = eligible(&variant_class, v_lo, v_hi);
        let a_ids: Vec<TokenId> = bs.iter().map(|&k| base.tokens.ids[k]).collect();
        let b_ids: Vec<TokenId> = vs.iter().map(|&k| variant.tokens.ids[k]).collect();
        let matched = lcs_pairs(&a_ids, &b_ids);
        let (mut used_b, mut used_v) = (vec![false; bs.len()], vec![false; vs.len()]);
        for &(x, y) in &matched {
            pairs.push((bs[x], vs[y]));
            used_b[x] = true;
            used_v[y] = true;
        }
        unmatched.extend(
            bs.iter()
                .zip(&used_b)
                .filter(|(_, u)| !**u)
                .map(|(&k, _)| (Side::Base, k)),
        );
        unmatched.extend(
            vs.iter()
                .zip(&used_v)
                .filter(|(_, u)| !**u)
                .map(|(&k, _)| (Side::Variant, k)),
        );
    }
    pairs.sort_unstable();
    map.pairs = pairs;
    map.excluded_boundary
        .extend(unmatched.into_iter().map(|(side, index)| BoundaryExclusion {
            side,
            index,
            reason: "no counterpart after retokenization".into(),
        }));
    sort_exclusions(&mut map.excluded_boundary);
    Ok(map)
}

/// Convenience wrapper over rendered sentences.
pub fn align_rendered(
    base: (&RenderedSentence, &TokenSequence),
    variant: (&RenderedSentence, &TokenSequence),
) -> Result<PairMap> {
    align(AlignSide::new(base.0, base.1), AlignSide::new(variant.0, variant.1))
}
