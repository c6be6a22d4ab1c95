//! Byte-level BPE compatible with GPT-2's `vocab.json` / `merges.txt`.
//!
//! Text is split by the GPT-2 pre-tokenizer pattern, every byte is mapped to a
//! printable stand-in character, and merges are applied lowest rank first until
//! none applies. Each output token carries the byte range it covers in the
//! original string, so tokens can be tied back to corpus spans.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use fancy_regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

const PRETOKEN_PATTERN: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

pub const GPT2_VOCAB_JSON: &str = include_str!("../data/gpt2/vocab.json");
pub const GPT2_MERGES_TXT: &str = include_str!("../data/gpt2/merges.txt");

/// The 256-entry byte → char table used by GPT-2: printable Latin-1 bytes map
/// to themselves, the rest are shifted to code points from U+0100 upward.
pub fn byte_to_unicode_table() -> [char; 256] {
    let printable = |b: u32| (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
    let mut table = ['\0'; 256];
    let mut shifted = 0u32;
    for b in 0..256u32 {
        let cp = if printable(b) {
            b
        } else {
            shifted += 1;
            255 + shifted
        };
        table[b as usize] = char::from_u32(cp).expect("valid code point");
    }
    table
}

pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    merge_ranks: HashMap<(String, String), usize>,
    byte_to_char: [char; 256],
    char_to_byte: HashMap<char, u8>,
    pretokenizer: Regex,
}

impl std::fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.id_to_token.len())
            .field("merges", &self.merge_ranks.len())
            .finish()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    /// Surface text of each token (lossy where a token splits a multibyte char).
    pub pieces: Vec<String>,
    pub spans: Vec<Range<usize>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Index of the token whose span contains byte `offset`.
    pub fn token_at_byte(&self, offset: usize) -> Option<usize> {
        self.spans.iter().position(|s| s.contains(&offset))
    }
}

impl Vocabulary {
    /// Builds a vocabulary from a token → id map and an ordered merge list.
    pub fn new(token_to_id: HashMap<String, TokenId>, merges: Vec<(String, String)>) -> Result<Self> {
        let size = token_to_id.len();
        let mut id_to_token = vec![None; size];
        for (token, &id) in &token_to_id {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| Error::Tokenizer(format!("id {id} for `{token}` outside 0..{size}")))?;
            if slot.is_some() {
                return Err(Error::Tokenizer(format!("id {id} assigned twice")));
            }
            *slot = Some(token.clone());
        }
        let id_to_token: Vec<String> = id_to_token
            .into_iter()
            .map(|t| t.expect("dense ids: every slot filled"))
            .collect();

        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, pair) in merges.into_iter().enumerate() {
            if merge_ranks.contains_key(&pair) {
                return Err(Error::Tokenizer(format!("duplicate merge `{} {}`", pair.0, pair.1)));
            }
            merge_ranks.insert(pair, rank);
        }

        let byte_to_char = byte_to_unicode_table();
        let char_to_byte = byte_to_char.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        let pretokenizer = Regex::new(PRETOKEN_PATTERN).expect("static pattern compiles");
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            merge_ranks,
            byte_to_char,
            char_to_byte,
            pretokenizer,
        })
    }

    pub fn from_strs(vocab_json: &str, merges_txt: &str) -> Result<Self> {
        let token_to_id: HashMap<String, TokenId> =
            serde_json::from_str(vocab_json).map_err(|e| Error::Tokenizer(format!("vocab JSON: {e}")))?;
        let mut merges = Vec::new();
        for (n, line) in merges_txt.lines().enumerate() {
            if (n == 0 && line.starts_with('#')) || line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()))
                }
                _ => {
                    return Err(Error::Tokenizer(format!(
                        "merges line {}: expected `a b`, got `{line}`",
                        n + 1
                    )))
                }
            }
        }
        Self::new(token_to_id, merges)
    }

    /// The published GPT-2 vocabulary and merge list, bundled with the crate.
    pub fn gpt2() -> Result<Self> {
        Self::from_strs(GPT2_VOCAB_JSON, GPT2_MERGES_TXT)
    }

    pub fn from_files(vocab_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<Self> {
        let (vp, mp) = (vocab_path.as_ref(), merges_path.as_ref());
        let vocab = std::fs::read_to_string(vp).map_err(|e| Error::io(vp, e))?;
        let merges = std::fs::read_to_string(mp).map_err(|e| Error::io(mp, e))?;
        Self::from_strs(&vocab, &merges)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn merge_count(&self) -> usize {
        self.merge_ranks.len()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        let mut out = TokenSequence::default();
        for m in self.pretokenizer.find_iter(text) {
            let m = m.map_err(|e| Error::Tokenizer(format!("pre-tokenizer: {e}")))?;
            let mut offset = m.start();
            for piece in self.bpe(m.as_str()) {
                let id = self
                    .id(&piece)
                    .ok_or_else(|| Error::Tokenizer(format!("piece `{piece}` absent from vocabulary")))?;
                // one stand-in char per source byte
                let width = piece.chars().count();
                let span = offset..offset + width;
                out.pieces
                    .push(String::from_utf8_lossy(&text.as_bytes()[span.clone()]).into_owned());
                out.ids.push(id);
                out.spans.push(span);
                offset += width;
            }
            debug_assert_eq!(offset, m.end());
        }
        Ok(out)
    }

    fn bpe(&self, pretoken: &str) -> Vec<String> {
        let mut word: Vec<String> = pretoken
            .bytes()
            .map(|b| self.byte_to_char[b as usize].to_string())
            .collect();
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|w| {
                    self.merge_ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&rank| (rank, (w[0].clone(), w[1].clone())))
                })
                .min_by_key(|(rank, _)| *rank);
            let Some((_, (first, second))) = best else { break };
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut word[i]));
                    i += 1;
                }
            }
            word = merged;
        }
        word
    }

    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        let mut bytes = Vec::new();
        for &id in ids {
            let token = self
                .token(id)
                .ok_or_else(|| Error::Tokenizer(format!("token id {id} out of range 0..{}", self.len())))?;
            for c in token.chars() {
                let b = self
                    .char_to_byte
                    .get(&c)
                    .ok_or_else(|| Error::Tokenizer(format!("token {id} contains unmapped char {c:?}")))?;
                bytes.push(*b);
            }
        }
        Ok(bytes)
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        String::from_utf8(self.decode_bytes(ids)?)
            .map_err(|e| Error::Tokenizer(format!("decoded bytes are not UTF-8: {e}")))
    }
}
