//! Cross-lingual Semantic Alignment Accuracy (CSAA) and the seeded
//! perturbations used to build distractor options.
//!
//! Each item pairs a source-sentence embedding with five candidate
//! translations; option A (index 0) is the correct one. An item counts as
//! correct when option A alone has the highest cosine similarity to the
//! source.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const N_OPTIONS: usize = 5;
pub const CORRECT_INDEX: usize = 0;

/// Cosine similarities within this distance of the maximum count as tied.
pub const TIE_TOL: f64 = 1e-12;

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Mismatch(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if !(nu > 0.0) || !(nv > 0.0) {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionSet {
    pub item_id: String,
    pub source: Vec<f64>,
    /// Options A..E in order.
    pub options: [Vec<f64>; N_OPTIONS],
}

impl OptionSet {
    pub fn new(item_id: impl Into<String>, source: Vec<f64>, options: [Vec<f64>; N_OPTIONS]) -> Result<Self> {
        let set = OptionSet {
            item_id: item_id.into(),
            source,
            options,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.source.len();
        if d == 0 {
            return Err(Error::Validation(format!(
                "item {:?}: empty source embedding",
                self.item_id
            )));
        }
        for (i, v) in std::iter::once(&self.source)
            .chain(self.options.iter())
            .enumerate()
        {
            if v.len() != d {
                return Err(Error::Validation(format!(
                    "item {:?}: vector {i} has length {} (expected {d})",
                    self.item_id,
                    v.len()
                )));
            }
            if !(norm(v) > 0.0) {
                return Err(Error::Validation(format!(
                    "item {:?}: vector {i} has zero norm",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// First option attaining the maximum similarity.
    pub index: usize,
    pub tied: bool,
    pub similarities: [f64; N_OPTIONS],
}

impl Selection {
    /// The delta indicator: option A chosen without a tie.
    pub fn correct(&self) -> bool {
        self.index == CORRECT_INDEX && !self.tied
    }
}

pub fn select_option(item: &OptionSet) -> Result<Selection> {
    item.validate()?;
    let mut similarities = [0.0; N_OPTIONS];
    for (s, opt) in similarities.iter_mut().zip(&item.options) {
        *s = cosine_similarity(&item.source, opt)?;
    }
    let max = similarities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let near: Vec<usize> = (0..N_OPTIONS)
        .filter(|&i| similarities[i] >= max - TIE_TOL)
        .collect();
    Ok(Selection {
        index: near[0],
        tied: near.len() > 1,
        similarities,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsaaResult {
    pub n: usize,
    pub delta: Vec<u8>,
    pub chosen: Vec<usize>,
    pub tied: Vec<bool>,
    /// Fraction in [0, 1].
    pub csaa: f64,
}

impl CsaaResult {
    pub fn percent(&self) -> f64 {
        100.0 * self.csaa
    }

    pub fn n_correct(&self) -> usize {
        self.delta.iter().map(|&d| d as usize).sum()
    }

    pub fn n_tied(&self) -> usize {
        self.tied.iter().filter(|&&t| t).count()
    }
}

pub fn csaa(items: &[OptionSet]) -> Result<CsaaResult> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("CSAA over an empty item list".into()));
    }
    let selections = items.iter().map(select_option).collect::<Result<Vec<_>>>()?;
    let delta: Vec<u8> = selections.iter().map(|s| u8::from(s.correct())).collect();
    let correct: usize = delta.iter().map(|&d| d as usize).sum();
    Ok(CsaaResult {
        n: items.len(),
        csaa: correct as f64 / items.len() as f64,
        chosen: selections.iter().map(|s| s.index).collect(),
        tied: selections.iter().map(|s| s.tied).collect(),
        delta,
    })
}

// ---------------------------------------------------------------------------
// perturbation generators

pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_string).collect()
}

pub const MAX_SCRAMBLE_DRAWS: usize = 100;

/// Seeded shuffle of the tokens, redrawn until the order changes.
pub fn scramble_words(tokens: &[String], seed: u64) -> Result<Vec<String>> {
    if tokens.len() < 2 {
        return Err(Error::InvalidArgument(
            "scrambling needs at least 2 tokens".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SCRAMBLE_DRAWS {
        let mut out = tokens.to_vec();
        out.shuffle(&mut rng);
        if out != tokens {
            return Ok(out);
        }
    }
    Err(Error::InvalidArgument(format!(
        "sentence could not be scrambled in {MAX_SCRAMBLE_DRAWS} draws"
    )))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditMode {
    Delete,
    Insert(Vec<String>),
}

/// Removes a random contiguous span of 1..=ceil(len/4) tokens, or splices
/// the payload in at a random position.
pub fn delete_or_insert(tokens: &[String], mode: &EditMode, seed: u64) -> Result<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        EditMode::Delete => {
            if tokens.len() < 2 {
                return Err(Error::InvalidArgument("deletion needs at least 2 tokens".into()));
            }
            let max_span = tokens.len().div_ceil(4);
            let span = rng.random_range(1..=max_span);
            let start = rng.random_range(0..=tokens.len() - span);
            let mut out = tokens[..start].to_vec();
            out.extend_from_slice(&tokens[start + span..]);
            Ok(out)
        }
        EditMode::Insert(payload) => {
            if payload.is_empty() {
                return Err(Error::InvalidArgument("insertion payload is empty".into()));
            }
            let pos = rng.random_range(0..=tokens.len());
            let mut out = tokens[..pos].to_vec();
            out.extend_from_slice(payload);
            out.extend_from_slice(&tokens[pos..]);
            Ok(out)
        }
    }
}

/// Replaces one lexicon-covered token with one of its listed replacements.
pub fn substitute_words(
    tokens: &[String],
    lexicon: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> Result<Vec<String>> {
    let covered: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lexicon.get(*t).is_some_and(|r| !r.is_empty()))
        .map(|(i, _)| i)
        .collect();
    if covered.is_empty() {
        return Err(Error::InvalidArgument(
            "no token of the sentence is in the lexicon".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = covered[rng.random_range(0..covered.len())];
    let choices = &lexicon[&tokens[pos]];
    let mut out = tokens.to_vec();
    out[pos] = choices[rng.random_range(0..choices.len())].clone();
    Ok(out)
}
