//! Dissimilarity objectives between a candidate and the wake-up word.
//!
//! Mandarin: mean over aligned characters of `tanh(char_distance / A)`.
//! English: phoneme-weighted Levenshtein distance normalized by `m + n`,
//! where deletions and insertions cost 1 and a substitution costs twice the
//! phoneme distance (twice `space_cost` between a boundary and a phoneme).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonetics::{ChineseWord, PhoneUnit, Resources};
use crate::word::Word;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    /// Normalization constant inside `tanh` for Mandarin words.
    pub a: f64,
    /// Boundary-vs-phoneme dissimilarity for English words.
    pub space_cost: f64,
    /// Added to the character distance when tones differ.
    pub tone_penalty: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self { a: 100.0, space_cost: 1.0, tone_penalty: 1.0 }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<(), DistanceError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(DistanceError::InvalidConfig(format!("A must be positive, got {}", self.a)));
        }
        if !(self.space_cost > 0.0 && self.space_cost <= 1.0) {
            return Err(DistanceError::InvalidConfig(format!(
                "space_cost must lie in (0, 1], got {}",
                self.space_cost
            )));
        }
        if !(self.tone_penalty >= 0.0 && self.tone_penalty.is_finite()) {
            return Err(DistanceError::InvalidConfig("tone_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("words have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("both pronunciations are empty")]
    BothEmpty,
    #[error("cannot compare words of different languages")]
    LanguageMismatch,
    #[error("{0}")]
    InvalidConfig(String),
}

pub fn chinese_dist(
    w1: &ChineseWord,
    w2: &ChineseWord,
    cfg: &DistanceConfig,
    res: &Resources,
) -> Result<f64, DistanceError> {
    if w1.len() != w2.len() {
        return Err(DistanceError::LengthMismatch(w1.len(), w2.len()));
    }
    if w1.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = w1
        .syllables
        .iter()
        .zip(&w2.syllables)
        .map(|(&a, &b)| (res.char_distance(a, b, cfg.tone_penalty) / cfg.a).tanh())
        .sum();
    Ok(total / w1.len() as f64)
}

fn unit_cost(a: PhoneUnit, b: PhoneUnit, cfg: &DistanceConfig, res: &Resources) -> f64 {
    match (a, b) {
        (PhoneUnit::Boundary, PhoneUnit::Boundary) => 0.0,
        (PhoneUnit::Phone(p), PhoneUnit::Phone(q)) => res.phoneme_distance(p, q),
        _ => cfg.space_cost,
    }
}

pub fn english_dist(
    w1: &[PhoneUnit],
    w2: &[PhoneUnit],
    cfg: &DistanceConfig,
    res: &Resources,
) -> Result<f64, DistanceError> {
    let (m, n) = (w1.len(), w2.len());
    if m + n == 0 {
        return Err(DistanceError::BothEmpty);
    }
    // Rolling single-row DP over the alignment lattice.
    let mut prev: Vec<f64> = (0..=n).map(|j| j as f64).collect();
    let mut cur = vec![0.0; n + 1];
    for i in 1..=m {
        cur[0] = i as f64;
        for j in 1..=n {
            let sub = prev[j - 1] + 2.0 * unit_cost(w1[i - 1], w2[j - 1], cfg, res);
            let del = prev[j] + 1.0;
            let ins = cur[j - 1] + 1.0;
            cur[j] = sub.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n] / (m + n) as f64)
}

/// Dissimilarity between two words of the same language.
pub fn word_dist(a: &Word, b: &Word, cfg: &DistanceConfig, res: &Resources) -> Result<f64, DistanceError> {
    match (a, b) {
        (Word::Chinese(x), Word::Chinese(y)) => chinese_dist(x, y, cfg, res),
        (Word::English(x), Word::English(y)) => english_dist(&res.g2p(x), &res.g2p(y), cfg, res),
        _ => Err(DistanceError::LanguageMismatch),
    }
}
