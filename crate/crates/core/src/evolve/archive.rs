use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvolveError, SearchConfig};
use crate::word::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Low,
    Medium,
    High,
}

/// Wake-rate bucket: low for [0.1, 0.3], medium for [0.4, 0.7] and high for
/// [0.8, 1.0]. Rates between the listed bands (possible when k is not 10)
/// fall into the lower bucket.
pub fn bucket(rate: f64) -> Result<Bucket, EvolveError> {
    const EPS: f64 = 1e-9;
    if !(rate + EPS >= 0.1) || rate > 1.0 + EPS {
        return Err(EvolveError::BelowFuzzyThreshold(rate));
    }
    Ok(if rate + EPS >= 0.8 {
        Bucket::High
    } else if rate + EPS >= 0.4 {
        Bucket::Medium
    } else {
        Bucket::Low
    })
}

impl std::fmt::Display for Bucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bucket::Low => "low",
            Bucket::Medium => "medium",
            Bucket::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyCandidate {
    pub word: String,
    pub wake_rate: f64,
    pub dissimilarity: f64,
    pub generation: usize,
}

/// An evaluated word that never activated the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedWord {
    pub word: String,
    pub dissimilarity: f64,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub config: SearchConfig,
    pub language: Language,
    pub wake_word: String,
    pub oracle: String,
    /// Oracle trials spent.
    pub queries: u64,
    /// Distinct words evaluated.
    pub evaluated: usize,
    /// Generations completed.
    pub generations: usize,
}

/// Fuzzy words in discovery order, plus the rejected words that serve as
/// negatives for the explanation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyArchive {
    pub run: RunInfo,
    pub candidates: Vec<FuzzyCandidate>,
    #[serde(default)]
    pub non_fuzzy: Vec<RejectedWord>,
}

impl FuzzyArchive {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn with_min_rate(&self, rate: f64) -> impl Iterator<Item = &FuzzyCandidate> {
        self.candidates.iter().filter(move |c| c.wake_rate + 1e-9 >= rate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvolveError> {
        serde_json::from_str(text).map_err(|e| EvolveError::Archive(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvolveError::Archive(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Candidates sorted by dissimilarity, most dissimilar first.
    pub fn by_dissimilarity(&self) -> Vec<&FuzzyCandidate> {
        let mut v: Vec<&FuzzyCandidate> = self.candidates.iter().collect();
        v.sort_by(|a, b| b.dissimilarity.total_cmp(&a.dissimilarity).then_with(|| a.word.cmp(&b.word)));
        v
    }
}
