use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{logistic, OracleError, WakeOracle};
use crate::phonetics::{Resources, Unit};
use crate::word::{Language, Word};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    /// Position of the heavily weighted unit; the middle unit when unset.
    pub decisive_unit: Option<usize>,
    /// Weight of the decisive unit; the rest is split evenly.
    pub decisive_weight: f64,
    pub threshold: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self { decisive_unit: None, decisive_weight: 0.6, threshold: 0.7, temperature: 0.05, seed: 0 }
    }
}

/// A template-matching stand-in for a commercial wake-word detector.
///
/// The candidate's units are aligned positionally with the target's. Each
/// aligned pair contributes `weight * (1 - unit_distance)`; missing units
/// contribute nothing. The detector wakes with probability
/// `logistic((score - threshold) / temperature)`.
#[derive(Debug)]
pub struct SimulatedDetector {
    res: Arc<Resources>,
    language: Language,
    target_text: String,
    target: Vec<Unit>,
    weights: Vec<f64>,
    threshold: f64,
    temperature: f64,
    seed: u64,
    counter: AtomicU64,
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl SimulatedDetector {
    pub fn new(target: &Word, res: Arc<Resources>, cfg: SimulatorConfig) -> Result<Self, OracleError> {
        let units = target.units(&res);
        let n = units.len();
        if n == 0 {
            return Err(OracleError::InvalidConfig("target word has no units".into()));
        }
        let decisive = cfg.decisive_unit.unwrap_or(n / 2);
        if decisive >= n {
            return Err(OracleError::InvalidConfig(format!(
                "decisive unit {decisive} out of range for {n} units"
            )));
        }
        let weights = if n == 1 {
            vec![1.0]
        } else {
            let rest = (1.0 - cfg.decisive_weight) / (n - 1) as f64;
            (0..n).map(|i| if i == decisive { cfg.decisive_weight } else { rest }).collect()
        };
        Self::with_weights(target, res, weights, cfg)
    }

    /// Uses explicit per-unit weights, which must sum to 1.
    pub fn with_weights(
        target: &Word,
        res: Arc<Resources>,
        weights: Vec<f64>,
        cfg: SimulatorConfig,
    ) -> Result<Self, OracleError> {
        let units = target.units(&res);
        if weights.len() != units.len() {
            return Err(OracleError::InvalidConfig(format!(
                "{} weights for {} units",
                weights.len(),
                units.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(OracleError::InvalidConfig("weights must be nonnegative and sum to 1".into()));
        }
        if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) || !(cfg.temperature > 0.0) {
            return Err(OracleError::InvalidConfig(
                "threshold must lie in (0, 1) and temperature must be positive".into(),
            ));
        }
        Ok(Self {
            language: target.language(),
            target_text: target.text(&res),
            target: units,
            weights,
            threshold: cfg.threshold,
            temperature: cfg.temperature,
            seed: cfg.seed,
            counter: AtomicU64::new(0),
            res,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn target_units(&self) -> &[Unit] {
        &self.target
    }

    /// Position and identity of the heaviest unit (first on ties).
    pub fn decisive_unit(&self) -> (usize, Unit) {
        let i = (0..self.weights.len())
            .fold(0, |best, i| if self.weights[i] > self.weights[best] { i } else { best });
        (i, self.target[i])
    }

    /// Per-position similarities to the target; missing units score 0.
    pub fn similarities(&self, units: &[Unit]) -> Vec<f64> {
        self.target
            .iter()
            .enumerate()
            .map(|(i, &t)| units.get(i).map_or(0.0, |&u| 1.0 - self.res.unit_distance(u, t)))
            .collect()
    }

    pub fn score_similarities(&self, sims: &[f64]) -> f64 {
        self.weights.iter().zip(sims).map(|(w, s)| w * s).sum()
    }

    pub fn score_units(&self, units: &[Unit]) -> f64 {
        self.score_similarities(&self.similarities(units))
    }

    pub fn probability_from_score(&self, score: f64) -> f64 {
        logistic((score - self.threshold) / self.temperature)
    }

    /// Closed-form activation probability of a single trial.
    pub fn wake_probability(&self, word: &str) -> Result<f64, OracleError> {
        let w = Word::parse(self.language, word, &self.res)?;
        Ok(self.probability_from_score(self.score_units(&w.units(&self.res))))
    }

    fn trial(&self, word: &str, nonce: u64) -> Result<bool, OracleError> {
        let p = self.wake_probability(word)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a(word));
        rng.set_word_pos(nonce as u128 * 2);
        Ok(rng.gen::<f64>() < p)
    }
}

impl WakeOracle for SimulatedDetector {
    /// Draws the next trial from a shared atomic counter, so a fixed query
    /// sequence replays identically.
    fn query(&self, word: &str) -> Result<bool, OracleError> {
        let nonce = self.counter.fetch_add(1, Ordering::Relaxed);
        self.trial(word, nonce)
    }

    /// Trial randomness keyed by (seed, word, trial): independent of call
    /// order, so parallel evaluation stays deterministic.
    fn query_trial(&self, word: &str, trial: u64) -> Result<bool, OracleError> {
        self.trial(word, trial)
    }

    fn describe(&self) -> String {
        format!(
            "sim(target={}, threshold={}, temperature={}, seed={})",
            self.target_text, self.threshold, self.temperature, self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::estimate_wake_rate;

    fn det(lang: Language, text: &str, seed: u64) -> SimulatedDetector {
        let res = Arc::new(Resources::bundled().clone());
        let w = Word::parse(lang, text, &res).unwrap();
        SimulatedDetector::new(&w, res, SimulatorConfig { seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn target_wakes() {
        let d = det(Language::En, "alexa", 1);
        let p = d.wake_probability("alexa").unwrap();
        assert!((p - logistic(0.3 / 0.05)).abs() < 1e-12);
        assert!(estimate_wake_rate(&d, "alexa", 10).unwrap().rate >= 0.9);
        let z = det(Language::Zh, "xiǎo dù xiǎo dù", 1);
        assert!(estimate_wake_rate(&z, "xiǎo dù xiǎo dù", 10).unwrap().rate >= 0.9);
    }

    #[test]
    fn weights_and_ground_truth() {
        let d = det(Language::En, "alexa", 1);
        let w = d.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (pos, unit) = d.decisive_unit();
        assert_eq!(pos, 3);
        assert_eq!(Resources::bundled().unit_symbol(unit), "K");
        assert_eq!(w[pos], 0.6);
    }

    #[test]
    fn decisive_mismatch_hurts_more_than_minor_mismatch() {
        let d = det(Language::En, "alexa", 1);
        let r = Resources::bundled();
        let mut target = d.target_units().to_vec();
        let far = Unit::phoneme(r.phoneme("IY").unwrap());
        let (pos, _) = d.decisive_unit();
        target[pos] = far;
        let p_major = d.probability_from_score(d.score_units(&target));
        let mut target2 = d.target_units().to_vec();
        target2[0] = far;
        let p_minor = d.probability_from_score(d.score_units(&target2));
        assert!(p_major < p_minor);
        // only the decisive unit present: score 0.6, below the threshold
        let only = &d.target_units()[..pos + 1];
        let s: f64 = d.weights()[..=pos].iter().sum();
        assert!((d.score_units(only) - s).abs() < 1e-12);
    }

    #[test]
    fn query_sequence_replays() {
        let run = || {
            let d = det(Language::En, "alexa", 42);
            ["alexa", "alexis", "olexa", "alexa"].iter().map(|w| d.query(w).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        let d = det(Language::En, "alexa", 42);
        assert_eq!(d.query_trial("elixa", 3).unwrap(), d.query_trial("elixa", 3).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn raising_similarities_never_lowers_probability(
            base in proptest::collection::vec(0.0f64..=1.0, 6),
            bump in proptest::collection::vec(0.0f64..=1.0, 6),
        ) {
            let d = det(Language::En, "alexa", 0);
            let raised: Vec<f64> = base.iter().zip(&bump).map(|(b, u)| b + (1.0 - b) * u).collect();
            let p0 = d.probability_from_score(d.score_similarities(&base));
            let p1 = d.probability_from_score(d.score_similarities(&raised));
            proptest::prop_assert!(p1 >= p0);
        }
    }

    #[test]
    fn invalid_configs() {
        let res = Arc::new(Resources::bundled().clone());
        let w = Word::parse(Language::En, "alexa", &res).unwrap();
        let bad = SimulatorConfig { decisive_unit: Some(9), ..Default::default() };
        assert!(SimulatedDetector::new(&w, res.clone(), bad).is_err());
        assert!(SimulatedDetector::with_weights(&w, res.clone(), vec![0.5; 6], Default::default()).is_err());
        let bad = SimulatorConfig { temperature: 0.0, ..Default::default() };
        assert!(SimulatedDetector::new(&w, res, bad).is_err());
    }
}
