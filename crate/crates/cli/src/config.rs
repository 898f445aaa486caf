//! Run configuration: a JSON file, then `--set path=value` overrides, then
//! dedicated flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fakewake::distance::DistanceConfig;
use fakewake::evolve::{EvolveConfig, SearchConfig};
use fakewake::explain::ExplainConfig;
use fakewake::genome::VariationConfig;
use fakewake::mitigate::MitigateConfig;
use fakewake::oracle::{OracleSpec, SimulatorConfig};
use fakewake::Language;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub language: Language,
    pub wake_word: String,
    pub oracle: OracleSpec,
    pub oracle_timeout_secs: f64,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub evolve: EvolveConfig,
    pub variation: VariationConfig,
    pub distance: DistanceConfig,
    pub explain: ExplainConfig,
    pub mitigate: MitigateConfig,
    pub simulator: SimulatorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            language: Language::En,
            wake_word: "alexa".into(),
            oracle: OracleSpec::Sim,
            oracle_timeout_secs: 30.0,
            seed: None,
            out: PathBuf::from("out"),
            threads: None,
            evolve: EvolveConfig::default(),
            variation: VariationConfig::default(),
            distance: DistanceConfig::default(),
            explain: ExplainConfig::default(),
            mitigate: MitigateConfig::default(),
            simulator: SimulatorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn search(&self) -> SearchConfig {
        SearchConfig { evolve: self.evolve, variation: self.variation, distance: self.distance }
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (--seed or \"seed\" in the config file)".into()))
    }

    /// Loads `path` (or the defaults) and applies `key.path=value` overrides.
    /// Values are parsed as JSON, falling back to a plain string.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut v = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        let mut full = serde_json::to_value(Self::default()).expect("defaults serialize");
        merge(&mut full, v.take());
        for s in sets {
            let (key, raw) =
                s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects path=value, got {s:?}")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let slot = key
                .split('.')
                .try_fold(&mut full, |node, k| node.get_mut(k))
                .ok_or_else(|| CliError::Config(format!("unknown config key {key:?}")))?;
            *slot = value;
        }
        serde_json::from_value(full).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

const DESCRIPTIONS: &[(&str, &str)] = &[
    ("language", "zh (tone-marked pinyin) or en (letters)"),
    ("wake_word", "target wake-up word"),
    ("oracle", "sim, or exec:<command> for a line-protocol detector process"),
    ("oracle_timeout_secs", "per-query timeout for exec oracles"),
    ("seed", "global seed; required by generate and mitigate"),
    ("out", "output directory"),
    ("threads", "worker cap; 1 runs everything sequentially"),
    ("evolve.population_size", "genomes per generation"),
    ("evolve.generations", "generations to run"),
    ("evolve.fuzzy_threshold", "minimum wake rate for the archive"),
    ("evolve.trials", "oracle trials per wake-rate estimate"),
    ("evolve.elitism", "carry the non-dominated front into the next generation"),
    ("variation.mutation_rate", "per-gene resampling probability"),
    ("variation.crossover_rate", "probability a child comes from crossover"),
    ("variation.length_ratio", "English genome length relative to the wake word"),
    ("distance.a", "tanh normalization constant for Mandarin"),
    ("distance.space_cost", "English boundary-vs-phoneme substitution cost"),
    ("distance.tone_penalty", "added to a character distance when tones differ"),
    ("explain.gbdt.n_trees", "boosting rounds"),
    ("explain.gbdt.max_depth", "tree depth"),
    ("explain.gbdt.learning_rate", "shrinkage"),
    ("explain.gbdt.min_leaf", "smallest leaf"),
    ("explain.beta", "share of positive attribution the decisive factors must reach"),
    ("explain.folds", "cross-validation folds"),
    ("explain.slots", "unit slots per feature vector; longest word when null"),
    ("explain.max_class_ratio", "cap on the majority:minority class ratio"),
    ("mitigate.n_pos", "wake-word samples in the conventional set"),
    ("mitigate.n_neg", "negative samples in the conventional set"),
    ("mitigate.negatives", "noise, words or mixed"),
    ("mitigate.jitter", "speaker-variation noise relative to the embedding RMS"),
    ("mitigate.train_fraction", "share of each conventional class used for training"),
    ("mitigate.collective_size", "words in the collective set"),
    ("mitigate.high_rate", "wake rate from which archive words count as high-rate"),
    ("mitigate.screening_depth", "largest n in the screening coverage table"),
    ("simulator.decisive_unit", "position of the heavily weighted unit; middle when null"),
    ("simulator.decisive_weight", "weight of that unit"),
    ("simulator.threshold", "score at which the wake probability is 1/2"),
    ("simulator.temperature", "logistic temperature"),
    ("simulator.seed", "seed of the simulator's trial randomness"),
];

/// Markdown table of every configuration key with its default.
pub fn reference_markdown() -> String {
    let v = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut rows = Vec::new();
    flatten("", &v, &mut rows);
    let mut s = String::from("# Configuration reference\n\nGenerated by `fakewake defaults --markdown`.\n\n");
    s.push_str("| key | default | meaning |\n|---|---|---|\n");
    for (k, val) in rows {
        // both classifiers share the boosting parameters
        let lookup = k.replace("mitigate.gbdt.", "explain.gbdt.");
        let desc = DESCRIPTIONS.iter().find(|(p, _)| *p == lookup).map_or("", |(_, d)| d);
        let _ = writeln!(s, "| `{k}` | `{val}` | {desc} |");
    }
    s
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, x, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"language": "zh", "wake_word": "xiǎo dù", "evolve": {"generations": 3}}"#).unwrap();
        let c = RunConfig::load(Some(&p), &["evolve.trials=4".into(), "oracle=exec:cat".into()]).unwrap();
        assert_eq!(c.language, Language::Zh);
        assert_eq!(c.evolve.generations, 3);
        assert_eq!(c.evolve.trials, 4);
        assert_eq!(c.evolve.population_size, EvolveConfig::default().population_size);
        assert_eq!(c.oracle, OracleSpec::Exec("cat".into()));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(RunConfig::load(None, &["evolve.nope=1".into()]), Err(CliError::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"wakeword": "x"}"#).unwrap();
        assert!(matches!(RunConfig::load(Some(&p), &[]), Err(CliError::Config(_))));
    }

    #[test]
    fn defaults_round_trip_and_are_documented() {
        let c = RunConfig::default();
        assert_eq!(serde_json::from_str::<RunConfig>(&c.to_json()).unwrap(), c);
        let md = reference_markdown();
        for line in md.lines().filter(|l| l.starts_with("| `")) {
            assert!(!line.ends_with("|  |"), "undocumented key: {line}");
        }
    }
}
