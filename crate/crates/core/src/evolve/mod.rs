//! Two-objective genetic search for fuzzy wake-up words.
//!
//! Each generation evaluates the wake rate and dissimilarity of every word
//! not seen before, archives the fuzzy ones, keeps the non-dominated front
//! and refills the population from it by crossover and mutation.

mod archive;
mod pareto;

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{word_dist, DistanceConfig, DistanceError};
use crate::exec::Exec;
use crate::genome::{crossover, english_genome_len, mutate, seed_genomes, Genome, GenomeError, VariationConfig};
use crate::oracle::{estimate_wake_rate, OracleError, WakeOracle};
use crate::phonetics::Resources;
use crate::word::Word;

pub use archive::{bucket, Bucket, FuzzyArchive, FuzzyCandidate, RejectedWord, RunInfo};
pub use pareto::{dominates, non_dominated_front, Objectives};

#[derive(Debug, Error)]
pub enum EvolveError {
    /// The oracle failed; the archive built so far is attached.
    #[error("oracle failure: {0}")]
    Oracle(#[source] OracleError, Option<Box<FuzzyArchive>>),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("wake rate {0} is below the fuzzy threshold")]
    BelowFuzzyThreshold(f64),
    #[error("archive: {0}")]
    Archive(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Minimum wake rate for a word to count as fuzzy.
    pub fuzzy_threshold: f64,
    /// Oracle trials per word.
    pub trials: u32,
    /// Carry the non-dominated front unchanged into the next generation.
    pub elitism: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { population_size: 100, generations: 50, fuzzy_threshold: 0.1, trials: 10, elitism: true }
    }
}

/// Everything that shapes a search besides the seed and the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub evolve: EvolveConfig,
    pub variation: VariationConfig,
    pub distance: DistanceConfig,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let e = &self.evolve;
        if e.population_size < 4 {
            return Err(EvolveError::InvalidConfig("population_size must be at least 4".into()));
        }
        if e.generations < 1 || e.trials < 1 {
            return Err(EvolveError::InvalidConfig("generations and trials must be at least 1".into()));
        }
        if !(e.fuzzy_threshold > 0.0 && e.fuzzy_threshold <= 1.0) {
            return Err(EvolveError::InvalidConfig("fuzzy_threshold must lie in (0, 1]".into()));
        }
        self.variation.validate()?;
        self.distance.validate()?;
        Ok(())
    }
}

/// Genome encoding of the wake word under `cfg`.
pub fn wake_genome(wake: &Word, cfg: &VariationConfig) -> Result<Genome, EvolveError> {
    let len = match wake {
        Word::English(w) => english_genome_len(w.as_str().chars().count(), cfg.length_ratio),
        Word::Chinese(_) => 0,
    };
    Ok(Genome::encode(wake, len)?)
}

/// Runs the search from the standard seeded population.
pub fn run<O: WakeOracle + ?Sized>(
    wake: &Word,
    oracle: &O,
    cfg: &SearchConfig,
    seed: u64,
    res: &Resources,
    exec: Exec,
) -> Result<FuzzyArchive, EvolveError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wake_g = wake_genome(wake, &cfg.variation)?;
    let population = seed_genomes(&wake_g, cfg.evolve.population_size, &mut rng, res);
    search(wake, oracle, cfg, seed, population, rng, res, exec)
}

/// Runs the search from a caller-supplied initial population.
pub fn run_with_population<O: WakeOracle + ?Sized>(
    wake: &Word,
    oracle: &O,
    cfg: &SearchConfig,
    seed: u64,
    population: Vec<Genome>,
    res: &Resources,
    exec: Exec,
) -> Result<FuzzyArchive, EvolveError> {
    cfg.validate()?;
    if population.is_empty() {
        return Err(EvolveError::InvalidConfig("initial population is empty".into()));
    }
    let rng = ChaCha8Rng::seed_from_u64(seed);
    search(wake, oracle, cfg, seed, population, rng, res, exec)
}

struct State {
    memo: HashMap<String, Objectives>,
    archive: FuzzyArchive,
}

impl State {
    fn record(&mut self, text: String, obj: Objectives, generation: usize, threshold: f64) {
        if obj.wake_rate + 1e-12 >= threshold && obj.dissimilarity > 0.0 {
            self.archive.candidates.push(FuzzyCandidate {
                word: text.clone(),
                wake_rate: obj.wake_rate,
                dissimilarity: obj.dissimilarity,
                generation,
            });
        } else if obj.wake_rate == 0.0 && obj.dissimilarity > 0.0 {
            self.archive.non_fuzzy.push(RejectedWord {
                word: text.clone(),
                dissimilarity: obj.dissimilarity,
                generation,
            });
        }
        self.memo.insert(text, obj);
    }
}

#[allow(clippy::too_many_arguments)]
fn search<O: WakeOracle + ?Sized>(
    wake: &Word,
    oracle: &O,
    cfg: &SearchConfig,
    seed: u64,
    mut population: Vec<Genome>,
    mut rng: ChaCha8Rng,
    res: &Resources,
    exec: Exec,
) -> Result<FuzzyArchive, EvolveError> {
    let ev = &cfg.evolve;
    let mut state = State {
        memo: HashMap::new(),
        archive: FuzzyArchive {
            run: RunInfo {
                seed,
                config: *cfg,
                language: wake.language(),
                wake_word: wake.text(res),
                oracle: oracle.describe(),
                queries: 0,
                evaluated: 0,
                generations: 0,
            },
            candidates: Vec::new(),
            non_fuzzy: Vec::new(),
        },
    };

    for generation in 0..ev.generations {
        let decoded: Vec<Option<(String, Word)>> = population
            .iter()
            .map(|g| g.decode(res).ok().map(|w| (w.text(res), w)))
            .collect();

        let mut seen = HashSet::new();
        let fresh: Vec<&(String, Word)> = decoded
            .iter()
            .flatten()
            .filter(|(t, _)| !state.memo.contains_key(t) && seen.insert(t.as_str()))
            .collect();
        let results = exec.map(&fresh, |(text, word)| -> Result<Objectives, EvolveError> {
            let rate = estimate_wake_rate(oracle, text, ev.trials)
                .map_err(|e| EvolveError::Oracle(e, None))?
                .rate;
            Ok(Objectives::new(rate, word_dist(word, wake, &cfg.distance, res)?))
        });

        // merged in population order so parallel evaluation never changes results
        for ((text, _), result) in fresh.iter().zip(results) {
            match result {
                Ok(obj) => {
                    state.archive.run.queries += ev.trials as u64;
                    state.archive.run.evaluated += 1;
                    state.record(text.clone(), obj, generation, ev.fuzzy_threshold);
                }
                Err(EvolveError::Oracle(e, _)) => {
                    return Err(EvolveError::Oracle(e, Some(Box::new(state.archive))));
                }
                Err(e) => return Err(e),
            }
        }
        state.archive.run.generations = generation + 1;

        let objectives: Vec<Objectives> = decoded
            .iter()
            .map(|d| d.as_ref().map_or(Objectives::new(0.0, 0.0), |(t, _)| state.memo[t]))
            .collect();
        let front = non_dominated_front(&objectives);
        #[cfg(debug_assertions)]
        debug_assert_eq!(front, pareto::front_by_scan(&objectives));

        if generation + 1 == ev.generations {
            break;
        }
        population = next_generation(&population, &objectives, &front, cfg, &mut rng, res)?;
    }
    Ok(state.archive)
}

fn next_generation(
    population: &[Genome],
    objectives: &[Objectives],
    front: &[usize],
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
    res: &Resources,
) -> Result<Vec<Genome>, EvolveError> {
    let mut parent_idx: Vec<usize> = front.to_vec();
    if parent_idx.len() < 2 {
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&i, &j| {
            let (a, b) = (objectives[i], objectives[j]);
            b.wake_rate
                .total_cmp(&a.wake_rate)
                .then(b.dissimilarity.total_cmp(&a.dissimilarity))
                .then(i.cmp(&j))
        });
        parent_idx = ranked.into_iter().take(2).collect();
    }
    let mut seen = HashSet::new();
    let parents: Vec<&Genome> =
        parent_idx.iter().map(|&i| &population[i]).filter(|g| seen.insert(*g)).collect();

    let size = cfg.evolve.population_size;
    let mut next: Vec<Genome> = Vec::with_capacity(size);
    if cfg.evolve.elitism {
        next.extend(parents.iter().take(size).map(|g| (*g).clone()));
    }
    while next.len() < size {
        let a = *parents.choose(rng).expect("at least one parent");
        let b = *parents.choose(rng).expect("at least one parent");
        let (c1, c2) = if rng.gen_bool(cfg.variation.crossover_rate) {
            crossover(a, b, rng, res)?
        } else {
            (a.clone(), b.clone())
        };
        for child in [c1, c2] {
            if next.len() < size {
                next.push(mutate(&child, &cfg.variation, rng, res));
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ConstantOracle;
    use crate::word::Language;

    fn res() -> &'static Resources {
        Resources::bundled()
    }

    fn small() -> SearchConfig {
        SearchConfig {
            evolve: EvolveConfig { population_size: 12, generations: 3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn always_false_oracle_archives_nothing() {
        let wake = Word::parse(Language::En, "alexa", res()).unwrap();
        let a = run(&wake, &ConstantOracle(false), &small(), 1, res(), Exec::Sequential).unwrap();
        assert!(a.candidates.is_empty());
        assert!(!a.non_fuzzy.is_empty());
        assert_eq!(a.run.queries, 10 * a.run.evaluated as u64);
    }

    #[test]
    fn always_true_oracle_archives_every_variant() {
        let wake = Word::parse(Language::Zh, "xiǎo dù xiǎo dù", res()).unwrap();
        let cfg = SearchConfig {
            evolve: EvolveConfig { generations: 1, ..small().evolve },
            ..Default::default()
        };
        let wg = wake_genome(&wake, &cfg.variation).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop = seed_genomes(&wg, 9, &mut rng, res());
        let a = run_with_population(&wake, &ConstantOracle(true), &cfg, 0, pop.clone(), res(), Exec::Sequential)
            .unwrap();
        let wake_text = wake.text(res());
        let variants: HashSet<String> = pop
            .iter()
            .map(|g| g.decode(res()).unwrap().text(res()))
            .filter(|t| *t != wake_text)
            .collect();
        let got: HashSet<String> = a.candidates.iter().map(|c| c.word.clone()).collect();
        assert_eq!(got, variants);
        assert!(a.candidates.iter().all(|c| c.wake_rate == 1.0 && c.dissimilarity > 0.0 && c.generation == 0));
    }

    #[test]
    fn invalid_configs_rejected() {
        let wake = Word::parse(Language::En, "alexa", res()).unwrap();
        let mut cfg = small();
        cfg.evolve.population_size = 3;
        assert!(matches!(
            run(&wake, &ConstantOracle(true), &cfg, 0, res(), Exec::Sequential),
            Err(EvolveError::InvalidConfig(_))
        ));
    }
}
