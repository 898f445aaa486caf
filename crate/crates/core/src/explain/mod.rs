//! Why do fuzzy words wake the detector?
//!
//! A boosted-tree proxy is trained to separate fuzzy from non-fuzzy words
//! over unit embeddings. TreeSHAP splits each prediction into per-feature
//! contributions; the smallest set of top features holding a share `beta`
//! of the positive contribution names the decisive units of a word.

mod gbdt;
mod shap;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::FuzzyArchive;
use crate::exec::Exec;
use crate::phonetics::{euclid, PhoneticsError, Resources, Unit};
use crate::word::Word;

pub use gbdt::{train_gbdt, GbdtParams, Node, Tree, TreeEnsemble};
pub use shap::{shap_values, tree_shap, ShapExplanation};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("feature vector has length {got}, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training data contains a single class")]
    DegenerateData,
    #[error("no {0} samples")]
    EmptyClass(&'static str),
    #[error("each class needs at least {needed} samples for {needed}-fold validation, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("explanation has no positive contributions")]
    NoPositiveContributions,
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Phonetics(#[from] PhoneticsError),
    #[error("{0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub gbdt: GbdtParams,
    /// Share of the positive contribution the decisive features must hold.
    pub beta: f64,
    pub folds: usize,
    /// Unit slots per word; the longest word in the data when unset.
    pub slots: Option<usize>,
    /// Largest allowed majority-to-minority class ratio.
    pub max_class_ratio: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { gbdt: GbdtParams::default(), beta: 0.8, folds: 10, slots: None, max_class_ratio: 3 }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        self.gbdt.validate()?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ExplainError::InvalidConfig(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.folds < 2 || self.max_class_ratio < 1 {
            return Err(ExplainError::InvalidConfig("folds must be at least 2 and max_class_ratio at least 1".into()));
        }
        Ok(())
    }
}

/// Feature matrix with labels (fuzzy = true) and the words behind each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub words: Vec<String>,
    /// Units of each word, aligned with the feature slots.
    pub units: Vec<Vec<Unit>>,
    pub slots: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    fn subset(&self, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<bool>) {
        (rows.iter().map(|&i| self.x[i].clone()).collect(), rows.iter().map(|&i| self.y[i]).collect())
    }
}

/// Keeps every member of the smaller class and at most `ratio` times as many
/// of the larger one, chosen by a seeded shuffle; original order is kept.
fn cap_ratio(pos: usize, neg: usize, ratio: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let pick = |n: usize, cap: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        if n > cap {
            idx.shuffle(rng);
            idx.truncate(cap);
            idx.sort_unstable();
        }
        idx
    };
    let p = pick(pos, ratio.saturating_mul(neg), rng);
    let n = pick(neg, ratio.saturating_mul(pos), rng);
    (p, n)
}

/// Encodes fuzzy words as positives and non-fuzzy words as negatives, with
/// the class ratio capped.
pub fn build_dataset(
    fuzzy: &[Word],
    non_fuzzy: &[Word],
    cfg: &ExplainConfig,
    seed: u64,
    res: &Resources,
) -> Result<Dataset, ExplainError> {
    if fuzzy.is_empty() {
        return Err(ExplainError::EmptyClass("fuzzy"));
    }
    if non_fuzzy.is_empty() {
        return Err(ExplainError::EmptyClass("non-fuzzy"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pi, ni) = cap_ratio(fuzzy.len(), non_fuzzy.len(), cfg.max_class_ratio, &mut rng);
    let chosen: Vec<(&Word, bool)> =
        pi.iter().map(|&i| (&fuzzy[i], true)).chain(ni.iter().map(|&i| (&non_fuzzy[i], false))).collect();
    let units: Vec<Vec<Unit>> = chosen.iter().map(|(w, _)| w.units(res)).collect();
    let slots = cfg.slots.unwrap_or_else(|| units.iter().map(Vec::len).max().unwrap_or(0).max(1));
    let x = units.iter().map(|u| res.encode_units(u, slots)).collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        x,
        y: chosen.iter().map(|&(_, l)| l).collect(),
        words: chosen.iter().map(|(w, _)| w.text(res)).collect(),
        units,
        slots,
    })
}

/// Dataset from an archive: fuzzy candidates against the rejected words.
pub fn dataset_from_archive(
    archive: &FuzzyArchive,
    cfg: &ExplainConfig,
    seed: u64,
    res: &Resources,
) -> Result<Dataset, ExplainError> {
    let lang = archive.run.language;
    let parse = |w: &str| Word::parse(lang, w, res);
    let fuzzy = archive.candidates.iter().map(|c| parse(&c.word)).collect::<Result<Vec<_>, _>>()?;
    let non = archive.non_fuzzy.iter().map(|c| parse(&c.word)).collect::<Result<Vec<_>, _>>()?;
    build_dataset(&fuzzy, &non, cfg, seed, res)
}

/// Mean held-out accuracy over stratified folds. Each class is shuffled with
/// the seed and dealt round-robin into folds.
pub fn cross_validate(
    data: &Dataset,
    folds: usize,
    params: &GbdtParams,
    seed: u64,
    exec: Exec,
) -> Result<f64, ExplainError> {
    if folds < 2 {
        return Err(ExplainError::InvalidConfig("at least two folds are needed".into()));
    }
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data.y[i]).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| !data.y[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(ExplainError::DegenerateData);
    }
    let smallest = pos.len().min(neg.len());
    if smallest < folds {
        return Err(ExplainError::TooFewSamples { needed: folds, got: smallest });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; data.len()];
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        for (k, i) in class.into_iter().enumerate() {
            fold_of[i] = k % folds;
        }
    }
    let accs = exec.try_map(&(0..folds).collect::<Vec<_>>(), |&f| -> Result<f64, ExplainError> {
        let train: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
        let (xt, yt) = data.subset(&train);
        let (xv, yv) = data.subset(&test);
        train_gbdt(&xt, &yt, params)?.accuracy(&xv, &yv)
    })?;
    Ok(accs.iter().sum::<f64>() / folds as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisiveFactor {
    /// Unit slot in the word.
    pub position: usize,
    pub unit: Unit,
    /// Sum of the unit's feature contributions inside the decisive set.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisiveFactorSet {
    /// Decisive units, largest contribution first.
    pub factors: Vec<DecisiveFactor>,
    /// Indices of the decisive features, largest contribution first.
    pub features: Vec<usize>,
    pub beta: f64,
}

/// Smallest prefix of the positively contributing features, ranked by
/// contribution, whose share of the total positive contribution reaches
/// `beta`; features map to units as consecutive coordinate pairs.
pub fn decisive_factors(
    expl: &ShapExplanation,
    units: &[Unit],
    beta: f64,
) -> Result<DecisiveFactorSet, ExplainError> {
    let mut ranked: Vec<usize> = (0..expl.phi.len()).filter(|&j| expl.phi[j] > 0.0).collect();
    if ranked.is_empty() {
        return Err(ExplainError::NoPositiveContributions);
    }
    ranked.sort_by(|&a, &b| expl.phi[b].total_cmp(&expl.phi[a]).then(a.cmp(&b)));
    let total: f64 = ranked.iter().map(|&j| expl.phi[j]).sum();
    let mut acc = 0.0;
    let mut take = ranked.len();
    for (k, &j) in ranked.iter().enumerate() {
        acc += expl.phi[j];
        if acc >= beta * total - 1e-12 * total {
            take = k + 1;
            break;
        }
    }
    ranked.truncate(take);

    let mut per_slot: BTreeMap<usize, f64> = BTreeMap::new();
    for &j in &ranked {
        if j / 2 < units.len() {
            *per_slot.entry(j / 2).or_default() += expl.phi[j];
        }
    }
    let mut factors: Vec<DecisiveFactor> = per_slot
        .into_iter()
        .map(|(position, contribution)| DecisiveFactor { position, unit: units[position], contribution })
        .collect();
    factors.sort_by(|a, b| b.contribution.total_cmp(&a.contribution).then(a.position.cmp(&b.position)));
    Ok(DecisiveFactorSet { factors, features: ranked, beta })
}

/// A unit ranked by its decisive contribution summed over many words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedUnit {
    pub unit: Unit,
    pub symbol: String,
    pub total: f64,
    /// Number of words in which the unit is decisive.
    pub words: usize,
}

/// Aggregates decisive factors by unit identity, largest total first.
pub fn rank_units(sets: &[DecisiveFactorSet], res: &Resources) -> Vec<RankedUnit> {
    let mut agg: BTreeMap<Unit, (f64, usize)> = BTreeMap::new();
    for s in sets {
        let mut seen = Vec::new();
        for f in &s.factors {
            let e = agg.entry(f.unit).or_default();
            e.0 += f.contribution;
            if !seen.contains(&f.unit) {
                seen.push(f.unit);
                e.1 += 1;
            }
        }
    }
    let mut out: Vec<RankedUnit> = agg
        .into_iter()
        .map(|(unit, (total, words))| RankedUnit { unit, symbol: res.unit_symbol(unit).to_string(), total, words })
        .collect();
    out.sort_by(|a, b| b.total.total_cmp(&a.total).then(a.unit.cmp(&b.unit)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    High,
    Medium,
    Low,
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Similarity::High => "high",
            Similarity::Medium => "medium",
            Similarity::Low => "low",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedFactor {
    pub word: usize,
    pub position: usize,
    pub unit: Unit,
    pub contribution: f64,
    /// Embedding distance to the wake-word unit in the same slot, if any.
    pub difference: Option<f64>,
    pub group: Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGrouping {
    pub factors: Vec<GroupedFactor>,
    pub mean: f64,
    /// Standard deviation of the mean-centred differences.
    pub delta: f64,
}

/// Classifies every decisive factor by how far its unit lies from the
/// wake-word unit in the same slot. Differences are centred on their mean;
/// with `delta` their standard deviation, a centred difference up to
/// `delta` is high similarity, up to `2 * delta` medium, beyond that low.
/// Factors past the end of the wake word are low.
pub fn group_factors(sets: &[DecisiveFactorSet], wake_units: &[Unit], res: &Resources) -> FactorGrouping {
    let mut raw = Vec::new();
    for (w, s) in sets.iter().enumerate() {
        for f in &s.factors {
            let diff = wake_units
                .get(f.position)
                .map(|&t| euclid(res.unit_embedding(f.unit), res.unit_embedding(t)));
            raw.push((w, f, diff));
        }
    }
    let diffs: Vec<f64> = raw.iter().filter_map(|r| r.2).collect();
    let n = diffs.len().max(1) as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let delta = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let factors = raw
        .into_iter()
        .map(|(word, f, difference)| {
            let group = match difference.map(|d| d - mean) {
                Some(c) if c <= delta => Similarity::High,
                Some(c) if c <= 2.0 * delta => Similarity::Medium,
                _ => Similarity::Low,
            };
            GroupedFactor { word, position: f.position, unit: f.unit, contribution: f.contribution, difference, group }
        })
        .collect();
    FactorGrouping { factors, mean, delta }
}

impl FactorGrouping {
    /// Mean contribution per (position, group).
    pub fn contribution_table(&self) -> BTreeMap<(usize, Similarity), (f64, usize)> {
        let mut t: BTreeMap<(usize, Similarity), (f64, usize)> = BTreeMap::new();
        for f in &self.factors {
            let e = t.entry((f.position, f.group)).or_default();
            e.0 += f.contribution;
            e.1 += 1;
        }
        for v in t.values_mut() {
            v.0 /= v.1 as f64;
        }
        t
    }
}

/// Everything the explanation stage produces for one archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub wake_word: String,
    pub cv_accuracy: f64,
    pub fuzzy_samples: usize,
    pub non_fuzzy_samples: usize,
    pub slots: usize,
    pub ranking: Vec<RankedUnit>,
    pub delta: f64,
    /// Per-word decisive factors: (word, factors).
    pub words: Vec<(String, DecisiveFactorSet)>,
    #[serde(skip)]
    pub grouping: Option<FactorGrouping>,
}

impl ExplainReport {
    /// One row per decisive factor: word, unit, position, contribution, group.
    pub fn factors_tsv(&self, res: &Resources) -> String {
        let mut s = String::from("word\tunit\tposition\tcontribution\tgroup\n");
        let groups = self.grouping.as_ref().map(|g| &g.factors);
        let mut k = 0;
        for (word, set) in &self.words {
            for f in &set.factors {
                let group = groups.and_then(|g| g.get(k)).map_or("-".to_string(), |g| g.group.to_string());
                k += 1;
                let _ = writeln!(s, "{word}\t{}\t{}\t{:.6}\t{group}", res.unit_symbol(f.unit), f.position, f.contribution);
            }
        }
        s
    }

    /// Mean decisive contribution per slot and similarity group.
    pub fn grouping_tsv(&self) -> String {
        let mut s = String::from("position\tgroup\tmean_contribution\tcount\n");
        if let Some(g) = &self.grouping {
            for ((pos, group), (mean, count)) in g.contribution_table() {
                let _ = writeln!(s, "{pos}\t{group}\t{mean:.6}\t{count}");
            }
        }
        s
    }

    pub fn ranking_tsv(&self) -> String {
        let mut s = String::from("rank\tunit\ttotal_contribution\twords\n");
        for (i, r) in self.ranking.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{:.6}\t{}", i + 1, r.symbol, r.total, r.words);
        }
        s
    }
}

/// The trained proxy together with its report.
pub struct Explanation {
    pub model: TreeEnsemble,
    pub dataset: Dataset,
    pub report: ExplainReport,
}

/// Full explanation pipeline for an archive: dataset, cross-validation,
/// final proxy fit, decisive factors of every fuzzy word in the dataset,
/// unit ranking and similarity grouping.
pub fn explain_archive(
    archive: &FuzzyArchive,
    cfg: &ExplainConfig,
    seed: u64,
    res: &Resources,
    exec: Exec,
) -> Result<Explanation, ExplainError> {
    cfg.validate()?;
    let data = dataset_from_archive(archive, cfg, seed, res)?;
    let cv_accuracy = cross_validate(&data, cfg.folds, &cfg.gbdt, seed, exec)?;
    let model = train_gbdt(&data.x, &data.y, &cfg.gbdt)?;

    let fuzzy_rows: Vec<usize> = (0..data.len()).filter(|&i| data.y[i]).collect();
    let sets = exec.map(&fuzzy_rows, |&i| {
        shap_values(&model, &data.x[i])
            .and_then(|e| decisive_factors(&e, &data.units[i], cfg.beta))
            .ok()
            .map(|s| (data.words[i].clone(), s))
    });
    let words: Vec<(String, DecisiveFactorSet)> = sets.into_iter().flatten().collect();
    let only_sets: Vec<DecisiveFactorSet> = words.iter().map(|(_, s)| s.clone()).collect();
    let wake = Word::parse(archive.run.language, &archive.run.wake_word, res)?;
    let grouping = group_factors(&only_sets, &wake.units(res), res);

    let report = ExplainReport {
        wake_word: archive.run.wake_word.clone(),
        cv_accuracy,
        fuzzy_samples: data.positives(),
        non_fuzzy_samples: data.len() - data.positives(),
        slots: data.slots,
        ranking: rank_units(&only_sets, res),
        delta: grouping.delta,
        words,
        grouping: Some(grouping),
    };
    Ok(Explanation { model, dataset: data, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::word::Language;

    fn res() -> &'static Resources {
        Resources::bundled()
    }

    fn expl(phi: Vec<f64>) -> ShapExplanation {
        ShapExplanation { margin: phi.iter().sum(), phi, base: 0.0 }
    }

    fn units(n: usize) -> Vec<Unit> {
        (0..n as u8).map(Unit::initial).collect()
    }

    #[test]
    fn decisive_prefix() {
        let e = expl(vec![0.1, 0.5, -0.4, 0.3, 0.1, 0.0]);
        let d = decisive_factors(&e, &units(3), 0.8).unwrap();
        assert_eq!(d.features, vec![1, 3]);
        assert_eq!(d.factors.len(), 2);
        assert_eq!(d.factors[0].position, 0);
        assert!((d.factors[0].contribution - 0.5).abs() < 1e-15);
        assert_eq!(d.factors[1].position, 1);
        let all = decisive_factors(&e, &units(3), 1.0).unwrap();
        assert_eq!(all.features, vec![1, 3, 0, 4]);
        assert!(matches!(
            decisive_factors(&expl(vec![-1.0, 0.0]), &units(1), 0.8),
            Err(ExplainError::NoPositiveContributions)
        ));
    }

    #[test]
    fn dataset_shapes_and_ratio_cap() {
        let r = res();
        let wd = |t: &str| Word::parse(Language::En, t, r).unwrap();
        let fuzzy: Vec<Word> = ["alexi", "elexa", "olexa", "ilexa", "alexo"].iter().map(|t| wd(t)).collect();
        let pool = ["dog", "cat", "tree", "house", "river", "stone", "paper", "cloud", "light", "sound"];
        let non: Vec<Word> = pool.iter().cycle().take(100).map(|t| wd(t)).collect();
        let cfg = ExplainConfig { slots: Some(8), ..Default::default() };
        let d = build_dataset(&fuzzy, &non, &cfg, 3, r).unwrap();
        assert_eq!((d.positives(), d.len()), (5, 20));
        assert!(d.x.iter().all(|x| x.len() == 16));
        let d = build_dataset(&fuzzy, &non[..10], &cfg, 3, r).unwrap();
        assert_eq!((d.positives(), d.len()), (5, 15));
        assert!(matches!(build_dataset(&[], &non, &cfg, 3, r), Err(ExplainError::EmptyClass(_))));
    }

    #[test]
    fn grouping_rules() {
        let r = res();
        let wake = vec![Unit::initial(1), Unit::fin(1)];
        let set = |u: Unit, pos| DecisiveFactorSet {
            factors: vec![DecisiveFactor { position: pos, unit: u, contribution: 1.0 }],
            features: vec![],
            beta: 0.8,
        };
        let same = group_factors(&[set(Unit::initial(1), 0), set(Unit::fin(1), 1)], &wake, r);
        assert_eq!(same.delta, 0.0);
        assert!(same.factors.iter().all(|f| f.group == Similarity::High));
        let beyond = group_factors(&[set(Unit::initial(3), 5)], &wake, r);
        assert_eq!(beyond.factors[0].group, Similarity::Low);
    }

    #[test]
    fn cv_on_separable_and_tiny_sets() {
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        // a wide gap between the classes so every fold can place the cut
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 + if y[i] { 50.0 } else { 0.0 }, (i % 7) as f64]).collect();
        let d = Dataset { x, y, words: vec![String::new(); 40], units: vec![vec![]; 40], slots: 1 };
        assert_eq!(cross_validate(&d, 10, &GbdtParams::default(), 1, Exec::Sequential).unwrap(), 1.0);
        let small = Dataset {
            x: d.x[15..25].to_vec(),
            y: d.y[15..25].to_vec(),
            words: vec![String::new(); 10],
            units: vec![vec![]; 10],
            slots: 1,
        };
        assert!(matches!(
            cross_validate(&small, 10, &GbdtParams::default(), 1, Exec::Sequential),
            Err(ExplainError::TooFewSamples { .. })
        ));
    }
}
