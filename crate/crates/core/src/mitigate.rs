//! Defenses against fuzzy words: decisive-factor screening and retraining a
//! reference detector with fuzzy words as negatives.
//!
//! The reference detector is a boosted-tree classifier over unit
//! embeddings. Its conventional training data mimics a keyword-spotting
//! corpus: jittered copies of the wake word against background noise,
//! optionally mixed with random valid words.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::{wake_genome, EvolveError, FuzzyArchive};
use crate::exec::Exec;
use crate::explain::{train_gbdt, ExplainError, GbdtParams, RankedUnit, TreeEnsemble};
use crate::genome::{random_genome, VariationConfig};
use crate::phonetics::{PhoneticsError, Resources, Unit, UnitKind};
use crate::word::{Language, Word};

#[derive(Debug, Error)]
pub enum MitigateError {
    #[error("fuzzy word set is empty")]
    EmptyFuzzySet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("collective set is empty")]
    EmptyCollective,
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Phonetics(#[from] PhoneticsError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("{0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// What the conventional negatives are made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeSource {
    /// Random valid words.
    Words,
    /// Gaussian noise vectors over every feature, standing in for recordings
    /// of background and human noise.
    Noise,
    /// Half noise, half random words.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigateConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub negatives: NegativeSource,
    /// Jitter standard deviation relative to the RMS embedding coordinate.
    pub jitter: f64,
    /// Share of each conventional class used for training.
    pub train_fraction: f64,
    pub gbdt: GbdtParams,
    /// Size of the collective set; for Mandarin it is generated.
    pub collective_size: usize,
    /// Wake rate from which archive words count as high-rate.
    pub high_rate: f64,
    /// Ranked decisive units considered by the screening report.
    pub screening_depth: usize,
}

impl Default for MitigateConfig {
    fn default() -> Self {
        Self {
            n_pos: 296,
            n_neg: 399,
            negatives: NegativeSource::Noise,
            jitter: 0.3,
            train_fraction: 0.75,
            gbdt: GbdtParams::default(),
            collective_size: 5000,
            high_rate: 0.8,
            screening_depth: 5,
        }
    }
}

impl MitigateConfig {
    pub fn validate(&self) -> Result<(), MitigateError> {
        if self.n_pos < 8 || self.n_neg < 8 {
            return Err(MitigateError::InvalidConfig("n_pos and n_neg must be at least 8".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(MitigateError::InvalidConfig("jitter must be nonnegative".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(MitigateError::InvalidConfig("train_fraction must lie in (0, 1)".into()));
        }
        if self.collective_size == 0 {
            return Err(MitigateError::InvalidConfig("collective_size must be positive".into()));
        }
        self.gbdt.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub word: String,
    /// True for the wake word.
    pub label: bool,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventional {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTriple {
    pub conventional: Conventional,
    /// Archive words, all labelled negative, with their wake rates.
    pub fuzzy: Vec<(Sample, f64)>,
    pub collective: Vec<Sample>,
    pub slots: usize,
}

/// A keyword detector: accepts when the classifier confidence is at least
/// `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub model: TreeEnsemble,
    pub threshold: f64,
}

impl DetectorModel {
    pub fn accepts(&self, x: &[f64]) -> Result<bool, MitigateError> {
        Ok(self.model.predict_proba(x)? >= self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub accuracy: f64,
    pub fuzzy_rate: f64,
}

/// Confusion-matrix rates: FPR = FP / negatives, FNR = FN / positives,
/// accuracy = 1 - (FP + FN) / N. A class absent from the test set has rate 0.
/// The fuzzy rate is left at 0.
pub fn evaluate(det: &DetectorModel, test: &[Sample]) -> Result<MitigationReport, MitigateError> {
    if test.is_empty() {
        return Err(MitigateError::EmptyTestSet);
    }
    let (mut fp, mut fneg, mut pos) = (0usize, 0usize, 0usize);
    for s in test {
        let accept = det.accepts(&s.x)?;
        if s.label {
            pos += 1;
            fneg += usize::from(!accept);
        } else {
            fp += usize::from(accept);
        }
    }
    let neg = test.len() - pos;
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(MitigationReport {
        false_positive_rate: rate(fp, neg),
        false_negative_rate: rate(fneg, pos),
        accuracy: 1.0 - (fp + fneg) as f64 / test.len() as f64,
        fuzzy_rate: 0.0,
    })
}

/// Fraction of the collective set the detector accepts.
pub fn fuzzy_rate(det: &DetectorModel, collective: &[Sample], exec: Exec) -> Result<f64, MitigateError> {
    if collective.is_empty() {
        return Err(MitigateError::EmptyCollective);
    }
    let hits = exec.try_map(collective, |s| det.accepts(&s.x))?;
    Ok(hits.iter().filter(|&&a| a).count() as f64 / collective.len() as f64)
}

/// Fraction of `words` containing at least one of the first `n` ranked units
/// anywhere.
pub fn screening_coverage(words: &[Vec<Unit>], ranked: &[Unit], n: usize) -> f64 {
    if words.is_empty() {
        return 0.0;
    }
    let top = &ranked[..n.min(ranked.len())];
    words.iter().filter(|w| escalate(w, top)).count() as f64 / words.len() as f64
}

/// Whether a word contains any of the screened units and should be passed
/// to heavier verification.
pub fn escalate(units: &[Unit], screened: &[Unit]) -> bool {
    units.iter().any(|u| screened.contains(u))
}

fn random_words(wake: &Word, count: usize, exclude: &HashSet<String>, rng: &mut ChaCha8Rng, res: &Resources) -> Vec<Word> {
    let template = wake_genome(wake, &VariationConfig::default()).expect("wake word encodes");
    let mut seen = exclude.clone();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < count * 100 {
        attempts += 1;
        let w = random_genome(&template, rng, res).decode(res).expect("random genomes decode");
        if seen.insert(w.text(res)) {
            out.push(w);
        }
    }
    out
}

/// `n_pos` jittered copies of the wake word and `n_neg` negatives drawn per
/// `cfg.negatives`,
/// each class split `ceil(train_fraction * n)` / rest.
///
/// Jitter is Gaussian with standard deviation `jitter` times the RMS
/// embedding coordinate and is applied to the occupied unit slots only.
pub fn synthesize_conventional(
    wake: &Word,
    cfg: &MitigateConfig,
    slots: usize,
    exclude: &HashSet<String>,
    seed: u64,
    res: &Resources,
) -> Result<Conventional, MitigateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wake_text = wake.text(res);
    let units = wake.units(res);
    let base = res.encode_units(&units, slots)?;
    let kind = units.first().map_or(UnitKind::Phoneme, |u| u.kind);
    let sigma = cfg.jitter * res.embedding_rms(kind);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let occupied = 2 * units.len();

    let positives: Vec<Sample> = (0..cfg.n_pos)
        .map(|_| {
            let mut x = base.clone();
            if sigma > 0.0 {
                for v in &mut x[..occupied] {
                    *v += noise.sample(&mut rng);
                }
            }
            Sample { word: wake_text.clone(), label: true, x }
        })
        .collect();

    let mut exclude = exclude.clone();
    exclude.insert(wake_text);
    let n_noise = match cfg.negatives {
        NegativeSource::Words => 0,
        NegativeSource::Noise => cfg.n_neg,
        NegativeSource::Mixed => cfg.n_neg / 2,
    };
    let rms = Normal::new(0.0, res.embedding_rms(kind)).expect("finite rms");
    let mut negatives: Vec<Sample> = (0..n_noise)
        .map(|_| Sample { word: "<noise>".into(), label: false, x: (0..2 * slots).map(|_| rms.sample(&mut rng)).collect() })
        .collect();
    let words = random_words(wake, cfg.n_neg - n_noise, &exclude, &mut rng, res)
        .into_iter()
        .filter_map(|w| {
            let u = w.units(res);
            (u.len() <= slots).then(|| -> Result<Sample, MitigateError> {
                Ok(Sample { word: w.text(res), label: false, x: res.encode_units(&u, slots)? })
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    negatives.extend(words);

    let split = |v: Vec<Sample>| {
        let k = (cfg.train_fraction * v.len() as f64).ceil() as usize;
        let mut v = v;
        let test = v.split_off(k.min(v.len()));
        (v, test)
    };
    let (mut train, mut test) = split(positives);
    let (tn, te) = split(negatives);
    train.extend(tn);
    test.extend(te);
    Ok(Conventional { train, test })
}

fn train(samples: &[Sample], params: &GbdtParams) -> Result<DetectorModel, MitigateError> {
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let y: Vec<bool> = samples.iter().map(|s| s.label).collect();
    Ok(DetectorModel { model: train_gbdt(&x, &y, params)?, threshold: 0.5 })
}

pub fn train_original(conventional_train: &[Sample], params: &GbdtParams) -> Result<DetectorModel, MitigateError> {
    train(conventional_train, params)
}

/// Retrains from scratch on the conventional training data plus the fuzzy
/// words as negatives, with the same hyperparameters.
pub fn strengthen(
    original: &DetectorModel,
    fuzzy: &[Sample],
    conventional_train: &[Sample],
    params: &GbdtParams,
) -> Result<DetectorModel, MitigateError> {
    if fuzzy.is_empty() {
        return Err(MitigateError::EmptyFuzzySet);
    }
    let mut data = conventional_train.to_vec();
    data.extend(fuzzy.iter().map(|s| Sample { label: false, ..s.clone() }));
    let m = train(&data, params)?;
    debug_assert_eq!(m.model.n_features, original.model.n_features);
    Ok(DetectorModel { threshold: original.threshold, ..m })
}

/// Builds the conventional, fuzzy and collective sets for an archive.
///
/// The collective set is the bundled dictionary for English and seeded random
/// valid words for Mandarin; it never shares a word with the other two sets.
pub fn build_triple(
    archive: &FuzzyArchive,
    cfg: &MitigateConfig,
    seed: u64,
    res: &Resources,
) -> Result<DatasetTriple, MitigateError> {
    if archive.candidates.is_empty() {
        return Err(MitigateError::EmptyFuzzySet);
    }
    let lang = archive.run.language;
    let wake = Word::parse(lang, &archive.run.wake_word, res)?;
    let fuzzy_words = archive
        .candidates
        .iter()
        .map(|c| Ok((Word::parse(lang, &c.word, res)?, c.wake_rate)))
        .collect::<Result<Vec<_>, MitigateError>>()?;
    let slots = fuzzy_words
        .iter()
        .map(|(w, _)| w.units(res).len())
        .chain([wake.units(res).len()])
        .max()
        .unwrap_or(1);

    let fuzzy_texts: HashSet<String> = fuzzy_words.iter().map(|(w, _)| w.text(res)).collect();
    let conventional = synthesize_conventional(&wake, cfg, slots, &fuzzy_texts, seed, res)?;
    let fuzzy = fuzzy_words
        .iter()
        .map(|(w, rate)| {
            Ok((Sample { word: w.text(res), label: false, x: res.encode_units(&w.units(res), slots)? }, *rate))
        })
        .collect::<Result<Vec<_>, MitigateError>>()?;

    let mut taken: HashSet<String> = fuzzy_texts;
    taken.extend(conventional.train.iter().chain(&conventional.test).map(|s| s.word.clone()));
    let candidates: Vec<Word> = match lang {
        Language::En => res
            .collective
            .iter()
            .filter_map(|t| Word::parse(Language::En, t, res).ok())
            .filter(|w| !taken.contains(&w.text(res)))
            .take(cfg.collective_size)
            .collect(),
        Language::Zh => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f_6c6c_6563_7469);
            random_words(&wake, cfg.collective_size, &taken, &mut rng, res)
        }
    };
    let mut seen = HashSet::new();
    let collective = candidates
        .into_iter()
        .filter(|w| seen.insert(w.text(res)))
        .filter_map(|w| {
            let u = w.units(res);
            (u.len() <= slots).then(|| res.encode_units(&u, slots).map(|x| Sample { word: w.text(res), label: false, x }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if collective.is_empty() {
        return Err(MitigateError::EmptyCollective);
    }
    Ok(DatasetTriple { conventional, fuzzy, collective, slots })
}

impl DatasetTriple {
    /// Writes `conventional/{train,test}.tsv`, `fuzzy.tsv` and
    /// `collective.txt` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        let conv = dir.join("conventional");
        std::fs::create_dir_all(&conv)?;
        for (name, set) in [("train.tsv", &self.conventional.train), ("test.tsv", &self.conventional.test)] {
            let mut s = String::from("word\tlabel\n");
            for x in set {
                let _ = writeln!(s, "{}\t{}", x.word, u8::from(x.label));
            }
            std::fs::write(conv.join(name), s)?;
        }
        let mut s = String::from("word\twake_rate\n");
        for (x, rate) in &self.fuzzy {
            let _ = writeln!(s, "{}\t{rate}", x.word);
        }
        std::fs::write(dir.join("fuzzy.tsv"), s)?;
        let mut s = String::new();
        for x in &self.collective {
            let _ = writeln!(s, "{}", x.word);
        }
        std::fs::write(dir.join("collective.txt"), s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub n: usize,
    pub units: Vec<String>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationSummary {
    pub wake_word: String,
    pub seed: u64,
    pub original: MitigationReport,
    pub strengthened: MitigationReport,
    /// Share of archive words with a high wake rate that the strengthened
    /// detector rejects.
    pub high_rate_rejection: f64,
    pub high_rate_words: usize,
    pub conventional_train: usize,
    pub conventional_test: usize,
    pub fuzzy_words: usize,
    pub collective_words: usize,
    #[serde(default)]
    pub screening: Vec<ScreeningRow>,
}

impl MitigationSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Side-by-side comparison of the two detectors.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22}{:>12}{:>14}", "metric", "original", "strengthened");
        let (o, t) = (&self.original, &self.strengthened);
        for (name, a, b) in [
            ("false positive rate", o.false_positive_rate, t.false_positive_rate),
            ("false negative rate", o.false_negative_rate, t.false_negative_rate),
            ("accuracy", o.accuracy, t.accuracy),
            ("fuzzy rate", o.fuzzy_rate, t.fuzzy_rate),
        ] {
            let _ = writeln!(s, "{name:<22}{:>11.2}%{:>13.2}%", 100.0 * a, 100.0 * b);
        }
        let _ = writeln!(
            s,
            "high-rate fuzzy words rejected: {:.2}% of {}",
            100.0 * self.high_rate_rejection,
            self.high_rate_words
        );
        for r in &self.screening {
            let _ = writeln!(s, "top-{} screening ({}): {:.2}%", r.n, r.units.join(" "), 100.0 * r.coverage);
        }
        s
    }
}

/// Coverage of the archive's fuzzy words by the top `n` ranked units, for
/// `n` in `1..=depth`.
pub fn screening_report(
    archive: &FuzzyArchive,
    ranking: &[RankedUnit],
    depth: usize,
    res: &Resources,
) -> Result<Vec<ScreeningRow>, MitigateError> {
    let lang = archive.run.language;
    let words = archive
        .candidates
        .iter()
        .map(|c| Ok(Word::parse(lang, &c.word, res)?.units(res)))
        .collect::<Result<Vec<_>, MitigateError>>()?;
    let ranked: Vec<Unit> = ranking.iter().map(|r| r.unit).collect();
    Ok((1..=depth.min(ranked.len()))
        .map(|n| ScreeningRow {
            n,
            units: ranking[..n].iter().map(|r| r.symbol.clone()).collect(),
            coverage: screening_coverage(&words, &ranked, n),
        })
        .collect())
}

pub struct Mitigation {
    pub triple: DatasetTriple,
    pub original: DetectorModel,
    pub strengthened: DetectorModel,
    pub summary: MitigationSummary,
}

/// Trains the original and strengthened detectors for an archive and
/// measures both.
pub fn run_mitigation(
    archive: &FuzzyArchive,
    cfg: &MitigateConfig,
    seed: u64,
    res: &Resources,
    exec: Exec,
) -> Result<Mitigation, MitigateError> {
    cfg.validate()?;
    let triple = build_triple(archive, cfg, seed, res)?;
    let conv = &triple.conventional;
    let fuzzy: Vec<Sample> = triple.fuzzy.iter().map(|(s, _)| s.clone()).collect();
    let (original, strengthened) = {
        let o = train_original(&conv.train, &cfg.gbdt)?;
        let s = strengthen(&o, &fuzzy, &conv.train, &cfg.gbdt)?;
        (o, s)
    };
    let measure = |d: &DetectorModel| -> Result<MitigationReport, MitigateError> {
        Ok(MitigationReport { fuzzy_rate: fuzzy_rate(d, &triple.collective, exec)?, ..evaluate(d, &conv.test)? })
    };
    let high: Vec<&Sample> =
        triple.fuzzy.iter().filter(|(_, r)| *r + 1e-9 >= cfg.high_rate).map(|(s, _)| s).collect();
    let rejected = exec.try_map(&high, |s| strengthened.accepts(&s.x).map(|a| !a))?;
    let summary = MitigationSummary {
        wake_word: archive.run.wake_word.clone(),
        seed,
        original: measure(&original)?,
        strengthened: measure(&strengthened)?,
        high_rate_rejection: if high.is_empty() {
            1.0
        } else {
            rejected.iter().filter(|&&r| r).count() as f64 / high.len() as f64
        },
        high_rate_words: high.len(),
        conventional_train: conv.train.len(),
        conventional_test: conv.test.len(),
        fuzzy_words: fuzzy.len(),
        collective_words: triple.collective.len(),
        screening: Vec::new(),
    };
    Ok(Mitigation { triple, original, strengthened, summary })
}
