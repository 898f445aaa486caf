//! Language resources: pinyin tables, the phoneme inventory with articulatory
//! features, grapheme-to-phoneme conversion, and the 2-D unit embeddings used
//! both for the Mandarin character distance and as classifier features.
//!
//! All tables are immutable once loaded. The bundled copies are compiled in;
//! a data directory (see [`DATA_DIR_ENV`]) can override any subset of files.

mod features;
mod g2p;
mod mds;
mod pinyin;

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::FeatureTable;
pub use g2p::{G2p, LetterWord, PhoneUnit, PhonemeId, PhonemeSequence};
pub use mds::{euclid, mds_embed};
pub use pinyin::{
    ChineseWord, PinyinTables, Syllable, NUM_FINALS, NUM_INITIALS, ZERO_INITIAL, ZERO_INITIAL_SYMBOL,
};

/// Environment variable naming a directory whose TSV files replace the
/// bundled ones.
pub const DATA_DIR_ENV: &str = "FAKEWAKE_DATA_DIR";

/// Multiplier applied to the MDS coordinates of initials and finals so that
/// character distances land on a scale where `tanh(d / 100)` spreads over
/// (0, 1).
pub const PINYIN_EMBED_SCALE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum PhoneticsError {
    #[error("unknown syllable {0:?}")]
    UnknownSyllable(String),
    #[error("syllable {0:?} has no tone (expected a tone mark or digit 1-4)")]
    MissingTone(String),
    #[error("invalid initial/final combination in {syllable:?}: {initial} + {fin}")]
    InvalidCombination { syllable: String, initial: String, fin: String },
    #[error("empty word")]
    EmptyWord,
    #[error("invalid letter {0:?} (expected a-z or space)")]
    InvalidLetter(char),
    #[error("unknown phoneme {0:?}")]
    UnknownPhoneme(String),
    #[error("invalid dissimilarity matrix: {0}")]
    InvalidMatrix(String),
    #[error("word has {units} units but only {slots} slots")]
    TooManyUnits { units: usize, slots: usize },
    #[error("bad data file: {0}")]
    Data(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Splits TSV text into rows, skipping blank lines and `#` comments.
pub(crate) fn parse_tsv(text: &str) -> impl Iterator<Item = Result<Vec<String>, PhoneticsError>> + '_ {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| Ok(l.split('\t').map(|s| s.trim().to_string()).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Initial,
    Final,
    Phoneme,
}

/// A pronunciation unit: a pinyin initial (0 = zero initial), a pinyin final
/// (1-based) or a phoneme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Unit {
    pub kind: UnitKind,
    pub index: u8,
}

impl Unit {
    pub fn initial(i: u8) -> Self {
        Self { kind: UnitKind::Initial, index: i }
    }
    pub fn fin(f: u8) -> Self {
        Self { kind: UnitKind::Final, index: f }
    }
    pub fn phoneme(p: PhonemeId) -> Self {
        Self { kind: UnitKind::Phoneme, index: p.0 }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    /// Indexed by initial, 0..=23.
    pub initials: Vec<[f64; 2]>,
    /// Indexed by final - 1.
    pub finals: Vec<[f64; 2]>,
    /// Indexed by phoneme id.
    pub phonemes: Vec<[f64; 2]>,
}

const FILES: [(&str, &str); 8] = [
    ("pinyin_units.tsv", include_str!("../../data/pinyin_units.tsv")),
    ("pinyin_validity.tsv", include_str!("../../data/pinyin_validity.tsv")),
    ("initial_features.tsv", include_str!("../../data/initial_features.tsv")),
    ("final_features.tsv", include_str!("../../data/final_features.tsv")),
    ("phoneme_features.tsv", include_str!("../../data/phoneme_features.tsv")),
    ("lexicon.tsv", include_str!("../../data/lexicon.tsv")),
    ("g2p_rules.tsv", include_str!("../../data/g2p_rules.tsv")),
    ("collective.txt", include_str!("../../data/collective.txt")),
];

/// Every language table the pipeline needs.
#[derive(Debug, Clone)]
pub struct Resources {
    pub pinyin: PinyinTables,
    /// Rows aligned with initial indices 0..=23.
    pub initial_features: FeatureTable,
    /// Rows aligned with final indices 1..=37 (row = final - 1).
    pub final_features: FeatureTable,
    pub phonemes: FeatureTable,
    pub g2p: G2p,
    pub embeddings: EmbeddingTable,
    /// Dictionary words used as the collective evaluation set.
    pub collective: Vec<String>,
}

static BUNDLED: OnceLock<Resources> = OnceLock::new();

impl Resources {
    /// The compiled-in tables.
    pub fn bundled() -> &'static Resources {
        BUNDLED.get_or_init(|| {
            Self::from_sources(|name| Ok(bundled_file(name).to_string()))
                .expect("bundled data files are valid")
        })
    }

    /// Loads tables from `dir`, falling back to the bundled copy for any
    /// file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self, PhoneticsError> {
        Self::from_sources(|name| {
            let path = dir.join(name);
            if path.exists() {
                std::fs::read_to_string(&path).map_err(|source| PhoneticsError::Io {
                    path: path.display().to_string(),
                    source,
                })
            } else {
                Ok(bundled_file(name).to_string())
            }
        })
    }

    /// Honors [`DATA_DIR_ENV`] when set, otherwise returns the bundled tables.
    pub fn from_env() -> Result<Self, PhoneticsError> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) => Self::from_dir(Path::new(&dir)),
            None => Ok(Self::bundled().clone()),
        }
    }

    fn from_sources(
        read: impl Fn(&str) -> Result<String, PhoneticsError>,
    ) -> Result<Self, PhoneticsError> {
        let pinyin = PinyinTables::from_tsv(&read("pinyin_units.tsv")?, &read("pinyin_validity.tsv")?)?;
        let initial_features =
            aligned(FeatureTable::from_tsv("initial_features", &read("initial_features.tsv")?)?, pinyin.initial_symbols())?;
        let final_features =
            aligned(FeatureTable::from_tsv("final_features", &read("final_features.tsv")?)?, pinyin.final_symbols())?;
        let phonemes = FeatureTable::from_tsv("phoneme_features", &read("phoneme_features.tsv")?)?;
        if phonemes.len() > u8::MAX as usize {
            return Err(PhoneticsError::Data("too many phonemes".into()));
        }
        let g2p = G2p::from_tsv(&phonemes, &read("lexicon.tsv")?, &read("g2p_rules.tsv")?)?;
        let collective = read("collective.txt")?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();

        let scaled = |t: &FeatureTable| -> Result<Vec<[f64; 2]>, PhoneticsError> {
            Ok(mds_embed(&t.distance_matrix())?
                .into_iter()
                .map(|[x, y]| [x * PINYIN_EMBED_SCALE, y * PINYIN_EMBED_SCALE])
                .collect())
        };
        let embeddings = EmbeddingTable {
            initials: scaled(&initial_features)?,
            finals: scaled(&final_features)?,
            phonemes: mds_embed(&phonemes.distance_matrix())?,
        };
        Ok(Self { pinyin, initial_features, final_features, phonemes, g2p, embeddings, collective })
    }

    pub fn phoneme(&self, symbol: &str) -> Result<PhonemeId, PhoneticsError> {
        self.phonemes
            .lookup(symbol)
            .map(|i| PhonemeId(i as u8))
            .ok_or_else(|| PhoneticsError::UnknownPhoneme(symbol.to_string()))
    }

    /// Weighted Hamming distance between two phonemes, in [0, 1].
    pub fn phoneme_distance(&self, p: PhonemeId, q: PhonemeId) -> f64 {
        self.phonemes.distance(p.0 as usize, q.0 as usize)
    }

    pub fn parse_pinyin(&self, text: &str) -> Result<ChineseWord, PhoneticsError> {
        self.pinyin.parse_pinyin(text)
    }

    pub fn validate_syllable(&self, initial: u8, fin: u8) -> bool {
        self.pinyin.validate_syllable(initial, fin)
    }

    pub fn g2p(&self, word: &LetterWord) -> PhonemeSequence {
        self.g2p.g2p(word)
    }

    /// Like [`Resources::g2p`] but accepts raw text; blank text has an empty
    /// pronunciation.
    pub fn g2p_text(&self, text: &str) -> Result<PhonemeSequence, PhoneticsError> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.g2p.g2p(&LetterWord::new(text)?))
    }

    pub fn unit_embedding(&self, u: Unit) -> [f64; 2] {
        match u.kind {
            UnitKind::Initial => self.embeddings.initials[u.index as usize],
            UnitKind::Final => self.embeddings.finals[u.index as usize - 1],
            UnitKind::Phoneme => self.embeddings.phonemes[u.index as usize],
        }
    }

    pub fn unit_symbol(&self, u: Unit) -> &str {
        match u.kind {
            UnitKind::Initial => self.pinyin.initial_symbol(u.index),
            UnitKind::Final => self.pinyin.final_symbol(u.index),
            UnitKind::Phoneme => self.phonemes.symbol(u.index as usize),
        }
    }

    /// Feature-table distance between two units of the same kind, in [0, 1];
    /// units of different kinds are maximally distant.
    pub fn unit_distance(&self, a: Unit, b: Unit) -> f64 {
        if a.kind != b.kind {
            return 1.0;
        }
        match a.kind {
            UnitKind::Initial => self.initial_features.distance(a.index as usize, b.index as usize),
            UnitKind::Final => {
                self.final_features.distance(a.index as usize - 1, b.index as usize - 1)
            }
            UnitKind::Phoneme => self.phonemes.distance(a.index as usize, b.index as usize),
        }
    }

    /// Distance between two Mandarin characters: embedding distance of the
    /// initials plus that of the finals, plus `tone_penalty` if tones differ.
    pub fn char_distance(&self, a: Syllable, b: Syllable, tone_penalty: f64) -> f64 {
        let e = &self.embeddings;
        euclid(e.initials[a.initial as usize], e.initials[b.initial as usize])
            + euclid(e.finals[a.fin as usize - 1], e.finals[b.fin as usize - 1])
            + if a.tone != b.tone { tone_penalty } else { 0.0 }
    }

    /// Concatenated 2-D embeddings of `units`, zero-padded to `2 * slots`.
    pub fn encode_units(&self, units: &[Unit], slots: usize) -> Result<Vec<f64>, PhoneticsError> {
        if units.len() > slots {
            return Err(PhoneticsError::TooManyUnits { units: units.len(), slots });
        }
        let mut out = Vec::with_capacity(2 * slots);
        for &u in units {
            out.extend_from_slice(&self.unit_embedding(u));
        }
        out.resize(2 * slots, 0.0);
        Ok(out)
    }

    /// Root-mean-square magnitude of the embedding coordinates for `kind`
    /// (pinyin kinds are pooled). Used to express jitter in relative terms.
    pub fn embedding_rms(&self, kind: UnitKind) -> f64 {
        let coords: Vec<f64> = match kind {
            UnitKind::Phoneme => self.embeddings.phonemes.iter().flatten().copied().collect(),
            _ => self
                .embeddings
                .initials
                .iter()
                .chain(&self.embeddings.finals)
                .flatten()
                .copied()
                .collect(),
        };
        (coords.iter().map(|c| c * c).sum::<f64>() / coords.len() as f64).sqrt()
    }
}

fn bundled_file(name: &str) -> &'static str {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).expect("known data file")
}

fn aligned(table: FeatureTable, order: &[String]) -> Result<FeatureTable, PhoneticsError> {
    if table.symbols() != order {
        return Err(PhoneticsError::Data(
            "feature table rows must follow pinyin_units order".into(),
        ));
    }
    Ok(table)
}
