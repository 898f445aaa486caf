//! Candidate words in either language domain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::phonetics::{
    ChineseWord, LetterWord, PhoneUnit, PhonemeSequence, PhoneticsError, Resources, Unit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Zh,
    En,
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zh" | "cn" | "chinese" | "mandarin" => Ok(Language::Zh),
            "en" | "english" => Ok(Language::En),
            other => Err(format!("unknown language {other:?} (expected zh or en)")),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Zh => "zh",
            Language::En => "en",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Word {
    Chinese(ChineseWord),
    English(LetterWord),
}

impl Word {
    pub fn parse(lang: Language, text: &str, res: &Resources) -> Result<Self, PhoneticsError> {
        match lang {
            Language::Zh => res.parse_pinyin(text).map(Word::Chinese),
            Language::En => LetterWord::new(text).map(Word::English),
        }
    }

    pub fn language(&self) -> Language {
        match self {
            Word::Chinese(_) => Language::Zh,
            Word::English(_) => Language::En,
        }
    }

    /// Canonical text: tone-marked pinyin or normalized letters.
    pub fn text(&self, res: &Resources) -> String {
        match self {
            Word::Chinese(w) => res.pinyin.render(w),
            Word::English(w) => w.as_str().to_string(),
        }
    }

    /// Pronunciation units in order: initial and final per character, or
    /// phonemes with word boundaries dropped.
    pub fn units(&self, res: &Resources) -> Vec<Unit> {
        match self {
            Word::Chinese(w) => w
                .syllables
                .iter()
                .flat_map(|s| [Unit::initial(s.initial), Unit::fin(s.fin)])
                .collect(),
            Word::English(w) => res
                .g2p(w)
                .into_iter()
                .filter_map(|u| match u {
                    PhoneUnit::Phone(p) => Some(Unit::phoneme(p)),
                    PhoneUnit::Boundary => None,
                })
                .collect(),
        }
    }

    /// Pronunciation with word boundaries (English only).
    pub fn phonemes(&self, res: &Resources) -> Option<PhonemeSequence> {
        match self {
            Word::English(w) => Some(res.g2p(w)),
            Word::Chinese(_) => None,
        }
    }

    /// Classifier features: unit embeddings concatenated and zero-padded to
    /// `2 * slots` values.
    pub fn encode_features(&self, res: &Resources, slots: usize) -> Result<Vec<f64>, PhoneticsError> {
        res.encode_units(&self.units(res), slots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_features_pad_after_phonemes() {
        let r = Resources::bundled();
        let w = Word::parse(Language::En, "alexa", r).unwrap();
        let v = w.encode_features(r, 8).unwrap();
        assert_eq!(v.len(), 16);
        // six phonemes from the lexicon, none embedded exactly at the origin
        assert!(v[..12].chunks(2).all(|c| c[0] != 0.0 || c[1] != 0.0));
        assert!(v[12..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn units_skip_boundaries() {
        let r = Resources::bundled();
        let w = Word::parse(Language::En, "hey siri", r).unwrap();
        assert_eq!(w.units(r).len(), 6);
        assert_eq!(w.phonemes(r).unwrap().len(), 7);
    }

    #[test]
    fn language_from_str() {
        assert_eq!("zh".parse::<Language>().unwrap(), Language::Zh);
        assert_eq!("EN".parse::<Language>().unwrap(), Language::En);
        assert!("fr".parse::<Language>().is_err());
    }
}
