//! Letter words and grapheme-to-phoneme conversion: lexicon lookup per token
//! with a longest-match rule fallback for non-dictionary tokens.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{parse_tsv, FeatureTable, PhoneticsError};

/// Index into the phoneme inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhonemeId(pub u8);

/// Element of a pronunciation: a phoneme or a word boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhoneUnit {
    Phone(PhonemeId),
    Boundary,
}

pub type PhonemeSequence = Vec<PhoneUnit>;

/// Lowercase letters separated by single spaces, no leading/trailing space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LetterWord(String);

impl LetterWord {
    pub fn new(text: &str) -> Result<Self, PhoneticsError> {
        let lower = text.to_lowercase();
        if let Some(c) = lower.chars().find(|c| !(c.is_ascii_lowercase() || *c == ' ')) {
            return Err(PhoneticsError::InvalidLetter(c));
        }
        let norm = lower.split_whitespace().collect::<Vec<_>>().join(" ");
        if norm.is_empty() {
            return Err(PhoneticsError::EmptyWord);
        }
        Ok(Self(norm))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }
}

impl TryFrom<String> for LetterWord {
    type Error = PhoneticsError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s)
    }
}

impl From<LetterWord> for String {
    fn from(w: LetterWord) -> String {
        w.0
    }
}

impl fmt::Display for LetterWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone)]
struct Rule {
    grapheme: String,
    at_start: bool,
    at_end: bool,
    phonemes: Vec<PhonemeId>,
    priority: i32,
}

#[derive(Debug, Clone)]
pub struct G2p {
    lexicon: HashMap<String, Vec<PhonemeId>>,
    rules: Vec<Rule>,
}

fn phoneme_list(inv: &FeatureTable, text: &str) -> Result<Vec<PhonemeId>, PhoneticsError> {
    if text == "-" {
        return Ok(Vec::new());
    }
    text.split_whitespace()
        .map(|p| {
            inv.lookup(p)
                .map(|i| PhonemeId(i as u8))
                .ok_or_else(|| PhoneticsError::UnknownPhoneme(p.to_string()))
        })
        .collect()
}

impl G2p {
    pub fn from_tsv(inv: &FeatureTable, lexicon: &str, rules: &str) -> Result<Self, PhoneticsError> {
        let mut lex = HashMap::new();
        for row in parse_tsv(lexicon) {
            let row = row?;
            if row.len() < 2 {
                return Err(PhoneticsError::Data(format!("lexicon: short row {row:?}")));
            }
            lex.insert(row[0].to_lowercase(), phoneme_list(inv, &row[1])?);
        }
        let mut parsed = Vec::new();
        for row in parse_tsv(rules) {
            let row = row?;
            if row.len() < 3 {
                return Err(PhoneticsError::Data(format!("g2p_rules: short row {row:?}")));
            }
            let mut g = row[0].as_str();
            let at_start = g.starts_with('^');
            if at_start {
                g = &g[1..];
            }
            let at_end = g.ends_with('$');
            if at_end {
                g = &g[..g.len() - 1];
            }
            if g.is_empty() || !g.bytes().all(|b| b.is_ascii_lowercase()) {
                return Err(PhoneticsError::Data(format!("g2p_rules: bad grapheme {}", row[0])));
            }
            let priority = row[2]
                .parse()
                .map_err(|_| PhoneticsError::Data(format!("g2p_rules: bad priority {}", row[2])))?;
            parsed.push(Rule {
                grapheme: g.to_string(),
                at_start,
                at_end,
                phonemes: phoneme_list(inv, &row[1])?,
                priority,
            });
        }
        Ok(Self { lexicon: lex, rules: parsed })
    }

    pub fn lexicon_entry(&self, token: &str) -> Option<&[PhonemeId]> {
        self.lexicon.get(token).map(Vec::as_slice)
    }

    pub fn lexicon_words(&self) -> impl Iterator<Item = &str> {
        self.lexicon.keys().map(String::as_str)
    }

    /// Rule-based pronunciation of a single token, ignoring the lexicon.
    pub fn fallback(&self, token: &str) -> Vec<PhonemeId> {
        let bytes = token.as_bytes();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            let rest = &token[pos..];
            let best = self
                .rules
                .iter()
                .filter(|r| {
                    rest.starts_with(r.grapheme.as_str())
                        && (!r.at_start || pos == 0)
                        && (!r.at_end || pos + r.grapheme.len() == bytes.len())
                })
                .min_by_key(|r| (std::cmp::Reverse(r.grapheme.len()), r.priority));
            match best {
                Some(rule) => {
                    out.extend_from_slice(&rule.phonemes);
                    pos += rule.grapheme.len();
                }
                None => pos += 1,
            }
        }
        out
    }

    /// Pronounces `word`; tokens are separated by [`PhoneUnit::Boundary`].
    pub fn g2p(&self, word: &LetterWord) -> PhonemeSequence {
        let mut seq = Vec::new();
        for (i, token) in word.tokens().enumerate() {
            if i > 0 {
                seq.push(PhoneUnit::Boundary);
            }
            let phones = match self.lexicon.get(token) {
                Some(p) => p.clone(),
                None => self.fallback(token),
            };
            seq.extend(phones.into_iter().map(PhoneUnit::Phone));
        }
        seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonetics::Resources;

    fn symbols(res: &Resources, seq: &[PhoneUnit]) -> Vec<String> {
        seq.iter()
            .map(|u| match u {
                PhoneUnit::Phone(p) => res.phonemes.symbol(p.0 as usize).to_string(),
                PhoneUnit::Boundary => " ".to_string(),
            })
            .collect()
    }

    #[test]
    fn letter_word_normalizes() {
        assert_eq!(LetterWord::new("  Hey   Siri ").unwrap().as_str(), "hey siri");
        assert!(matches!(LetterWord::new("   "), Err(PhoneticsError::EmptyWord)));
        assert!(matches!(LetterWord::new("al3xa"), Err(PhoneticsError::InvalidLetter('3'))));
    }

    #[test]
    fn lexicon_hits() {
        let res = Resources::bundled();
        let seq = res.g2p.g2p(&LetterWord::new("alexa").unwrap());
        assert_eq!(symbols(res, &seq), ["AH", "L", "EH", "K", "S", "AH"]);
        let seq = res.g2p.g2p(&LetterWord::new("hey siri").unwrap());
        assert_eq!(symbols(res, &seq), ["HH", "EY", " ", "S", "IH", "R", "IY"]);
    }

    #[test]
    fn fallback_rules_by_hand() {
        let res = Resources::bundled();
        // i→IH l→L e→EH k→K s→S ur→ER
        assert!(res.g2p.lexicon_entry("ileksur").is_none());
        let seq = res.g2p.g2p(&LetterWord::new("ileksur").unwrap());
        assert_eq!(symbols(res, &seq), ["IH", "L", "EH", "K", "S", "ER"]);
        // ^y→Y, x→K S, final e silent
        assert_eq!(
            symbols(res, &res.g2p.fallback("yoxe").into_iter().map(PhoneUnit::Phone).collect::<Vec<_>>()),
            ["Y", "AA", "K", "S"]
        );
        // tch beats t + ch
        assert_eq!(
            symbols(res, &res.g2p.fallback("itch").into_iter().map(PhoneUnit::Phone).collect::<Vec<_>>()),
            ["IH", "CH"]
        );
    }

    #[test]
    fn g2p_is_deterministic() {
        let res = Resources::bundled();
        let w = LetterWord::new("qzxv olexa").unwrap();
        assert_eq!(res.g2p.g2p(&w), res.g2p.g2p(&w));
    }
}
