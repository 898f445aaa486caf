//! Pinyin syllables: decomposition into (initial, final, tone), validity
//! checking and tone-marked rendering.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::{parse_tsv, PhoneticsError};

pub const NUM_INITIALS: u8 = 23;
pub const NUM_FINALS: u8 = 37;
pub const ZERO_INITIAL: u8 = 0;
pub const ZERO_INITIAL_SYMBOL: &str = "∅";

/// One Mandarin syllable. `initial` is 0 for the zero initial, `fin` is
/// 1-based, `tone` is 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Syllable {
    pub initial: u8,
    pub fin: u8,
    pub tone: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChineseWord {
    pub syllables: Vec<Syllable>,
}

impl ChineseWord {
    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }
}

/// Symbol tables and the initial/final validity table.
#[derive(Debug, Clone)]
pub struct PinyinTables {
    initials: Vec<String>,
    finals: Vec<String>,
    initial_index: HashMap<String, u8>,
    final_index: HashMap<String, u8>,
    valid: BTreeSet<(u8, u8)>,
    valid_finals: Vec<Vec<u8>>,
}

impl PinyinTables {
    pub fn from_tsv(units: &str, validity: &str) -> Result<Self, PhoneticsError> {
        let mut initials = vec![String::new(); NUM_INITIALS as usize + 1];
        let mut finals = vec![String::new(); NUM_FINALS as usize];
        for row in parse_tsv(units) {
            let row = row?;
            if row.len() < 3 {
                return Err(PhoneticsError::Data(format!("pinyin_units: short row {row:?}")));
            }
            let idx: usize = row[1]
                .parse()
                .map_err(|_| PhoneticsError::Data(format!("pinyin_units: bad index {}", row[1])))?;
            match row[0].as_str() {
                "initial" if idx <= NUM_INITIALS as usize => initials[idx] = row[2].clone(),
                "final" if (1..=NUM_FINALS as usize).contains(&idx) => {
                    finals[idx - 1] = row[2].clone()
                }
                _ => return Err(PhoneticsError::Data(format!("pinyin_units: bad row {row:?}"))),
            }
        }
        if initials.iter().chain(finals.iter()).any(|s| s.is_empty()) {
            return Err(PhoneticsError::Data("pinyin_units: missing entries".into()));
        }
        let initial_index: HashMap<String, u8> =
            initials.iter().enumerate().map(|(i, s)| (s.clone(), i as u8)).collect();
        let final_index: HashMap<String, u8> =
            finals.iter().enumerate().map(|(i, s)| (s.clone(), i as u8 + 1)).collect();

        let mut valid = BTreeSet::new();
        for row in parse_tsv(validity) {
            let row = row?;
            if row.len() < 2 {
                return Err(PhoneticsError::Data(format!("pinyin_validity: short row {row:?}")));
            }
            let i = *initial_index
                .get(&row[0])
                .ok_or_else(|| PhoneticsError::Data(format!("unknown initial {}", row[0])))?;
            let f = *final_index
                .get(&row[1])
                .ok_or_else(|| PhoneticsError::Data(format!("unknown final {}", row[1])))?;
            valid.insert((i, f));
        }
        let mut valid_finals = vec![Vec::new(); NUM_INITIALS as usize + 1];
        for &(i, f) in &valid {
            valid_finals[i as usize].push(f);
        }
        if let Some(i) = valid_finals.iter().position(|v| v.is_empty()) {
            return Err(PhoneticsError::Data(format!(
                "initial {} has no valid final",
                initials[i]
            )));
        }
        Ok(Self { initials, finals, initial_index, final_index, valid, valid_finals })
    }

    pub fn initial_symbol(&self, initial: u8) -> &str {
        &self.initials[initial as usize]
    }

    pub fn final_symbol(&self, fin: u8) -> &str {
        &self.finals[fin as usize - 1]
    }

    pub fn initial_symbols(&self) -> &[String] {
        &self.initials
    }

    pub fn final_symbols(&self) -> &[String] {
        &self.finals
    }

    pub fn initial_by_symbol(&self, s: &str) -> Option<u8> {
        self.initial_index.get(s).copied()
    }

    pub fn final_by_symbol(&self, s: &str) -> Option<u8> {
        self.final_index.get(s).copied()
    }

    pub fn validate_syllable(&self, initial: u8, fin: u8) -> bool {
        self.valid.contains(&(initial, fin))
    }

    /// Valid finals for `initial`, ascending.
    pub fn valid_finals(&self, initial: u8) -> &[u8] {
        &self.valid_finals[initial as usize]
    }

    pub fn valid_pairs(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.valid.iter().copied()
    }

    pub fn parse_pinyin(&self, text: &str) -> Result<ChineseWord, PhoneticsError> {
        let syllables = text
            .split_whitespace()
            .map(|s| self.parse_syllable(s))
            .collect::<Result<Vec<_>, _>>()?;
        if syllables.is_empty() {
            return Err(PhoneticsError::EmptyWord);
        }
        Ok(ChineseWord { syllables })
    }

    pub fn parse_syllable(&self, token: &str) -> Result<Syllable, PhoneticsError> {
        let (base, tone) = strip_tone(token)?;
        let unknown = || PhoneticsError::UnknownSyllable(token.to_string());

        let mut initial = ZERO_INITIAL;
        let mut rest: &str = &base;
        for cand in ["zh", "ch", "sh"]
            .into_iter()
            .chain(self.initials[1..].iter().map(String::as_str).filter(|s| s.chars().count() == 1))
        {
            if base.len() > cand.len() && base.starts_with(cand) {
                initial = self.initial_index[cand];
                rest = &base[cand.len()..];
                break;
            }
        }
        let isym = self.initial_symbol(initial);
        let surface: String = if matches!(isym, "j" | "q" | "x" | "y") && rest.starts_with('u') {
            format!("ü{}", &rest[1..])
        } else if isym == "w" && rest == "eng" {
            "ueng".to_string()
        } else {
            rest.to_string()
        };
        let fin = self.final_by_symbol(&surface).ok_or_else(unknown)?;
        if !self.validate_syllable(initial, fin) {
            return Err(PhoneticsError::InvalidCombination {
                syllable: token.to_string(),
                initial: self.initial_symbol(initial).to_string(),
                fin: self.final_symbol(fin).to_string(),
            });
        }
        Ok(Syllable { initial, fin, tone })
    }

    /// Tone-marked spelling of one syllable, e.g. `xiǎo`.
    pub fn render_syllable(&self, s: Syllable) -> String {
        let isym = if s.initial == ZERO_INITIAL { "" } else { self.initial_symbol(s.initial) };
        let fsym = self.final_symbol(s.fin);
        let surface = if matches!(isym, "j" | "q" | "x" | "y") && fsym.starts_with('ü') {
            fsym.replacen('ü', "u", 1)
        } else if isym == "w" && fsym == "ueng" {
            "eng".to_string()
        } else {
            fsym.to_string()
        };
        let chars: Vec<char> = surface.chars().collect();
        let mark_at = chars
            .iter()
            .position(|&c| c == 'a')
            .or_else(|| chars.iter().position(|&c| c == 'e' || c == 'ê'))
            .or_else(|| surface.find("ou").map(|_| chars.iter().position(|&c| c == 'o').unwrap()))
            .or_else(|| chars.iter().rposition(|&c| matches!(c, 'i' | 'o' | 'u' | 'ü')))
            .unwrap_or(0);
        let mark = match s.tone {
            1 => '\u{0304}',
            2 => '\u{0301}',
            3 => '\u{030C}',
            _ => '\u{0300}',
        };
        let mut out = String::from(isym);
        for (i, &c) in chars.iter().enumerate() {
            out.push(c);
            if i == mark_at {
                out.push(mark);
            }
        }
        out.nfc().collect()
    }

    pub fn render(&self, word: &ChineseWord) -> String {
        word.syllables
            .iter()
            .map(|&s| self.render_syllable(s))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Splits a syllable into its toneless base (with `ü`/`ê` composed) and tone.
/// Accepts diacritics (precomposed or combining) or a trailing digit 1-4;
/// `v` is read as `ü`.
fn strip_tone(token: &str) -> Result<(String, u8), PhoneticsError> {
    let mut base = String::new();
    let mut tone: Option<u8> = None;
    let mut set_tone = |t: u8| -> Result<(), PhoneticsError> {
        if tone.replace(t).is_some() {
            return Err(PhoneticsError::UnknownSyllable(token.to_string()));
        }
        Ok(())
    };
    for c in token.to_lowercase().nfd() {
        match c {
            '\u{0304}' => set_tone(1)?,
            '\u{0301}' => set_tone(2)?,
            '\u{030C}' => set_tone(3)?,
            '\u{0300}' => set_tone(4)?,
            '\u{0308}' if base.ends_with('u') => {
                base.pop();
                base.push('ü');
            }
            '\u{0302}' if base.ends_with('e') => {
                base.pop();
                base.push('ê');
            }
            '1'..='4' => set_tone(c as u8 - b'0')?,
            'v' => base.push('ü'),
            'a'..='z' => base.push(c),
            _ => return Err(PhoneticsError::UnknownSyllable(token.to_string())),
        }
    }
    match tone {
        Some(t) if !base.is_empty() => Ok((base, t)),
        Some(_) => Err(PhoneticsError::UnknownSyllable(token.to_string())),
        None => Err(PhoneticsError::MissingTone(token.to_string())),
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.initial, self.fin, self.tone)
    }
}
