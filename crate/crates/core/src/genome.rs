//! Integer-vector encodings of candidate words and the variation operators
//! that act on them.
//!
//! A Mandarin character is three genes: initial (0..=23, 0 = zero initial),
//! final (1..=37) and tone (1..=4). An English word of `n` symbols becomes
//! `floor(r * n)` genes in 1..=27, where 27 is a space used as padding.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonetics::{euclid, ChineseWord, LetterWord, Resources, Syllable, NUM_FINALS, NUM_INITIALS};
use crate::word::{Language, Word};

pub const SPACE_GENE: u8 = 27;

#[derive(Debug, Error, PartialEq)]
pub enum GenomeError {
    #[error("invalid initial/final combination at character {position}")]
    InvalidCombination { position: usize },
    #[error("genome decodes to spaces only")]
    AllSpaces,
    #[error("gene {value} at position {position} is out of range")]
    OutOfRange { position: usize, value: u8 },
    #[error("genomes have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("genomes use different encodings")]
    EncodingMismatch,
    #[error("word of {len} symbols does not fit a genome of {capacity} genes")]
    TooLong { len: usize, capacity: usize },
    #[error("{0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChineseGenome(pub Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnglishGenome(pub Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Genome {
    Chinese(ChineseGenome),
    English(EnglishGenome),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationConfig {
    /// Per-gene resampling probability.
    pub mutation_rate: f64,
    /// Probability that a parent pair is crossed over.
    pub crossover_rate: f64,
    /// English genome length as a multiple of the wake word length.
    pub length_ratio: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self { mutation_rate: 0.1, crossover_rate: 0.9, length_ratio: 1.5 }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<(), GenomeError> {
        for (name, v) in [("mutation_rate", self.mutation_rate), ("crossover_rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GenomeError::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.length_ratio >= 1.0 && self.length_ratio.is_finite()) {
            return Err(GenomeError::InvalidConfig(format!(
                "length_ratio must be at least 1, got {}",
                self.length_ratio
            )));
        }
        Ok(())
    }
}

/// Inclusive gene range at `position` for the given language.
fn gene_range(lang: Language, position: usize) -> (u8, u8) {
    match lang {
        Language::En => (1, SPACE_GENE),
        Language::Zh => match position % 3 {
            0 => (0, NUM_INITIALS),
            1 => (1, NUM_FINALS),
            _ => (1, 4),
        },
    }
}

impl Genome {
    pub fn genes(&self) -> &[u8] {
        match self {
            Genome::Chinese(g) => &g.0,
            Genome::English(g) => &g.0,
        }
    }

    fn genes_mut(&mut self) -> &mut Vec<u8> {
        match self {
            Genome::Chinese(g) => &mut g.0,
            Genome::English(g) => &mut g.0,
        }
    }

    pub fn language(&self) -> Language {
        match self {
            Genome::Chinese(_) => Language::Zh,
            Genome::English(_) => Language::En,
        }
    }

    pub fn len(&self) -> usize {
        self.genes().len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes().is_empty()
    }

    pub fn in_range(&self) -> bool {
        let lang = self.language();
        self.genes().iter().enumerate().all(|(i, &g)| {
            let (lo, hi) = gene_range(lang, i);
            (lo..=hi).contains(&g)
        })
    }

    pub fn decode(&self, res: &Resources) -> Result<Word, GenomeError> {
        match self {
            Genome::Chinese(g) => decode_chinese(g, res).map(Word::Chinese),
            Genome::English(g) => decode_english(g).map(Word::English),
        }
    }

    /// Encodes `word`; English words are padded with spaces to `english_len`.
    pub fn encode(word: &Word, english_len: usize) -> Result<Genome, GenomeError> {
        match word {
            Word::Chinese(w) => Ok(Genome::Chinese(encode_chinese(w))),
            Word::English(w) => encode_english(w, english_len).map(Genome::English),
        }
    }

    fn repaired(self, res: &Resources) -> Genome {
        match self {
            Genome::Chinese(g) => Genome::Chinese(repair_chinese(&g, res)),
            other => other,
        }
    }
}

pub fn encode_chinese(word: &ChineseWord) -> ChineseGenome {
    ChineseGenome(word.syllables.iter().flat_map(|s| [s.initial, s.fin, s.tone]).collect())
}

pub fn decode_chinese(g: &ChineseGenome, res: &Resources) -> Result<ChineseWord, GenomeError> {
    let genes = &g.0;
    for (i, &v) in genes.iter().enumerate() {
        let (lo, hi) = gene_range(Language::Zh, i);
        if !(lo..=hi).contains(&v) {
            return Err(GenomeError::OutOfRange { position: i, value: v });
        }
    }
    let syllables = genes
        .chunks_exact(3)
        .enumerate()
        .map(|(pos, c)| {
            if res.validate_syllable(c[0], c[1]) {
                Ok(Syllable { initial: c[0], fin: c[1], tone: c[2] })
            } else {
                Err(GenomeError::InvalidCombination { position: pos })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChineseWord { syllables })
}

/// Genome length for an English wake word of `symbols` letters and spaces.
pub fn english_genome_len(symbols: usize, ratio: f64) -> usize {
    ((ratio * symbols as f64).floor() as usize).max(symbols)
}

pub fn encode_english(word: &LetterWord, len: usize) -> Result<EnglishGenome, GenomeError> {
    let mut genes: Vec<u8> = word
        .as_str()
        .bytes()
        .map(|b| if b == b' ' { SPACE_GENE } else { b - b'a' + 1 })
        .collect();
    if genes.len() > len {
        return Err(GenomeError::TooLong { len: genes.len(), capacity: len });
    }
    genes.resize(len, SPACE_GENE);
    Ok(EnglishGenome(genes))
}

/// Maps 1..=26 to letters and 27 to space, then trims and collapses spaces.
pub fn decode_english(g: &EnglishGenome) -> Result<LetterWord, GenomeError> {
    let mut text = String::with_capacity(g.0.len());
    for (i, &v) in g.0.iter().enumerate() {
        match v {
            1..=26 => text.push((b'a' + v - 1) as char),
            SPACE_GENE => text.push(' '),
            _ => return Err(GenomeError::OutOfRange { position: i, value: v }),
        }
    }
    LetterWord::new(&text).map_err(|_| GenomeError::AllSpaces)
}

fn nearest_valid_final(initial: u8, fin: u8, res: &Resources) -> u8 {
    let target = res.embeddings.finals[fin as usize - 1];
    let mut best = (f64::INFINITY, fin);
    for &cand in res.pinyin.valid_finals(initial) {
        let d = euclid(target, res.embeddings.finals[cand as usize - 1]);
        if d < best.0 {
            best = (d, cand);
        }
    }
    best.1
}

/// Replaces the final of every invalid character with the valid final for
/// that initial whose embedding is closest (lowest index on ties).
pub fn repair_chinese(g: &ChineseGenome, res: &Resources) -> ChineseGenome {
    let mut genes = g.0.clone();
    for c in genes.chunks_exact_mut(3) {
        if !res.validate_syllable(c[0], c[1]) {
            c[1] = nearest_valid_final(c[0], c[1], res);
        }
    }
    ChineseGenome(genes)
}

/// Resamples each gene uniformly from its range with probability
/// `mutation_rate`; Mandarin results are repaired.
pub fn mutate<R: Rng + ?Sized>(g: &Genome, cfg: &VariationConfig, rng: &mut R, res: &Resources) -> Genome {
    let lang = g.language();
    let mut out = g.clone();
    for (i, v) in out.genes_mut().iter_mut().enumerate() {
        if rng.gen_bool(cfg.mutation_rate) {
            let (lo, hi) = gene_range(lang, i);
            *v = rng.gen_range(lo..=hi);
        }
    }
    out.repaired(res)
}

/// Single-point crossover exchanging the tails after `cut` genes. Children
/// are not repaired.
pub fn crossover_at(g1: &Genome, g2: &Genome, cut: usize) -> Result<(Genome, Genome), GenomeError> {
    if g1.language() != g2.language() {
        return Err(GenomeError::EncodingMismatch);
    }
    if g1.len() != g2.len() {
        return Err(GenomeError::LengthMismatch(g1.len(), g2.len()));
    }
    let cut = cut.min(g1.len());
    let (mut c1, mut c2) = (g1.clone(), g2.clone());
    c1.genes_mut()[cut..].copy_from_slice(&g2.genes()[cut..]);
    c2.genes_mut()[cut..].copy_from_slice(&g1.genes()[cut..]);
    Ok((c1, c2))
}

/// Single-point crossover at a uniform cut in `1..len`; Mandarin children
/// are repaired.
pub fn crossover<R: Rng + ?Sized>(
    g1: &Genome,
    g2: &Genome,
    rng: &mut R,
    res: &Resources,
) -> Result<(Genome, Genome), GenomeError> {
    if g1.len() != g2.len() {
        return Err(GenomeError::LengthMismatch(g1.len(), g2.len()));
    }
    if g1.len() < 2 {
        return Ok((g1.clone(), g2.clone()));
    }
    let cut = rng.gen_range(1..g1.len());
    let (c1, c2) = crossover_at(g1, g2, cut)?;
    Ok((c1.repaired(res), c2.repaired(res)))
}

/// Changes one gene to a different value that keeps the genome valid, if
/// such a value exists.
fn perturb_gene<R: Rng + ?Sized>(g: &mut Genome, pos: usize, rng: &mut R, res: &Resources) {
    let lang = g.language();
    let genes = g.genes_mut();
    let old = genes[pos];
    let (lo, hi) = gene_range(lang, pos);
    let candidates: Vec<u8> = (lo..=hi)
        .filter(|&v| v != old)
        .filter(|&v| match (lang, pos % 3) {
            (Language::Zh, 0) => res.validate_syllable(v, genes[pos + 1]),
            (Language::Zh, 1) => res.validate_syllable(genes[pos - 1], v),
            _ => true,
        })
        .collect();
    if !candidates.is_empty() {
        genes[pos] = candidates[rng.gen_range(0..candidates.len())];
    }
}

/// A uniformly random genome shaped like `template` that decodes to a word.
pub fn random_genome<R: Rng + ?Sized>(template: &Genome, rng: &mut R, res: &Resources) -> Genome {
    let lang = template.language();
    loop {
        let mut g = template.clone();
        for (i, v) in g.genes_mut().iter_mut().enumerate() {
            let (lo, hi) = gene_range(lang, i);
            *v = rng.gen_range(lo..=hi);
        }
        let g = g.repaired(res);
        if g.decode(res).is_ok() {
            return g;
        }
    }
}

/// Initial population: the wake word, then `ceil((count - 1) / 2)` copies
/// with one or two genes perturbed, then uniformly random genomes.
pub fn seed_genomes<R: Rng + ?Sized>(
    wake: &Genome,
    count: usize,
    rng: &mut R,
    res: &Resources,
) -> Vec<Genome> {
    let count = count.max(1);
    let mut out = Vec::with_capacity(count);
    out.push(wake.clone());
    let similar = count.saturating_sub(1).div_ceil(2);
    for _ in 0..similar {
        let mut g = wake.clone();
        let k = rng.gen_range(1..=2usize).min(g.len());
        for pos in sample(rng, g.len(), k).into_vec() {
            perturb_gene(&mut g, pos, rng, res);
        }
        out.push(g);
    }
    while out.len() < count {
        out.push(random_genome(wake, rng, res));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn res() -> &'static Resources {
        Resources::bundled()
    }

    fn zh(text: &str) -> Genome {
        Genome::Chinese(encode_chinese(&res().parse_pinyin(text).unwrap()))
    }

    fn en(text: &str, len: usize) -> Genome {
        Genome::English(encode_english(&LetterWord::new(text).unwrap(), len).unwrap())
    }

    fn sym(kind: &str, s: &str) -> u8 {
        let p = &res().pinyin;
        match kind {
            "i" => p.initial_by_symbol(s).unwrap(),
            _ => p.final_by_symbol(s).unwrap(),
        }
    }

    #[test]
    fn decodes_baidu_wake_word() {
        let (x, iao, d, u) = (sym("i", "x"), sym("f", "iao"), sym("i", "d"), sym("f", "u"));
        let g = ChineseGenome(vec![x, iao, 3, d, u, 4, x, iao, 3, d, u, 4]);
        let w = decode_chinese(&g, res()).unwrap();
        assert_eq!(res().pinyin.render(&w), "xiǎo dù xiǎo dù");
        assert_eq!(encode_chinese(&w), g);
    }

    #[test]
    fn xang_is_rejected_then_repaired() {
        let (x, ang) = (sym("i", "x"), sym("f", "ang"));
        let g = ChineseGenome(vec![x, ang, 1]);
        assert_eq!(decode_chinese(&g, res()), Err(GenomeError::InvalidCombination { position: 0 }));
        let fixed = repair_chinese(&g, res());
        // brute force over the valid finals of x
        let target = res().embeddings.finals[ang as usize - 1];
        let best = res()
            .pinyin
            .valid_finals(x)
            .iter()
            .copied()
            .min_by(|&a, &b| {
                euclid(target, res().embeddings.finals[a as usize - 1])
                    .total_cmp(&euclid(target, res().embeddings.finals[b as usize - 1]))
                    .then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(fixed.0, vec![x, best, 1]);
        assert_eq!(repair_chinese(&fixed, res()), fixed);
        assert!(decode_chinese(&fixed, res()).is_ok());
    }

    #[test]
    fn english_decode_rules() {
        assert_eq!(decode_english(&EnglishGenome(vec![27; 7])), Err(GenomeError::AllSpaces));
        let g = en("alexa", 7);
        assert_eq!(g.genes(), &[1, 12, 5, 24, 1, 27, 27]);
        assert_eq!(g.decode(res()).unwrap(), Word::English(LetterWord::new("alexa").unwrap()));
        let mut genes: Vec<u8> = "hey".bytes().map(|b| b - b'a' + 1).collect();
        genes.push(27);
        genes.extend("siri".bytes().map(|b| b - b'a' + 1));
        assert_eq!(decode_english(&EnglishGenome(genes)).unwrap().as_str(), "hey siri");
        let g = EnglishGenome(vec![27, 1, 27, 27, 2, 27]);
        assert_eq!(decode_english(&g).unwrap().as_str(), "a b");
    }

    #[test]
    fn genome_length_ratio() {
        assert_eq!(english_genome_len(5, 1.5), 7);
        assert_eq!(english_genome_len(8, 1.5), 12);
        assert_eq!(english_genome_len(3, 1.0), 3);
    }

    #[test]
    fn alexa_olive_crossover() {
        let (a, o) = (en("alexa", 5), en("olive", 5));
        let (c1, c2) = crossover_at(&a, &o, 2).unwrap();
        assert_eq!(c1.decode(res()).unwrap().text(res()), "alive");
        assert_eq!(c2.decode(res()).unwrap().text(res()), "olexa");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(crossover(&a, &a, &mut rng, res()).unwrap(), (a.clone(), a.clone()));
        assert_eq!(
            crossover(&a, &en("alexa", 7), &mut rng, res()),
            Err(GenomeError::LengthMismatch(5, 7))
        );
    }

    #[test]
    fn mutation_extremes_and_determinism() {
        let g = zh("xiǎo dù xiǎo dù");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let none = VariationConfig { mutation_rate: 0.0, ..Default::default() };
        assert_eq!(mutate(&g, &none, &mut rng, res()), g);
        let all = VariationConfig { mutation_rate: 1.0, ..Default::default() };
        let m = mutate(&g, &all, &mut rng, res());
        assert!(m.in_range() && m.decode(res()).is_ok());
        let run = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| mutate(&g, &all, &mut r, res())).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn seeding_partition() {
        let wake = en("alexa", 7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pop = seed_genomes(&wake, 3, &mut rng, res());
        assert_eq!(pop.len(), 3);
        assert_eq!(pop[0], wake);
        let diff = pop[1].genes().iter().zip(wake.genes()).filter(|(a, b)| a != b).count();
        assert!((1..=2).contains(&diff));

        let wake = zh("tiān māo jīng líng");
        let run = |seed| seed_genomes(&wake, 101, &mut ChaCha8Rng::seed_from_u64(seed), res());
        let pop = run(11);
        assert_eq!(pop, run(11));
        for g in &pop[1..=50] {
            let diff = g.genes().iter().zip(wake.genes()).filter(|(a, b)| a != b).count();
            assert!(diff <= 2);
        }
        assert!(pop.iter().all(|g| g.in_range() && g.decode(res()).is_ok()));
    }

    proptest! {
        #[test]
        fn operators_keep_genomes_valid(seed in any::<u64>(), rate in 0.0f64..=1.0) {
            let cfg = VariationConfig { mutation_rate: rate, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = zh("xiǎo ài tóng xué");
            let b = random_genome(&a, &mut rng, res());
            let (c1, c2) = crossover(&a, &b, &mut rng, res()).unwrap();
            for g in [mutate(&a, &cfg, &mut rng, res()), c1, c2] {
                prop_assert!(g.in_range());
                let w = g.decode(res()).unwrap();
                if let Word::Chinese(w) = &w {
                    prop_assert_eq!(encode_chinese(w).0, g.genes().to_vec());
                }
            }
        }

        #[test]
        fn english_crossover_preserves_positions(a in prop::collection::vec(1u8..=27, 7),
                                                 b in prop::collection::vec(1u8..=27, 7),
                                                 seed in any::<u64>()) {
            let (ga, gb) = (Genome::English(EnglishGenome(a)), Genome::English(EnglishGenome(b)));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c1, c2) = crossover(&ga, &gb, &mut rng, res()).unwrap();
            for i in 0..7 {
                let mut got = [c1.genes()[i], c2.genes()[i]];
                let mut want = [ga.genes()[i], gb.genes()[i]];
                got.sort();
                want.sort();
                prop_assert_eq!(got, want);
            }
        }
    }
}
