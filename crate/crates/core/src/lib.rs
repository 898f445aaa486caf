//! Fuzzy wake-up word laboratory.
//!
//! Generates words that falsely trigger a black-box wake-word detector with a
//! two-objective genetic search, explains the false acceptances with a
//! gradient-boosted proxy classifier and exact tree Shapley values, and
//! evaluates two mitigations: decisive-factor screening and retraining the
//! detector with the generated words as negatives.
//!
//! Mandarin words are handled as tone-marked pinyin, English words as letter
//! strings pronounced through a lexicon plus rule-based fallback.

pub mod distance;
pub mod evolve;
pub mod exec;
pub mod explain;
pub mod genome;
pub mod mitigate;
pub mod oracle;
pub mod phonetics;
pub mod word;

pub use exec::Exec;
pub use phonetics::Resources;
pub use word::{Language, Word};
