//! Black-box wake detectors: the oracle interface, wake-rate estimation, a
//! seeded simulated detector and an adapter for external processes.

mod external;
mod sim;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonetics::PhoneticsError;

pub use external::{ExternalOracle, DEFAULT_TIMEOUT};
pub use sim::{SimulatedDetector, SimulatorConfig};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle replied {0:?}, expected \"1\" or \"0\"")]
    Protocol(String),
    #[error("oracle did not answer within {0:?}")]
    Timeout(Duration),
    #[error("oracle process: {0}")]
    Io(#[from] std::io::Error),
    #[error("oracle process closed its output")]
    Closed,
    #[error("cannot parse query word: {0}")]
    Parse(#[from] PhoneticsError),
    #[error("{0}")]
    InvalidConfig(String),
}

/// A detector that can only be observed through activations.
pub trait WakeOracle: Sync {
    /// One trial: whether the detector activated on `word`.
    fn query(&self, word: &str) -> Result<bool, OracleError>;

    /// Trial number `trial` for `word`. Oracles whose randomness can be keyed
    /// override this so that concurrent callers get reproducible answers; the
    /// default simply runs a fresh trial.
    fn query_trial(&self, word: &str, trial: u64) -> Result<bool, OracleError> {
        let _ = trial;
        self.query(word)
    }

    /// Short description recorded in run manifests.
    fn describe(&self) -> String;
}

impl<T: WakeOracle + ?Sized> WakeOracle for &T {
    fn query(&self, word: &str) -> Result<bool, OracleError> {
        (**self).query(word)
    }
    fn query_trial(&self, word: &str, trial: u64) -> Result<bool, OracleError> {
        (**self).query_trial(word, trial)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: WakeOracle + ?Sized> WakeOracle for Box<T> {
    fn query(&self, word: &str) -> Result<bool, OracleError> {
        (**self).query(word)
    }
    fn query_trial(&self, word: &str, trial: u64) -> Result<bool, OracleError> {
        (**self).query_trial(word, trial)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Answers every query with a fixed value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOracle(pub bool);

impl WakeOracle for ConstantOracle {
    fn query(&self, _word: &str) -> Result<bool, OracleError> {
        Ok(self.0)
    }
    fn describe(&self) -> String {
        format!("constant:{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WakeRateReport {
    pub word: String,
    pub trials: u32,
    pub positives: u32,
    pub rate: f64,
}

/// Runs `k` trials of `word` and reports the activation fraction.
pub fn estimate_wake_rate<O: WakeOracle + ?Sized>(
    oracle: &O,
    word: &str,
    k: u32,
) -> Result<WakeRateReport, OracleError> {
    if k == 0 {
        return Err(OracleError::InvalidConfig("k must be at least 1".into()));
    }
    let mut positives = 0;
    for trial in 0..k {
        if oracle.query_trial(word, trial as u64)? {
            positives += 1;
        }
    }
    Ok(WakeRateReport { word: word.to_string(), trials: k, positives, rate: positives as f64 / k as f64 })
}

/// Oracle selection as written on the command line: `sim` or `exec:<command>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OracleSpec {
    Sim,
    Exec(String),
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            _ if s == "sim" => Ok(OracleSpec::Sim),
            Some(("exec", cmd)) if !cmd.trim().is_empty() => Ok(OracleSpec::Exec(cmd.to_string())),
            _ => Err(format!("unknown oracle {s:?} (expected sim or exec:<command>)")),
        }
    }
}

impl TryFrom<String> for OracleSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<OracleSpec> for String {
    fn from(s: OracleSpec) -> String {
        s.to_string()
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::Sim => f.write_str("sim"),
            OracleSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
