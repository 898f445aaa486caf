//! Ternary articulatory feature tables and the weighted Hamming distance
//! between their entries.

use std::collections::HashMap;

use super::{parse_tsv, PhoneticsError};

/// A symbol inventory where each entry carries the same number of ternary
/// features (+1 / 0 / -1).
#[derive(Debug, Clone)]
pub struct FeatureTable {
    feature_names: Vec<String>,
    symbols: Vec<String>,
    features: Vec<Vec<i8>>,
    weights: Vec<f64>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    /// Parses a TSV with a header row (`symbol`, feature names...) and an
    /// optional `_weight` row.
    pub fn from_tsv(name: &str, text: &str) -> Result<Self, PhoneticsError> {
        let bad = |msg: String| PhoneticsError::Data(format!("{name}: {msg}"));
        let mut rows = parse_tsv(text);
        let header = rows.next().ok_or_else(|| bad("empty file".into()))??;
        let feature_names: Vec<String> = header[1..].to_vec();
        let dim = feature_names.len();
        if dim == 0 {
            return Err(bad("no feature columns".into()));
        }
        let mut weights = vec![1.0; dim];
        let mut symbols = Vec::new();
        let mut features = Vec::new();
        for row in rows {
            let row = row?;
            if row.len() != dim + 1 {
                return Err(bad(format!("row {:?} has {} columns, want {}", row[0], row.len(), dim + 1)));
            }
            if row[0] == "_weight" {
                weights = row[1..]
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad weight {v}"))))
                    .collect::<Result<_, _>>()?;
                if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(bad("weights must be nonnegative with positive sum".into()));
                }
                continue;
            }
            let fv = row[1..]
                .iter()
                .map(|v| match v.as_str() {
                    "1" | "+1" | "+" => Ok(1),
                    "0" => Ok(0),
                    "-1" | "-" => Ok(-1),
                    other => Err(bad(format!("bad feature value {other}"))),
                })
                .collect::<Result<Vec<i8>, _>>()?;
            symbols.push(row[0].clone());
            features.push(fv);
        }
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { feature_names, symbols, features, weights, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn features(&self, i: usize) -> &[i8] {
        &self.features[i]
    }

    pub fn lookup(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Normalized weighted Hamming distance in [0, 1].
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (fa, fb) = (&self.features[a], &self.features[b]);
        let total: f64 = self.weights.iter().sum();
        let diff: f64 = fa
            .iter()
            .zip(fb)
            .zip(&self.weights)
            .filter(|((x, y), _)| x != y)
            .map(|(_, w)| w)
            .sum();
        diff / total
    }

    /// Full pairwise distance matrix, row-major.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.distance(i, j)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "symbol\ta\tb\tc\n_weight\t1\t1\t2\nx\t1\t1\t1\ny\t-1\t-1\t-1\nz\t1\t0\t1\n";

    #[test]
    fn weighted_hamming() {
        let t = FeatureTable::from_tsv("toy", TOY).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.distance(0, 0), 0.0);
        assert_eq!(t.distance(0, 1), 1.0);
        assert!((t.distance(0, 2) - 0.25).abs() < 1e-15);
        assert_eq!(t.distance(1, 2), t.distance(2, 1));
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = FeatureTable::from_tsv("toy", "symbol\ta\tb\nx\t1\n").unwrap_err();
        assert!(matches!(err, PhoneticsError::Data(_)));
    }
}
