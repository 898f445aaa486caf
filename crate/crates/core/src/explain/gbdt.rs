//! Gradient-boosted regression trees under logistic loss.

use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::oracle::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum training samples in each leaf.
    pub min_leaf: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 3, learning_rate: 0.1, min_leaf: 2 }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.max_depth == 0 || self.min_leaf == 0 {
            return Err(ExplainError::InvalidConfig("max_depth and min_leaf must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ExplainError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// A tree node. Samples with `x[feature] < threshold` go left. `cover` is
/// the number of training samples that reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, cover: f64 },
    Leaf { value: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// Nodes stored flat with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    /// Cover-weighted mean leaf value.
    pub fn expected_value(&self) -> f64 {
        let root = self.nodes[0].cover();
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Leaf { value, cover } => Some(value * cover),
                _ => None,
            })
            .sum::<f64>()
            / root
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

/// An additive ensemble in log-odds space. Leaf values already include the
/// learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    fn check(&self, x: &[f64]) -> Result<(), ExplainError> {
        if x.len() != self.n_features {
            return Err(ExplainError::ShapeMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(())
    }

    /// Raw score in log-odds space.
    pub fn margin(&self, x: &[f64]) -> Result<f64, ExplainError> {
        self.check(x)?;
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    /// Confidence that `x` belongs to the positive class.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ExplainError> {
        self.margin(x).map(logistic)
    }

    /// One minus the positive-class confidence.
    pub fn dissimilarity_score(&self, x: &[f64]) -> Result<f64, ExplainError> {
        self.predict_proba(x).map(|g| 1.0 - g)
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[bool]) -> Result<f64, ExplainError> {
        let mut correct = 0;
        for (xi, &yi) in x.iter().zip(y) {
            if (self.predict_proba(xi)? >= 0.5) == yi {
                correct += 1;
            }
        }
        Ok(correct as f64 / x.len().max(1) as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExplainError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ExplainError::Model(e.to_string()))?;
        for t in &m.trees {
            for n in &t.nodes {
                if let Node::Split { feature, left, right, .. } = *n {
                    if feature >= m.n_features || left >= t.nodes.len() || right >= t.nodes.len() {
                        return Err(ExplainError::Model("node refers outside the model".into()));
                    }
                }
            }
        }
        Ok(m)
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Greedy best split of `rows` by squared-error reduction on the gradients.
/// Features are scanned in order and thresholds in increasing order; only a
/// strictly better gain replaces the incumbent.
fn best_split(
    rows: &[usize],
    x: &[Vec<f64>],
    sorted: &[Vec<usize>],
    member: &[bool],
    grad: &[f64],
    min_leaf: usize,
) -> Option<Split> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&i| grad[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<Split> = None;
    for (f, order) in sorted.iter().enumerate() {
        let mut left_n = 0usize;
        let mut left_sum = 0.0;
        let mut prev = f64::NAN;
        for &i in order.iter().filter(|&&i| member[i]) {
            let v = x[i][f];
            if left_n >= min_leaf && n - left_n >= min_leaf && v > prev {
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / (n - left_n) as f64
                    - parent;
                if gain > best.as_ref().map_or(1e-12, |b| b.gain + 1e-12) {
                    let mid = prev + (v - prev) / 2.0;
                    // guard against the midpoint rounding onto the lower value
                    let threshold = if mid > prev { mid } else { v };
                    best = Some(Split { feature: f, threshold, gain });
                }
            }
            left_n += 1;
            left_sum += grad[i];
            prev = v;
        }
    }
    best
}

fn leaf_value(rows: &[usize], grad: &[f64], hess: &[f64], lr: f64) -> f64 {
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h: f64 = rows.iter().map(|&i| hess[i]).sum();
    if h < 1e-12 {
        0.0
    } else {
        lr * g / h
    }
}

#[allow(clippy::too_many_arguments)]
fn grow(
    nodes: &mut Vec<Node>,
    rows: Vec<usize>,
    depth: usize,
    x: &[Vec<f64>],
    sorted: &[Vec<usize>],
    member: &mut [bool],
    grad: &[f64],
    hess: &[f64],
    p: &GbdtParams,
) -> usize {
    let id = nodes.len();
    let cover = rows.len() as f64;
    nodes.push(Node::Leaf { value: 0.0, cover });
    let split = if depth < p.max_depth && rows.len() >= 2 * p.min_leaf {
        for &i in &rows {
            member[i] = true;
        }
        let s = best_split(&rows, x, sorted, member, grad, p.min_leaf);
        for &i in &rows {
            member[i] = false;
        }
        s
    } else {
        None
    };
    match split {
        None => nodes[id] = Node::Leaf { value: leaf_value(&rows, grad, hess, p.learning_rate), cover },
        Some(s) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.feature] < s.threshold);
            let left = grow(nodes, l, depth + 1, x, sorted, member, grad, hess, p);
            let right = grow(nodes, r, depth + 1, x, sorted, member, grad, hess, p);
            nodes[id] = Node::Split { feature: s.feature, threshold: s.threshold, left, right, cover };
        }
    }
    id
}

/// Fits a boosted ensemble to binary labels. Deterministic: no sampling is
/// involved and all ties are broken by feature index and threshold order.
pub fn train_gbdt(x: &[Vec<f64>], y: &[bool], params: &GbdtParams) -> Result<TreeEnsemble, ExplainError> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(ExplainError::ShapeMismatch { expected: x.len(), got: y.len() });
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(ExplainError::DegenerateData);
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(ExplainError::ShapeMismatch { expected: d, got: bad.len() });
    }

    let prior = n_pos as f64 / y.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut margin = vec![base_score; x.len()];
    let mut member = vec![false; x.len()];
    let mut grad = vec![0.0; x.len()];
    let mut hess = vec![0.0; x.len()];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        for i in 0..x.len() {
            let p = logistic(margin[i]);
            grad[i] = if y[i] { 1.0 - p } else { -p };
            hess[i] = p * (1.0 - p);
        }
        let mut nodes = Vec::new();
        grow(&mut nodes, (0..x.len()).collect(), 0, x, &sorted, &mut member, &grad, &hess, params);
        let tree = Tree { nodes };
        for (m, xi) in margin.iter_mut().zip(x) {
            *m += tree.predict(xi);
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble { n_features: d, base_score, learning_rate: params.learning_rate, trees })
}
