//! Exact path-dependent TreeSHAP.
//!
//! Conditional expectations follow the training covers stored in each node,
//! so no background dataset is needed. Attributions live in log-odds space,
//! where `base + sum(phi) == margin` holds exactly.

use serde::{Deserialize, Serialize};

use super::gbdt::{Node, Tree, TreeEnsemble};
use super::ExplainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub phi: Vec<f64>,
    pub base: f64,
    pub margin: f64,
}

impl ShapExplanation {
    /// `base + sum(phi) - margin`; zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.base + self.phi.iter().sum::<f64>() - self.margin
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem { feature, zero, one, weight: if l == 0 { 1.0 } else { 0.0 } });
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (l + 1) as f64;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / (l + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut n = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = n * (l + 1) as f64 / ((j + 1) as f64 * one);
            n = t - path[j].weight * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Total weight of the path with element `i` unwound, without modifying it.
fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut n = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let w = n * (l + 1) as f64 / ((j + 1) as f64 * one);
            total += w;
            n = path[j].weight - w * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            total += path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    total
}

fn recurse(
    tree: &Tree,
    node: usize,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElem>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero, one, feature);
    match tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let f = path[i].feature.expect("only the root element has no feature");
                phi[f] += w * (path[i].one - path[i].zero) * value;
            }
        }
        Node::Split { feature: f, threshold, left, right, cover } => {
            let (hot, cold) = if x[f] < threshold { (left, right) } else { (right, left) };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            let hot_frac = tree.nodes[hot].cover() / cover;
            let cold_frac = tree.nodes[cold].cover() / cover;
            recurse(tree, hot, x, phi, path.clone(), iz * hot_frac, io, Some(f));
            recurse(tree, cold, x, phi, path, iz * cold_frac, 0.0, Some(f));
        }
    }
}

/// Adds the Shapley values of one tree at `x` into `phi`.
pub fn tree_shap(tree: &Tree, x: &[f64], phi: &mut [f64]) {
    recurse(tree, 0, x, phi, Vec::with_capacity(8), 1.0, 1.0, None);
}

/// Per-feature attributions of the ensemble margin at `x`. The base value is
/// `base_score` plus each tree's cover-weighted expectation.
pub fn shap_values(model: &TreeEnsemble, x: &[f64]) -> Result<ShapExplanation, ExplainError> {
    let margin = model.margin(x)?;
    let mut phi = vec![0.0; model.n_features];
    let mut base = model.base_score;
    for t in &model.trees {
        tree_shap(t, x, &mut phi);
        base += t.expected_value();
    }
    Ok(ShapExplanation { phi, base, margin })
}
