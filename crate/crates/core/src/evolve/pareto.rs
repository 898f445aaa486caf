use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// The two maximized objectives of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub wake_rate: f64,
    pub dissimilarity: f64,
}

impl Objectives {
    pub fn new(wake_rate: f64, dissimilarity: f64) -> Self {
        Self { wake_rate, dissimilarity }
    }
}

/// Strict Pareto dominance under maximization.
pub fn dominates(a: Objectives, b: Objectives) -> bool {
    a.wake_rate >= b.wake_rate
        && a.dissimilarity >= b.dissimilarity
        && (a.wake_rate > b.wake_rate || a.dissimilarity > b.dissimilarity)
}

/// Indices (ascending) of the members no other member dominates.
///
/// Sweeps the population in decreasing wake rate while tracking the best
/// dissimilarity seen at strictly higher rates, so it runs in O(n log n).
pub fn non_dominated_front(pop: &[Objectives]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&i, &j| {
        pop[j]
            .wake_rate
            .total_cmp(&pop[i].wake_rate)
            .then(pop[j].dissimilarity.total_cmp(&pop[i].dissimilarity))
    });
    let mut front = Vec::new();
    let mut best_above = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let rate = pop[order[start]].wake_rate;
        let end = order[start..]
            .iter()
            .position(|&i| pop[i].wake_rate.total_cmp(&rate) != Ordering::Equal)
            .map_or(order.len(), |p| start + p);
        // groups are sorted by dissimilarity, so the first member holds the max
        let group_max = pop[order[start]].dissimilarity;
        if group_max > best_above {
            front.extend(order[start..end].iter().copied().filter(|&i| pop[i].dissimilarity == group_max));
        }
        best_above = best_above.max(group_max);
        start = end;
    }
    front.sort_unstable();
    front
}

#[cfg(any(test, debug_assertions))]
pub(crate) fn front_by_scan(pop: &[Objectives]) -> Vec<usize> {
    (0..pop.len()).filter(|&i| !pop.iter().any(|&q| dominates(q, pop[i]))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn o(a: f64, b: f64) -> Objectives {
        Objectives::new(a, b)
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(o(0.9, 0.3), o(0.5, 0.1)));
        assert!(!dominates(o(0.9, 0.1), o(0.5, 0.3)));
        assert!(!dominates(o(0.5, 0.2), o(0.5, 0.2)));
        assert!(dominates(o(0.5, 0.3), o(0.5, 0.2)));
    }

    #[test]
    fn small_fronts() {
        assert_eq!(non_dominated_front(&[o(1.0, 2.0), o(2.0, 1.0), o(0.0, 0.0)]), vec![0, 1]);
        assert_eq!(non_dominated_front(&[o(0.3, 0.3); 5]), vec![0, 1, 2, 3, 4]);
        assert_eq!(non_dominated_front(&[o(0.5, 0.1), o(0.5, 0.3), o(0.4, 0.3)]), vec![1]);
        assert!(non_dominated_front(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn sweep_matches_scan(pts in prop::collection::vec((0u8..=10, 0u8..=6), 1..200)) {
            // coarse grid values force plenty of ties
            let pop: Vec<Objectives> =
                pts.iter().map(|&(a, b)| o(a as f64 / 10.0, b as f64 / 6.0)).collect();
            prop_assert_eq!(non_dominated_front(&pop), front_by_scan(&pop));
        }

        #[test]
        fn front_is_order_independent(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60)) {
            let pop: Vec<Objectives> = pts.iter().map(|&(a, b)| o(a, b)).collect();
            let mut rev = pop.clone();
            rev.reverse();
            let n = pop.len();
            let mut mapped: Vec<usize> = non_dominated_front(&rev).iter().map(|&i| n - 1 - i).collect();
            mapped.sort_unstable();
            prop_assert_eq!(non_dominated_front(&pop), mapped);
        }
    }
}
