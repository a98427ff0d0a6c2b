//! Closed-form estimators of the connectivity matrix, the stationary
//! distribution, and the transition matrix from a labeled graph.
//!
//! Entries that cannot be formed (empty groups) are reported as NaN, never
//! silently zero; callers decide the fallback. `p_hat` is the raw ratio
//! estimator and is genuinely allowed to exceed 1 or have non-stochastic
//! rows at finite n — apply [`project_stochastic`] only where a
//! distribution is required (matrix powers, HMM semantics).

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{Labeling, OrderedGraph};

/// Estimated model parameters; NaN marks undefined entries.
#[derive(Debug, Clone)]
pub struct EstimatedParams {
    pub k: usize,
    pub q_hat: Array2<f64>,
    pub pi_hat: Array1<f64>,
    pub p_hat: Array2<f64>,
}

impl EstimatedParams {
    pub fn from_graph(graph: &OrderedGraph, labels: &Labeling) -> Result<Self> {
        if graph.n() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "graph has {} nodes but labeling has {}",
                graph.n(),
                labels.len()
            )));
        }
        Ok(Self {
            k: labels.k(),
            q_hat: estimate_q(graph, labels)?,
            pi_hat: estimate_pi(labels),
            p_hat: estimate_p(labels),
        })
    }
}

/// Edge frequency between (and within) estimated groups.
///
/// Off-diagonal: edges between groups over `|G_k| * |G_l|`; diagonal:
/// within-group edges over `|G_k| * (|G_k| - 1)`. Entries whose
/// denominator vanishes are NaN.
pub fn estimate_q(graph: &OrderedGraph, labels: &Labeling) -> Result<Array2<f64>> {
    let n = graph.n();
    if n != labels.len() {
        return Err(Error::InvalidInput("graph/labeling length mismatch".into()));
    }
    let k = labels.k();
    let counts = labels.counts();
    let vals = labels.values();
    let mut edge_sum = Array2::<f64>::zeros((k, k));
    for i in 0..n {
        for j in i + 1..n {
            if graph.has_edge(i, j) {
                let (a, b) = (vals[i], vals[j]);
                edge_sum[[a, b]] += 1.0;
                if a != b {
                    edge_sum[[b, a]] += 1.0;
                }
            }
        }
    }
    let mut q = Array2::<f64>::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            let denom = if a == b {
                counts[a] as f64 * (counts[a] as f64 - 1.0) / 2.0
            } else {
                counts[a] as f64 * counts[b] as f64
            };
            q[[a, b]] = if denom > 0.0 { edge_sum[[a, b]] / denom } else { f64::NAN };
        }
    }
    Ok(q)
}

/// Visit frequencies of each community.
pub fn estimate_pi(labels: &Labeling) -> Array1<f64> {
    let n = labels.len() as f64;
    let counts = labels.counts();
    Array1::from_iter(counts.into_iter().map(|c| c as f64 / n))
}

/// Raw transition-frequency estimator
/// `(n/(n-1)) * #{i : (c_i, c_{i+1}) = (k,l)} / #{i : c_i = k}`.
///
/// Rows for never-visited source states are NaN. Entries may exceed 1 at
/// finite n; that is intentional.
pub fn estimate_p(labels: &Labeling) -> Array2<f64> {
    let n = labels.len();
    let k = labels.k();
    let vals = labels.values();
    let mut pair = Array2::<f64>::zeros((k, k));
    for w in vals.windows(2) {
        pair[[w[0], w[1]]] += 1.0;
    }
    let counts = labels.counts();
    let scale = n as f64 / (n as f64 - 1.0);
    let mut p = Array2::<f64>::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            p[[a, b]] = if counts[a] > 0 {
                scale * pair[[a, b]] / counts[a] as f64
            } else {
                f64::NAN
            };
        }
    }
    p
}

/// Clamp to [0,1] and renormalize each defined row to sum 1; fully
/// undefined rows become uniform.
pub fn project_stochastic(p_hat: &Array2<f64>) -> Array2<f64> {
    let k = p_hat.nrows();
    let mut out = Array2::<f64>::zeros((k, k));
    for a in 0..k {
        let defined = (0..k).all(|b| p_hat[[a, b]].is_finite());
        if !defined {
            for b in 0..k {
                out[[a, b]] = 1.0 / k as f64;
            }
            continue;
        }
        let mut row: Vec<f64> = (0..k).map(|b| p_hat[[a, b]].clamp(0.0, 1.0)).collect();
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            row = vec![1.0 / k as f64; k];
        } else {
            for v in &mut row {
                *v /= total;
            }
        }
        for (b, v) in row.into_iter().enumerate() {
            out[[a, b]] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_graph;
    use ndarray::arr2;

    fn labeling(v: &[usize], k: usize) -> Labeling {
        Labeling::new(v.to_vec(), k).unwrap()
    }

    #[test]
    fn q_on_empty_and_complete_graphs() {
        let labels = labeling(&[0, 0, 1, 1], 2);
        let empty = OrderedGraph::empty(4);
        let q = estimate_q(&empty, &labels).unwrap();
        assert!(q.iter().all(|&x| x == 0.0));
        let complete =
            OrderedGraph::from_pairs(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
                .unwrap();
        let q = estimate_q(&complete, &labels).unwrap();
        assert!(q.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn q_hand_counted_with_undefined_diagonal() {
        // G1 = {0,1}, G2 = {2}; edges {0,1} and {0,2}.
        let labels = labeling(&[0, 0, 1], 2);
        let g = OrderedGraph::from_pairs(3, &[(0, 1), (0, 2)]).unwrap();
        let q = estimate_q(&g, &labels).unwrap();
        assert!((q[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((q[[0, 1]] - 0.5).abs() < 1e-15);
        assert!((q[[1, 0]] - 0.5).abs() < 1e-15);
        assert!(q[[1, 1]].is_nan());
    }

    #[test]
    fn pi_frequency_vector() {
        assert_eq!(
            estimate_pi(&labeling(&[0, 0, 1, 1], 2)).to_vec(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            estimate_pi(&labeling(&[0, 0, 0], 3)).to_vec(),
            vec![1.0, 0.0, 0.0]
        );
        let pi = estimate_pi(&labeling(&[0, 1, 1, 2, 2, 2], 3));
        assert_eq!(pi.to_vec(), vec![1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]);
        assert!((pi.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn p_constant_labels_normalizes_to_one() {
        let p = estimate_p(&labeling(&[0, 0, 0, 0], 1));
        assert!((p[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn p_can_exceed_one_at_finite_n() {
        let p = estimate_p(&labeling(&[0, 1, 0, 1], 2));
        assert!((p[[0, 1]] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn p_hand_counted() {
        let p = estimate_p(&labeling(&[0, 0, 1, 0], 2));
        assert!((p[[0, 0]] - 4.0 / 9.0).abs() < 1e-12);
        assert!((p[[0, 1]] - 4.0 / 9.0).abs() < 1e-12);
        assert!((p[[1, 0]] - 4.0 / 3.0).abs() < 1e-12);
        assert!((p[[1, 1]] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn p_undefined_row_for_unvisited_state() {
        let p = estimate_p(&labeling(&[0, 0, 0], 2));
        assert!(p[[1, 0]].is_nan() && p[[1, 1]].is_nan());
    }

    #[test]
    fn projection_cases() {
        let already = arr2(&[[0.3, 0.7], [0.5, 0.5]]);
        assert_eq!(project_stochastic(&already), already);
        let over = arr2(&[[4.0 / 3.0, 0.0], [0.5, 0.5]]);
        let proj = project_stochastic(&over);
        assert!((proj[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((proj[[0, 1]] - 0.0).abs() < 1e-15);
        let undef = arr2(&[[f64::NAN, f64::NAN], [1.0, 0.0]]);
        let proj = project_stochastic(&undef);
        assert_eq!(proj[[0, 0]], 0.5);
        assert_eq!(proj[[0, 1]], 0.5);
    }

    #[test]
    fn permutation_equivariance() {
        let params = crate::presets::four_communities();
        let (graph, labels) = sample_graph(&params, 80, 5).unwrap();
        let q = estimate_q(&graph, &labels).unwrap();
        let p = estimate_p(&labels);
        let pi = estimate_pi(&labels);
        // relabel by the cycle sigma(c) = c+1 mod 4
        let perm = [1usize, 2, 3, 0];
        let relabeled = labels.relabel(&perm);
        let q2 = estimate_q(&graph, &relabeled).unwrap();
        let p2 = estimate_p(&relabeled);
        let pi2 = estimate_pi(&relabeled);
        for a in 0..4 {
            assert!((pi[a] - pi2[perm[a]]).abs() < 1e-15);
            for b in 0..4 {
                let d = (q[[a, b]] - q2[[perm[a], perm[b]]]).abs();
                assert!(d < 1e-15 || (q[[a, b]].is_nan() && q2[[perm[a], perm[b]]].is_nan()));
                let d = (p[[a, b]] - p2[[perm[a], perm[b]]]).abs();
                assert!(d < 1e-15 || (p[[a, b]].is_nan() && p2[[perm[a], perm[b]]].is_nan()));
            }
        }
    }

    #[test]
    fn q_unbiased_on_ground_truth() {
        // mean of Q-hat over many seeds approaches alpha * Q0
        let params = crate::presets::two_communities();
        let mut acc = Array2::<f64>::zeros((2, 2));
        let reps = 300;
        for seed in 0..reps {
            let (graph, labels) = sample_graph(&params, 200, seed).unwrap();
            let q = estimate_q(&graph, &labels).unwrap();
            acc += &q;
        }
        acc.mapv_inplace(|x| x / reps as f64);
        let dev = (&acc - &params.q())
            .mapv(f64::abs)
            .fold(0.0f64, |m, &x| m.max(x));
        assert!(dev < 0.01, "bias {dev}");
    }
}
