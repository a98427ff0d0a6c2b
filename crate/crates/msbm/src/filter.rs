//! Collaborative filtering: infer the community of a late node from
//! partial connectivity to an observed prefix, via maximum a posteriori
//! under known parameters (optimal), point estimates (plug-in), or the
//! fitted HMM posterior (reliable).
//!
//! All three estimators share the Bayes structure
//! `posterior(k) ∝ likelihood(edges | k) × bridge(C_m -> C_n = k)`; the
//! reliable variant sums the likelihood over hidden prefix paths weighted
//! by the HMM posterior, carrying the chain through position m so that it
//! degenerates exactly to the plug-in rule when the emission matrix is the
//! identity.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::estimators::{project_stochastic, EstimatedParams};
use crate::hmm::{forward_backward, HmmState};
use crate::linalg::mat_pow;
use crate::model::{Labeling, ModelParams};

/// Partial observation of how a late node connects to the prefix.
#[derive(Debug, Clone)]
pub struct FilterQuery {
    /// Size of the fully observed prefix.
    pub m: usize,
    /// Index (1-based count) of the query node; `n > m`.
    pub n: usize,
    /// Sorted `(prefix position, edge present)` pairs, positions 0-based.
    pub observed: Vec<(usize, bool)>,
}

impl FilterQuery {
    pub fn new(m: usize, n: usize, observed: Vec<(usize, bool)>) -> Result<Self> {
        if n <= m {
            return Err(Error::InvalidInput(format!("need n > m, got n={n} m={m}")));
        }
        if observed.is_empty() {
            return Err(Error::InvalidInput("empty observation set".into()));
        }
        for w in observed.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidInput(
                    "observation indices must be strictly increasing".into(),
                ));
            }
        }
        if observed.last().unwrap().0 >= m {
            return Err(Error::InvalidInput("observation index outside prefix".into()));
        }
        Ok(Self { m, n, observed })
    }

    /// Observation set `{m-s, ..., m-1}` with the edges read off a graph
    /// that contains the query node at index `n-1`.
    pub fn suffix_window(
        graph: &crate::model::OrderedGraph,
        m: usize,
        n: usize,
        s: usize,
    ) -> Result<Self> {
        if s == 0 || s > m {
            return Err(Error::InvalidInput("window size out of range".into()));
        }
        let observed = (m - s..m)
            .map(|i| (i, graph.has_edge(i, n - 1)))
            .collect();
        Self::new(m, n, observed)
    }
}

fn log_bernoulli(q: f64, x: bool) -> f64 {
    let p = if x { q } else { 1.0 - q };
    p.ln() // ln(0) = -inf marks an impossible observation
}

fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn normalize_log_posterior(mut log_scores: Vec<f64>) -> Vec<f64> {
    let mx = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        // every community is impossible; fall back to uniform
        let k = log_scores.len() as f64;
        return vec![1.0 / k; log_scores.len()];
    }
    for s in &mut log_scores {
        *s = (*s - mx).exp();
    }
    let total: f64 = log_scores.iter().sum();
    log_scores.into_iter().map(|s| s / total).collect()
}

/// Posterior over communities given true parameters and true prefix
/// labels: `∝ prod_{i in E} Bern(Q[c_i][k]; x_i) × (P^{n-m})[c_{m-1}][k]`.
pub fn optimal_posterior(
    params: &ModelParams,
    truth: &Labeling,
    query: &FilterQuery,
) -> Result<Vec<f64>> {
    if truth.len() != query.m {
        return Err(Error::InvalidInput("labeling length != m".into()));
    }
    if truth.k() != params.k {
        return Err(Error::InvalidInput("K mismatch".into()));
    }
    let q = params.q();
    let bridge = mat_pow(&params.p, query.n - query.m);
    let cm = *truth.values().last().unwrap();
    let scores: Vec<f64> = (0..params.k)
        .map(|k| {
            let edges: f64 = query
                .observed
                .iter()
                .map(|&(i, x)| log_bernoulli(q[[truth.values()[i], k]], x))
                .sum();
            edges + bridge[[cm, k]].ln()
        })
        .collect();
    Ok(normalize_log_posterior(scores))
}

/// MAP community under true parameters; ties break to the lowest index.
pub fn map_optimal(
    params: &ModelParams,
    truth: &Labeling,
    query: &FilterQuery,
) -> Result<usize> {
    optimal_posterior(params, truth, query).map(|p| argmax_lowest(&p))
}

/// Plug-in posterior: point estimates substituted for the parameters, with
/// the projected-stochastic transition estimate powering the bridge.
pub fn plugin_posterior(
    est: &EstimatedParams,
    labels_hat: &Labeling,
    query: &FilterQuery,
) -> Result<Vec<f64>> {
    if labels_hat.len() != query.m {
        return Err(Error::InvalidInput("labeling length != m".into()));
    }
    if labels_hat.k() != est.k {
        return Err(Error::InvalidInput("K mismatch".into()));
    }
    for &(i, _) in &query.observed {
        let c = labels_hat.values()[i];
        if (0..est.k).any(|k| !est.q_hat[[c, k]].is_finite()) {
            return Err(Error::MissingEstimate(format!("Q-hat row {c} undefined")));
        }
    }
    let bridge = mat_pow(&project_stochastic(&est.p_hat), query.n - query.m);
    let cm = *labels_hat.values().last().unwrap();
    let scores: Vec<f64> = (0..est.k)
        .map(|k| {
            let edges: f64 = query
                .observed
                .iter()
                .map(|&(i, x)| log_bernoulli(est.q_hat[[labels_hat.values()[i], k]], x))
                .sum();
            edges + bridge[[cm, k]].ln()
        })
        .collect();
    Ok(normalize_log_posterior(scores))
}

pub fn map_plugin(
    est: &EstimatedParams,
    labels_hat: &Labeling,
    query: &FilterQuery,
) -> Result<usize> {
    plugin_posterior(est, labels_hat, query).map(|p| argmax_lowest(&p))
}

/// Reliable posterior: the edge likelihood is summed over hidden prefix
/// paths under the fitted HMM, by dynamic programming over the observation
/// anchors; the chain is carried through position m and bridged to the
/// query node with the projected transition estimate, so identity
/// emissions reproduce the plug-in posterior exactly.
pub fn reliable_posterior(
    theta: &HmmState,
    est: &EstimatedParams,
    labels_hat: &Labeling,
    query: &FilterQuery,
) -> Result<Vec<f64>> {
    if labels_hat.len() != query.m {
        return Err(Error::InvalidInput("labeling length != m".into()));
    }
    let k = est.k;
    if labels_hat.k() != k || theta.k() != k {
        return Err(Error::InvalidInput("K mismatch".into()));
    }
    for row in 0..k {
        if (0..k).any(|c| !est.q_hat[[row, c]].is_finite()) {
            return Err(Error::MissingEstimate(format!("Q-hat row {row} undefined")));
        }
    }
    let tables = forward_backward(theta, labels_hat, None)?;
    let bridge = mat_pow(&project_stochastic(&est.p_hat), query.n - query.m);
    let vals = labels_hat.values();
    let first_anchor = query.observed[0].0;

    let mut log_scores = Vec::with_capacity(k);
    for target in 0..k {
        // u[c] ~ P(observed clusters up to current position, C_pos = c,
        // edges seen so far | theta), tracked up to exp(logscale)
        let mut u: Vec<f64> = (0..k).map(|c| tables.alpha[[first_anchor, c]]).collect();
        let mut logscale = 0.0f64;
        let mut anchor_iter = query.observed.iter().peekable();
        let mut pos = first_anchor;
        loop {
            // consume anchors at this position
            if let Some(&&(i, x)) = anchor_iter.peek() {
                if i == pos {
                    for (c, val) in u.iter_mut().enumerate() {
                        let p = if x {
                            est.q_hat[[c, target]]
                        } else {
                            1.0 - est.q_hat[[c, target]]
                        };
                        *val *= p;
                    }
                    anchor_iter.next();
                }
            }
            if pos + 1 == query.m {
                break;
            }
            // propagate one step with the emission at the next position
            pos += 1;
            let obs = vals[pos];
            let mut next = vec![0.0f64; k];
            for (b, slot) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..k {
                    s += u[c] * theta.p_tilde[[c, b]];
                }
                *slot = s * theta.o[[b, obs]];
            }
            u = next;
            let mx = u.iter().cloned().fold(0.0f64, f64::max);
            if mx <= 0.0 {
                logscale = f64::NEG_INFINITY;
                break;
            }
            for v in &mut u {
                *v /= mx;
            }
            logscale += mx.ln();
        }
        let total: f64 = if logscale.is_finite() {
            (0..k).map(|c| u[c] * bridge[[c, target]]).sum()
        } else {
            0.0
        };
        log_scores.push(if total > 0.0 {
            total.ln() + logscale
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(normalize_log_posterior(log_scores))
}

pub fn map_reliable(
    theta: &HmmState,
    est: &EstimatedParams,
    labels_hat: &Labeling,
    query: &FilterQuery,
) -> Result<usize> {
    reliable_posterior(theta, est, labels_hat, query).map(|p| argmax_lowest(&p))
}

#[allow(dead_code)]
fn unused(_: &Array2<f64>) {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_graph;
    use ndarray::{arr1, arr2};

    fn exact_est(params: &ModelParams) -> EstimatedParams {
        EstimatedParams {
            k: params.k,
            q_hat: params.q(),
            pi_hat: params.pi.clone(),
            p_hat: params.p.clone(),
        }
    }

    #[test]
    fn one_community_returns_zero() {
        let params = crate::model::ModelParams::new(
            arr2(&[[1.0]]),
            arr1(&[1.0]),
            1.0,
            arr2(&[[0.5]]),
        )
        .unwrap();
        let truth = Labeling::new(vec![0, 0, 0], 1).unwrap();
        let q = FilterQuery::new(3, 5, vec![(2, true)]).unwrap();
        assert_eq!(map_optimal(&params, &truth, &q).unwrap(), 0);
    }

    #[test]
    fn optimal_is_direct_argmax_over_k() {
        let params = crate::presets::four_communities();
        let (graph, truth) = sample_graph(&params, 20, 1).unwrap();
        let m = 16;
        let q = FilterQuery::suffix_window(&graph, m, 20, 3).unwrap();
        let prefix = truth.prefix(m);
        let post = optimal_posterior(&params, &prefix, &q).unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // direct evaluation of the displayed product
        let qm = params.q();
        let bridge = mat_pow(&params.p, 4);
        let cm = prefix.values()[m - 1];
        let mut direct = [0.0f64; 4];
        for (k, slot) in direct.iter_mut().enumerate() {
            let mut v = bridge[[cm, k]];
            for &(i, x) in &q.observed {
                let c = prefix.values()[i];
                v *= if x { qm[[c, k]] } else { 1.0 - qm[[c, k]] };
            }
            *slot = v;
        }
        let total: f64 = direct.iter().sum();
        for k in 0..4 {
            assert!((post[k] - direct[k] / total).abs() < 1e-12);
        }
        assert_eq!(
            map_optimal(&params, &prefix, &q).unwrap(),
            (0..4).max_by(|&a, &b| direct[a].total_cmp(&direct[b])).unwrap()
        );
    }

    #[test]
    fn plugin_with_truth_agrees_with_optimal() {
        let params = crate::presets::four_communities();
        let (graph, truth) = sample_graph(&params, 30, 5).unwrap();
        let m = 24;
        let prefix = truth.prefix(m);
        let est = exact_est(&params);
        for s in [1, 3, 8] {
            let q = FilterQuery::suffix_window(&graph, m, 30, s).unwrap();
            assert_eq!(
                map_optimal(&params, &prefix, &q).unwrap(),
                map_plugin(&est, &prefix, &q).unwrap()
            );
        }
    }

    #[test]
    fn identity_emissions_reduce_reliable_to_plugin() {
        let params = crate::presets::four_communities();
        let (graph, truth) = sample_graph(&params, 40, 7).unwrap();
        let m = 32;
        let prefix = truth.prefix(m);
        let est = exact_est(&params);
        let theta = HmmState {
            p_tilde: params.p.clone(),
            o: Array2::eye(4),
            mu: params.pi.clone(),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        for s in [1, 2, 6] {
            let q = FilterQuery::suffix_window(&graph, m, 40, s).unwrap();
            let a = reliable_posterior(&theta, &est, &prefix, &q).unwrap();
            let b = plugin_posterior(&est, &prefix, &q).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn reliable_matches_prefix_enumeration() {
        // brute-force oracle: sum the joint over all K^m hidden prefixes
        let params = crate::presets::two_communities();
        let (graph, truth) = sample_graph(&params, 8, 3).unwrap();
        let m = 5;
        let prefix = truth.prefix(m);
        let est = exact_est(&params);
        let theta = HmmState {
            p_tilde: arr2(&[[0.75, 0.25], [0.35, 0.65]]),
            o: arr2(&[[0.85, 0.15], [0.1, 0.9]]),
            mu: arr1(&[0.55, 0.45]),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        let q = FilterQuery::suffix_window(&graph, m, 8, 2).unwrap();
        let got = reliable_posterior(&theta, &est, &prefix, &q).unwrap();

        let bridge = mat_pow(&project_stochastic(&est.p_hat), 3);
        let mut want = [0.0f64; 2];
        for path_id in 0..(1 << m) {
            let path: Vec<usize> = (0..m).map(|i| (path_id >> i) & 1).collect();
            let mut base = theta.mu[path[0]] * theta.o[[path[0], prefix.values()[0]]];
            for i in 1..m {
                base *= theta.p_tilde[[path[i - 1], path[i]]]
                    * theta.o[[path[i], prefix.values()[i]]];
            }
            for (slot, want_k) in want.iter_mut().enumerate() {
                let mut v = base * bridge[[path[m - 1], slot]];
                for &(i, x) in &q.observed {
                    let qe = est.q_hat[[path[i], slot]];
                    v *= if x { qe } else { 1.0 - qe };
                }
                *want_k += v;
            }
        }
        let total = want[0] + want[1];
        for k in 0..2 {
            assert!(
                (got[k] - want[k] / total).abs() < 1e-10,
                "k={k}: {} vs {}",
                got[k],
                want[k] / total
            );
        }
    }

    #[test]
    fn posterior_scale_invariance() {
        // multiplying all scores by a constant cannot change the argmax:
        // normalize_log_posterior of shifted scores is identical
        let scores = vec![-3.0, -1.0, -2.0];
        let a = normalize_log_posterior(scores.clone());
        let b = normalize_log_posterior(scores.iter().map(|s| s + 7.5).collect());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn query_validation() {
        assert!(FilterQuery::new(5, 5, vec![(0, true)]).is_err());
        assert!(FilterQuery::new(5, 6, vec![]).is_err());
        assert!(FilterQuery::new(5, 6, vec![(3, true), (3, false)]).is_err());
        assert!(FilterQuery::new(5, 6, vec![(5, true)]).is_err());
        assert!(FilterQuery::new(5, 6, vec![(1, true), (4, false)]).is_ok());
    }

    #[test]
    fn degeneracy_chain_all_three_agree() {
        let params = crate::presets::four_communities();
        let (graph, truth) = sample_graph(&params, 50, 11).unwrap();
        let m = 40;
        let prefix = truth.prefix(m);
        let est = exact_est(&params);
        let theta = HmmState {
            p_tilde: params.p.clone(),
            o: Array2::eye(4),
            mu: params.pi.clone(),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        for s in [1, 4, 10] {
            let q = FilterQuery::suffix_window(&graph, m, 50, s).unwrap();
            let a = map_optimal(&params, &prefix, &q).unwrap();
            let b = map_plugin(&est, &prefix, &q).unwrap();
            let c = map_reliable(&theta, &est, &prefix, &q).unwrap();
            assert_eq!(a, b);
            assert_eq!(b, c);
        }
    }
}
