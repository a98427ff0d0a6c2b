//! Link prediction for the next incoming node: the exact posterior
//! probability under known parameters, the plug-in classifier, the
//! HMM-corrected reliable classifier, and the classification risk.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::estimators::EstimatedParams;
use crate::hmm::{forward_backward, HmmState};
use crate::model::{Labeling, ModelParams};

/// Edge posterior scores for the incoming node and their 1/2-threshold
/// decisions.
#[derive(Debug, Clone)]
pub struct LinkScores {
    pub eta: Vec<f64>,
    pub decisions: Vec<bool>,
}

impl LinkScores {
    fn from_eta(eta: Vec<f64>) -> Self {
        let decisions = eta.iter().map(|&e| e >= 0.5).collect();
        Self { eta, decisions }
    }
}

/// Exact posterior `eta_i = P(X_{i,n+1} = 1 | communities)`
/// `= sum_k Q[c_i][k] P[c_n][k]`.
pub fn eta_true(params: &ModelParams, labels: &Labeling) -> Vec<f64> {
    let q = params.q();
    let last = *labels.values().last().expect("non-empty labeling");
    labels
        .values()
        .iter()
        .map(|&ci| (0..params.k).map(|k| q[[ci, k]] * params.p[[last, k]]).sum())
        .collect()
}

fn check_finite_row(m: &Array2<f64>, row: usize, what: &str) -> Result<()> {
    if (0..m.ncols()).any(|c| !m[[row, c]].is_finite()) {
        return Err(Error::MissingEstimate(format!(
            "{what} row {row} has undefined entries"
        )));
    }
    Ok(())
}

fn clamp_scores(mut eta: Vec<f64>, method: &str) -> Vec<f64> {
    let out_of_range = eta.iter().filter(|&&e| !(0.0..=1.0).contains(&e)).count();
    if out_of_range > 0 {
        log::warn!(
            "{method}: {out_of_range} raw score(s) left [0,1] (non-stochastic P-hat at finite n); clamping"
        );
        for e in &mut eta {
            *e = e.clamp(0.0, 1.0);
        }
    }
    eta
}

/// Plug-in scores `sum_k Qhat[chat_i][k] Phat[chat_n][k]`, clamped to
/// [0,1], thresholded at 1/2.
pub fn msbm_classify(est: &EstimatedParams, labels_hat: &Labeling) -> Result<LinkScores> {
    if labels_hat.is_empty() {
        return Err(Error::InvalidInput("empty labeling".into()));
    }
    if labels_hat.k() != est.k {
        return Err(Error::InvalidInput("K mismatch".into()));
    }
    let last = *labels_hat.values().last().unwrap();
    check_finite_row(&est.p_hat, last, "P-hat")?;
    let mut eta = Vec::with_capacity(labels_hat.len());
    for &ci in labels_hat.values() {
        check_finite_row(&est.q_hat, ci, "Q-hat")?;
        let s: f64 = (0..est.k)
            .map(|k| est.q_hat[[ci, k]] * est.p_hat[[last, k]])
            .sum();
        eta.push(s);
    }
    Ok(LinkScores::from_eta(clamp_scores(eta, "msbm_classify")))
}

/// Reliable scores: plug-in scores averaged over the joint posterior of
/// `(C_i, C_n)` under the fitted HMM,
/// `eta_i = sum_{a,b} zeta^{(i,n)}[a][b] * sum_k Qhat[a][k] Phat[b][k]`.
///
/// The whole vector is built from one forward/backward pass plus suffix
/// products of the per-position transition-emission factors, so the cost
/// is O(K^3 n).
pub fn reliable_classify(
    theta: &HmmState,
    est: &EstimatedParams,
    labels_hat: &Labeling,
) -> Result<LinkScores> {
    let n = labels_hat.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty labeling".into()));
    }
    let k = est.k;
    if labels_hat.k() != k || theta.k() != k {
        return Err(Error::InvalidInput("K mismatch".into()));
    }
    for row in 0..k {
        check_finite_row(&est.q_hat, row, "Q-hat")?;
        check_finite_row(&est.p_hat, row, "P-hat")?;
    }
    let tables = forward_backward(theta, labels_hat, None)?;
    // w[a][b] = sum_k Qhat[a][k] * Phat[b][k]
    let w = est.q_hat.dot(&est.p_hat.t());
    let vals = labels_hat.values();
    let mut eta = vec![0.0f64; n];

    // i = n-1: zeta degenerates to the diagonal gamma(n-1)
    eta[n - 1] = (0..k).map(|a| tables.gamma[[n - 1, a]] * w[[a, a]]).sum();

    // suffix products S_i ~ chi^{(i, n-1)} up to a positive factor
    let mut suffix = Array2::<f64>::eye(k);
    for i in (0..n - 1).rev() {
        let obs = vals[i + 1];
        let mut next = Array2::<f64>::zeros((k, k));
        for a in 0..k {
            for b in 0..k {
                let mut s = 0.0;
                for c in 0..k {
                    s += theta.p_tilde[[a, c]] * theta.o[[c, obs]] * suffix[[c, b]];
                }
                next[[a, b]] = s;
            }
        }
        let mx = next.iter().fold(0.0f64, |m, &x| m.max(x));
        if mx <= 0.0 {
            return Err(Error::DegenerateLikelihood(format!(
                "suffix product vanished at position {i}"
            )));
        }
        next.mapv_inplace(|x| x / mx);
        suffix = next;

        // zeta^{(i, n-1)}[a][b] ~ alpha[i][a] * suffix[a][b] (beta(n-1) = 1)
        let mut total = 0.0;
        let mut score = 0.0;
        for a in 0..k {
            for b in 0..k {
                let z = tables.alpha[[i, a]] * suffix[[a, b]];
                total += z;
                score += z * w[[a, b]];
            }
        }
        if total <= 0.0 {
            return Err(Error::DegenerateLikelihood(format!(
                "zeta mass vanished at position {i}"
            )));
        }
        eta[i] = score / total;
    }
    Ok(LinkScores::from_eta(clamp_scores(eta, "reliable_classify")))
}

/// Average misclassification risk of binary decisions against posterior
/// probabilities: `(1/n) sum_i (1 - eta_i) 1{g_i = 1} + eta_i 1{g_i = 0}`.
pub fn risk(decisions: &[bool], eta: &[f64]) -> Result<f64> {
    if decisions.len() != eta.len() {
        return Err(Error::InvalidInput("length mismatch".into()));
    }
    if decisions.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    let n = eta.len() as f64;
    Ok(decisions
        .iter()
        .zip(eta)
        .map(|(&g, &e)| if g { 1.0 - e } else { e })
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::baum_welch;
    use crate::model::sample_graph;
    use ndarray::{arr1, arr2};

    #[test]
    fn eta_true_one_community() {
        let params = crate::model::ModelParams::new(
            arr2(&[[1.0]]),
            arr1(&[1.0]),
            1.0,
            arr2(&[[0.4]]),
        )
        .unwrap();
        let labels = Labeling::new(vec![0, 0, 0], 1).unwrap();
        assert!(eta_true(&params, &labels)
            .iter()
            .all(|&e| (e - 0.4).abs() < 1e-15));
    }

    #[test]
    fn eta_true_hand_computed() {
        // Q row 0 dotted with P row 1 of the four-community benchmark.
        let params = crate::presets::four_communities();
        let labels = Labeling::new(vec![0, 1], 4).unwrap();
        let eta = eta_true(&params, &labels);
        assert!((eta[0] - 0.317).abs() < 1e-12);
    }

    #[test]
    fn eta_true_rank_one_chain_ignores_last_label() {
        let p = arr2(&[[0.3, 0.7], [0.3, 0.7]]);
        let q0 = arr2(&[[0.5, 0.1], [0.1, 0.6]]);
        let params =
            crate::model::ModelParams::with_stationary(p, 1.0, q0).unwrap();
        let l1 = Labeling::new(vec![0, 1, 0], 2).unwrap();
        let l2 = Labeling::new(vec![0, 1, 1], 2).unwrap();
        assert!((eta_true(&params, &l1)[0] - eta_true(&params, &l2)[0]).abs() < 1e-15);
    }

    #[test]
    fn plugin_with_exact_parameters_equals_eta() {
        let params = crate::presets::four_communities();
        let (_, labels) = sample_graph(&params, 50, 1).unwrap();
        let est = EstimatedParams {
            k: 4,
            q_hat: params.q(),
            pi_hat: params.pi.clone(),
            p_hat: params.p.clone(),
        };
        let scores = msbm_classify(&est, &labels).unwrap();
        let truth = eta_true(&params, &labels);
        for (a, b) in scores.eta.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decision_boundary_is_inclusive() {
        let s = LinkScores::from_eta(vec![0.5, 0.499999, 0.500001]);
        assert_eq!(s.decisions, vec![true, false, true]);
    }

    #[test]
    fn identity_emissions_make_reliable_equal_plugin() {
        let params = crate::presets::four_communities();
        let (graph, labels) = sample_graph(&params, 60, 2).unwrap();
        let est = EstimatedParams::from_graph(&graph, &labels).unwrap();
        let est = EstimatedParams {
            q_hat: est.q_hat.mapv(|x| if x.is_nan() { 0.0 } else { x }),
            ..est
        };
        let theta = HmmState {
            p_tilde: crate::estimators::project_stochastic(&est.p_hat),
            o: Array2::eye(4),
            mu: arr1(&[0.25, 0.25, 0.25, 0.25]),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        let plugin = msbm_classify(&est, &labels).unwrap();
        let reliable = reliable_classify(&theta, &est, &labels).unwrap();
        for (a, b) in reliable.eta.iter().zip(&plugin.eta) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_posterior_averages_plugin_scores() {
        // all-uniform theta makes zeta uniform, so each reliable score is
        // the mean of w over all (a, b)
        let k = 3;
        let theta = HmmState {
            p_tilde: Array2::from_elem((k, k), 1.0 / 3.0),
            o: Array2::from_elem((k, k), 1.0 / 3.0),
            mu: arr1(&[1.0 / 3.0; 3]),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        let q_hat = arr2(&[[0.5, 0.1, 0.2], [0.1, 0.4, 0.3], [0.2, 0.3, 0.6]]);
        let p_hat = arr2(&[[0.2, 0.5, 0.3], [0.3, 0.3, 0.4], [0.1, 0.8, 0.1]]);
        let est = EstimatedParams {
            k,
            q_hat: q_hat.clone(),
            pi_hat: arr1(&[0.3, 0.3, 0.4]),
            p_hat: p_hat.clone(),
        };
        let labels = Labeling::new(vec![0, 1, 2, 0], 3).unwrap();
        let scores = reliable_classify(&theta, &est, &labels).unwrap();
        let w = q_hat.dot(&p_hat.t());
        let mean = w.sum() / 9.0;
        for i in 0..3 {
            assert!((scores.eta[i] - mean).abs() < 1e-12);
        }
        // last position: mean over the diagonal only
        let diag_mean = (0..3).map(|a| w[[a, a]]).sum::<f64>() / 3.0;
        assert!((scores.eta[3] - diag_mean).abs() < 1e-12);
    }

    #[test]
    fn zeta_route_matches_direct_zeta() {
        // the suffix-product scores agree with assembling zeta per i
        let params = crate::presets::two_communities();
        let (graph, truth) = sample_graph(&params, 40, 3).unwrap();
        let res = crate::cluster::cluster(&graph, 2, 5).unwrap();
        let est = EstimatedParams::from_graph(&graph, &res.labels).unwrap();
        let theta = baum_welch(&res.labels, None, 0.01, 50, 1e-6).unwrap();
        let scores = reliable_classify(&theta, &est, &res.labels).unwrap();
        let w = est.q_hat.dot(&est.p_hat.t());
        let n = truth.len();
        for i in [0usize, 7, n - 2] {
            let z = crate::hmm::zeta(&theta, &res.labels, i, n - 1).unwrap();
            let want: f64 = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| z[[a, b]] * w[[a, b]])
                .sum();
            assert!(
                (scores.eta[i] - want.clamp(0.0, 1.0)).abs() < 1e-9,
                "i={i}: {} vs {want}",
                scores.eta[i]
            );
        }
    }

    #[test]
    fn risk_formula() {
        assert_eq!(risk(&[true, true], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(risk(&[true, false], &[0.5, 0.5]).unwrap(), 0.5);
        let r = risk(&[true, false], &[0.8, 0.3]).unwrap();
        assert!((r - (0.2 + 0.3) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bayes_threshold_minimizes_risk() {
        // exhaustive check over all decision vectors, n = 4
        let eta = [0.9, 0.2, 0.5, 0.31];
        let bayes: Vec<bool> = eta.iter().map(|&e| e >= 0.5).collect();
        let r_star = risk(&bayes, &eta).unwrap();
        for mask in 0..16u32 {
            let g: Vec<bool> = (0..4).map(|i| mask >> i & 1 == 1).collect();
            assert!(risk(&g, &eta).unwrap() >= r_star - 1e-15);
        }
    }
}
