//! Hypothesis testing and model selection: the chi-square statistic for a
//! Markovian community dynamic against the independent-assignment null
//! (calibrated by Monte Carlo under the null), and the emission-jump
//! heuristic for choosing the number of communities.

use ndarray::Array1;

use crate::cluster::cluster;
use crate::error::{Error, Result};
use crate::estimators::EstimatedParams;
use crate::model::{Labeling, OrderedGraph};
use crate::rng::subseed;

/// Outcome of the Markov-dynamic test.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub statistic: f64,
    /// Calibrated rejection cutoff.
    pub threshold: f64,
    /// Monte Carlo replicates that completed.
    pub mc_replicates: usize,
    pub decision: bool,
    pub level: f64,
}

/// Model-selection record over a candidate range.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub k_min: usize,
    pub k_max: usize,
    /// `m_values[i]` is the worst-pair emission confusion at `K = k_min + i`.
    pub m_values: Vec<f64>,
    pub k_hat: usize,
}

/// `S_n = sum_{k,l} count_k (P_hat[k][l] - pi0[l])^2 / pi0[l]`.
///
/// Rows with zero visit count contribute nothing (their estimator rows
/// are undefined).
pub fn chi2_statistic(
    p_hat: &ndarray::Array2<f64>,
    counts: &[usize],
    pi0: &Array1<f64>,
) -> Result<f64> {
    let k = pi0.len();
    if p_hat.nrows() != k || p_hat.ncols() != k || counts.len() != k {
        return Err(Error::InvalidInput("chi2: dimension mismatch".into()));
    }
    if pi0.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidInput("pi0 must have positive entries".into()));
    }
    let mut s = 0.0;
    for a in 0..k {
        if counts[a] == 0 {
            continue;
        }
        for b in 0..k {
            let p = p_hat[[a, b]];
            if !p.is_finite() {
                return Err(Error::MissingEstimate(format!(
                    "P-hat[{a}][{b}] undefined with positive count"
                )));
            }
            let d = p - pi0[b];
            s += counts[a] as f64 * d * d / pi0[b];
        }
    }
    Ok(s)
}

fn pipeline_statistic(
    graph: &OrderedGraph,
    k: usize,
    pi0: &Array1<f64>,
    seed: u64,
) -> Result<(f64, EstimatedParams)> {
    let res = cluster(graph, k, seed)?;
    let est = EstimatedParams::from_graph(graph, &res.labels)?;
    let counts = res.labels.counts();
    let s = chi2_statistic(&est.p_hat, &counts, pi0)?;
    Ok((s, est))
}

/// Test the independent-assignment null against a Markovian dynamic.
///
/// The observed graph is clustered and the statistic computed from the
/// estimated transitions; the rejection threshold is the empirical
/// `(1-level)` quantile of the same statistic over `mc` synthetic graphs
/// with iid labels from `pi0` and edge probabilities taken from the
/// estimated connectivity of the observed graph, each one re-clustered
/// and re-estimated. Calibrating through the full pipeline keeps the
/// clusterer's own errors inside the null distribution.
pub fn markov_test(
    graph: &OrderedGraph,
    k: usize,
    pi0: &Array1<f64>,
    level: f64,
    mc: usize,
    seed: u64,
) -> Result<TestReport> {
    if mc < 100 {
        return Err(Error::InvalidInput("mc must be at least 100".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput("level must lie in (0,1)".into()));
    }
    if pi0.len() != k {
        return Err(Error::InvalidInput("pi0 length must equal K".into()));
    }
    if pi0.iter().any(|&x| x <= 0.0) || (pi0.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(
            "pi0 must be a distribution with positive entries".into(),
        ));
    }
    let n = graph.n();
    let (statistic, est) = pipeline_statistic(graph, k, pi0, subseed(seed, &[0]))?;

    // Edge model for the null replicates: estimated connectivity with
    // undefined entries backfilled by the global density.
    let density = graph.density();
    let q_null = est.q_hat.mapv(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { density });

    let mut stats = Vec::with_capacity(mc);
    let mut failures = 0usize;
    for rep in 0..mc {
        let rep_seed = subseed(seed, &[1, rep as u64]);
        let (g, _) = crate::model::sample_iid_graph(pi0, &q_null, n, rep_seed)?;
        match pipeline_statistic(&g, k, pi0, subseed(seed, &[2, rep as u64])) {
            Ok((s, _)) => stats.push(s),
            Err(_) => failures += 1,
        }
    }
    if stats.len() < (mc * 4) / 5 {
        return Err(Error::NoConvergence {
            iterations: failures,
            primal: f64::NAN,
            dual: f64::NAN,
        });
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    // order statistic with the +1 correction: exact level under
    // exchangeability
    let m = stats.len();
    let idx = (((1.0 - level) * (m + 1) as f64).ceil() as usize).clamp(1, m) - 1;
    let threshold = stats[idx];
    Ok(TestReport {
        statistic,
        threshold,
        mc_replicates: m,
        decision: statistic > threshold,
        level,
    })
}

/// EM budget for the per-K fits: the initialization carries the merge
/// hypothesis, a short refinement scores it without drifting into the
/// slow emission-blur optima of the small-sample likelihood.
const SELECT_K_EM_ITER: usize = 10;

/// Candidate-generation cutoff on the profile z-score per degree of
/// freedom; pairs below it are proposed for merging and the likelihood
/// arbitrates.
const MERGE_Z2_CUTOFF: f64 = 20.0;

/// Group estimated communities whose connectivity profiles are
/// statistically indistinguishable (the over-segmentation signature).
///
/// Returns a class id per label; distinguishable groups keep singleton
/// classes. The statistic per pair is the squared profile difference
/// weighted by its sampling variance, about 1 per degree of freedom when
/// the groups split one community and far larger otherwise.
pub fn merge_classes(graph: &OrderedGraph, labels: &Labeling) -> Result<Vec<usize>> {
    let k = labels.k();
    let est = EstimatedParams::from_graph(graph, labels)?;
    let density = graph.density();
    let q = est.q_hat.mapv(|v| if v.is_finite() { v } else { density });
    let counts = labels.counts();
    let pair_count = |a: usize, c: usize| -> f64 {
        if a == c {
            counts[a] as f64 * (counts[a] as f64 - 1.0) / 2.0
        } else {
            counts[a] as f64 * counts[c] as f64
        }
    };
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for a in 0..k {
        for b in a + 1..k {
            let mut z2 = 0.0;
            for c in 0..k {
                let (na, nb) = (pair_count(a, c).max(1.0), pair_count(b, c).max(1.0));
                let pooled = (q[[a, c]] * na + q[[b, c]] * nb) / (na + nb);
                let var = pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb);
                let diff = q[[a, c]] - q[[b, c]];
                if var > 1e-12 {
                    z2 += diff * diff / var;
                } else if diff.abs() > 1e-9 {
                    z2 += 1e6;
                }
            }
            if z2 / (k as f64) < MERGE_Z2_CUTOFF {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }
    let mut classes: Vec<usize> = (0..k).map(|x| find(&mut parent, x)).collect();
    // a merged class spanning most of the graph is a lumping artifact,
    // not a split community; dissolve it
    let n = labels.len();
    for root in 0..k {
        let share: usize = (0..k)
            .filter(|&b| classes[b] == root)
            .map(|b| counts[b])
            .sum();
        if share * 2 > n {
            for (b, class) in classes.iter_mut().enumerate() {
                if *class == root {
                    *class = b;
                }
            }
        }
    }
    Ok(classes)
}

/// HMM start point that duplicates the states inside each merge class:
/// states of a class share one emission row proportional to the class
/// members' sizes (plus an `epsilon` floor elsewhere). Duplicated states
/// are exchangeable, which EM preserves, so a genuinely split community
/// keeps its emission confusion saturated while the refinement runs.
pub fn merged_state_init(
    labels: &Labeling,
    classes: &[usize],
    epsilon: f64,
) -> Result<crate::hmm::HmmState> {
    let k = labels.k();
    if classes.len() != k {
        return Err(Error::InvalidInput("classes length must be K".into()));
    }
    let counts = labels.counts();
    let floor = if k > 1 { epsilon / (k as f64 - 1.0) } else { 0.0 };
    let mut o = ndarray::Array2::<f64>::zeros((k, k));
    for a in 0..k {
        let members: Vec<usize> = (0..k).filter(|&b| classes[b] == classes[a]).collect();
        let class_size: usize = members.iter().map(|&b| counts[b]).sum();
        let mut row = vec![0.0f64; k];
        for b in 0..k {
            row[b] = if classes[b] == classes[a] {
                (counts[b] as f64 / class_size.max(1) as f64).max(floor)
            } else {
                floor
            };
        }
        let total: f64 = row.iter().sum();
        for (b, v) in row.into_iter().enumerate() {
            o[[a, b]] = v / total;
        }
    }
    Ok(crate::hmm::HmmState {
        p_tilde: ndarray::Array2::from_elem((k, k), 1.0 / k as f64),
        o,
        mu: ndarray::Array1::from_elem(k, 1.0 / k as f64),
        log_likelihood: f64::NEG_INFINITY,
        history: Vec::new(),
    })
}

/// Fit used by [`select_k`]: Baum-Welch from the merge-informed start.
/// With only singleton classes this is the standard near-identity start;
/// duplicated states stay exchangeable through the refinement, so the
/// emission confusion of a genuinely split community survives in the
/// fitted matrix.
pub fn fit_confusion_hmm(
    graph: &OrderedGraph,
    labels: &Labeling,
) -> Result<crate::hmm::HmmState> {
    let classes = merge_classes(graph, labels)?;
    let k = labels.k();
    if (0..k).all(|a| classes.iter().filter(|&&c| c == classes[a]).count() == 1) {
        return crate::hmm::baum_welch(labels, None, 0.01, SELECT_K_EM_ITER, 1e-6);
    }
    let init = merged_state_init(labels, &classes, 0.01)?;
    crate::hmm::baum_welch_from(init, labels, None, SELECT_K_EM_ITER, 1e-6)
}

fn worst_pair_confusion(o: &ndarray::Array2<f64>) -> f64 {
    let k = o.nrows();
    let mut m = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                m = m.max(o[[a, b]] + o[[b, a]]);
            }
        }
    }
    m
}

/// Pick the number of communities by the largest forward jump of the
/// worst-pair emission confusion `M(K) = max_{k != l} O[l][k] + O[k][l]`.
pub fn select_k(
    graph: &OrderedGraph,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<SelectionTrace> {
    let n = graph.n();
    if !(2 <= k_min && k_min < k_max && k_max <= n) {
        return Err(Error::InvalidInput(format!(
            "need 2 <= k_min < k_max <= n, got {k_min}..{k_max} with n={n}"
        )));
    }
    let mut m_values = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let res = cluster(graph, k, subseed(seed, &[k as u64])).map_err(|e| {
            Error::Config(format!("clustering failed at K={k}: {e}"))
        })?;
        let theta = fit_confusion_hmm(graph, &res.labels)
            .map_err(|e| Error::Config(format!("EM failed at K={k}: {e}")))?;
        m_values.push(worst_pair_confusion(&theta.o));
    }
    let mut k_hat = k_min;
    let mut best_jump = f64::NEG_INFINITY;
    for i in 0..m_values.len() - 1 {
        let jump = m_values[i + 1] - m_values[i];
        if jump > best_jump {
            best_jump = jump;
            k_hat = k_min + i;
        }
    }
    Ok(SelectionTrace { k_min, k_max, m_values, k_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;
    use ndarray::arr2;

    #[test]
    fn chi2_null_exact_zero() {
        let pi0 = arr1(&[0.5, 0.5]);
        let p_hat = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(chi2_statistic(&p_hat, &[10, 20], &pi0).unwrap(), 0.0);
    }

    #[test]
    fn chi2_hand_computed_and_linear_in_counts() {
        let pi0 = arr1(&[0.5, 0.5]);
        let p_hat = arr2(&[[0.7, 0.3], [0.5, 0.5]]);
        let s = chi2_statistic(&p_hat, &[10, 10], &pi0).unwrap();
        assert!((s - 1.6).abs() < 1e-12);
        let s3 = chi2_statistic(&p_hat, &[30, 30], &pi0).unwrap();
        assert!((s3 - 4.8).abs() < 1e-12);
    }

    #[test]
    fn chi2_permutation_invariance() {
        let pi0 = arr1(&[0.3, 0.2, 0.5]);
        let p_hat = arr2(&[[0.6, 0.2, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]]);
        let counts = [5usize, 9, 2];
        let s = chi2_statistic(&p_hat, &counts, &pi0).unwrap();
        // permute communities by the cycle (0 1 2)
        let perm = [1usize, 2, 0];
        let mut p2 = p_hat.clone();
        let mut pi2 = pi0.clone();
        let mut c2 = [0usize; 3];
        for a in 0..3 {
            pi2[perm[a]] = pi0[a];
            c2[perm[a]] = counts[a];
            for b in 0..3 {
                p2[[perm[a], perm[b]]] = p_hat[[a, b]];
            }
        }
        let s2 = chi2_statistic(&p2, &c2, &pi2).unwrap();
        assert!((s - s2).abs() < 1e-12);
    }

    #[test]
    fn chi2_rejects_zero_pi0() {
        let pi0 = arr1(&[1.0, 0.0]);
        let p_hat = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        assert!(chi2_statistic(&p_hat, &[1, 1], &pi0).is_err());
    }

    #[test]
    fn markov_test_validates_inputs() {
        let g = OrderedGraph::empty(10);
        let pi0 = arr1(&[0.5, 0.5]);
        assert!(markov_test(&g, 2, &pi0, 0.05, 50, 1).is_err());
        assert!(markov_test(&g, 2, &pi0, 1.5, 100, 1).is_err());
        let bad = arr1(&[1.0, 0.0]);
        assert!(markov_test(&g, 2, &bad, 0.05, 100, 1).is_err());
    }

    #[test]
    fn select_k_validates_range() {
        let g = OrderedGraph::empty(10);
        assert!(select_k(&g, 1, 5, 0).is_err());
        assert!(select_k(&g, 3, 3, 0).is_err());
        assert!(select_k(&g, 2, 11, 0).is_err());
    }
}
