//! Hidden Markov machinery over clusterer outputs: scaled forward/backward
//! recursions, Baum-Welch fitting (optionally with an unreliable gap in the
//! middle of the sequence), and the path-probability quantities `chi` and
//! `zeta` consumed by reliable link prediction and collaborative filtering.
//!
//! Hidden states are true communities, observations are the labels the
//! clustering algorithm produced. With a gap, positions strictly between
//! the reliable prefix and the reliable tail carry no emission factor, so
//! crossing the gap contributes exactly one transition power; with an
//! empty gap the recursions reduce to the textbook ones.

use ndarray::{Array1, Array2, Array3};

use crate::assignment::max_assignment;
use crate::error::{Error, Result};
use crate::model::Labeling;

/// Reliable-index specification: positions `1..=t` and
/// `n_start..=n_start+delta` (1-based) are observed, the rest are hidden.
#[derive(Debug, Clone, Copy)]
pub struct GapSpec {
    pub t: usize,
    pub n_start: usize,
    pub delta: usize,
}

impl GapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t < 1 || self.t >= self.n_start {
            return Err(Error::InvalidInput(format!(
                "gap requires 1 <= t < n_start, got t={} n_start={}",
                self.t, self.n_start
            )));
        }
        Ok(())
    }

    /// Total chain length including hidden positions.
    pub fn full_len(&self) -> usize {
        self.n_start + self.delta
    }

    /// Number of observed positions.
    pub fn observed_len(&self) -> usize {
        self.t + self.delta + 1
    }
}

/// HMM parameters: transition matrix of the hidden chain, emission matrix
/// (`o[k][l]` = probability the clusterer outputs `l` when the truth is
/// `k`), and initial distribution.
#[derive(Debug, Clone)]
pub struct HmmState {
    pub p_tilde: Array2<f64>,
    pub o: Array2<f64>,
    pub mu: Array1<f64>,
    /// Final observed-data log-likelihood.
    pub log_likelihood: f64,
    /// Log-likelihood after each EM iteration.
    pub history: Vec<f64>,
}

impl HmmState {
    /// Initialization used by [`baum_welch`]: uniform transitions and
    /// initial law, near-identity emissions with off-diagonal mass
    /// `epsilon`.
    pub fn init(k: usize, epsilon: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("K must be >= 1".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon {epsilon} not in (0,1)")));
        }
        let p_tilde = Array2::from_elem((k, k), 1.0 / k as f64);
        let mu = Array1::from_elem(k, 1.0 / k as f64);
        let o = if k == 1 {
            Array2::from_elem((1, 1), 1.0)
        } else {
            Array2::from_shape_fn((k, k), |(a, b)| {
                if a == b {
                    1.0 - epsilon
                } else {
                    epsilon / (k as f64 - 1.0)
                }
            })
        };
        Ok(Self { p_tilde, o, mu, log_likelihood: f64::NEG_INFINITY, history: Vec::new() })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.p_tilde.nrows() != k || self.p_tilde.ncols() != k || self.o.nrows() != k
            || self.o.ncols() != k
        {
            return Err(Error::InvalidParams("HMM dimension mismatch".into()));
        }
        for i in 0..k {
            let pr: f64 = (0..k).map(|j| self.p_tilde[[i, j]]).sum();
            let or: f64 = (0..k).map(|j| self.o[[i, j]]).sum();
            if (pr - 1.0).abs() > 1e-10 || (or - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParams(format!(
                    "HMM row {i} not stochastic (P~ {pr}, O {or})"
                )));
            }
        }
        if (self.mu.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParams("mu does not sum to 1".into()));
        }
        Ok(())
    }
}

/// Scaled forward/backward tables over the full position range (hidden gap
/// positions included when a gap is present).
#[derive(Debug, Clone)]
pub struct FbTables {
    /// Scaled forward table, rows sum to 1.
    pub alpha: Array2<f64>,
    /// Scaled backward table.
    pub beta: Array2<f64>,
    /// Posterior state marginals, rows sum to 1.
    pub gamma: Array2<f64>,
    /// Posterior pair marginals, slice `i` joins positions `i` and `i+1`.
    pub xi: Array3<f64>,
    /// Per-step normalizers; the unscaled forward values are recovered as
    /// `alpha[i] * prod(scaling[..=i])`.
    pub scaling: Array1<f64>,
    pub log_likelihood: f64,
}

/// Observation symbol per position; `None` marks hidden gap positions.
fn build_mask(observed: &Labeling, gap: Option<GapSpec>) -> Result<Vec<Option<usize>>> {
    match gap {
        None => Ok(observed.values().iter().map(|&o| Some(o)).collect()),
        Some(g) => {
            g.validate()?;
            if observed.len() != g.observed_len() {
                return Err(Error::InvalidInput(format!(
                    "gap expects {} observed labels, got {}",
                    g.observed_len(),
                    observed.len()
                )));
            }
            let mut mask = Vec::with_capacity(g.full_len());
            let vals = observed.values();
            for i in 0..g.t {
                mask.push(Some(vals[i]));
            }
            for _ in g.t..g.n_start - 1 {
                mask.push(None);
            }
            for i in 0..=g.delta {
                mask.push(Some(vals[g.t + i]));
            }
            Ok(mask)
        }
    }
}

/// Scaled forward/backward pass under `theta`.
pub fn forward_backward(
    theta: &HmmState,
    observed: &Labeling,
    gap: Option<GapSpec>,
) -> Result<FbTables> {
    theta.validate()?;
    if observed.is_empty() {
        return Err(Error::InvalidInput("empty observation sequence".into()));
    }
    if observed.k() != theta.k() {
        return Err(Error::InvalidInput(format!(
            "observations use K={} but theta has K={}",
            observed.k(),
            theta.k()
        )));
    }
    let mask = build_mask(observed, gap)?;
    let k = theta.k();
    let m = mask.len();
    let mut alpha = Array2::<f64>::zeros((m, k));
    let mut scaling = Array1::<f64>::zeros(m);

    // forward
    let o0 = mask[0].expect("position 0 is always observed");
    for a in 0..k {
        alpha[[0, a]] = theta.mu[a] * theta.o[[a, o0]];
    }
    let c0: f64 = alpha.row(0).sum();
    if c0 <= 0.0 {
        return Err(Error::DegenerateLikelihood(
            "first observation impossible under theta".into(),
        ));
    }
    alpha.row_mut(0).mapv_inplace(|x| x / c0);
    scaling[0] = c0;
    for i in 1..m {
        for b in 0..k {
            let mut acc = 0.0;
            for a in 0..k {
                acc += alpha[[i - 1, a]] * theta.p_tilde[[a, b]];
            }
            let emit = match mask[i] {
                Some(obs) => theta.o[[b, obs]],
                None => 1.0,
            };
            alpha[[i, b]] = acc * emit;
        }
        let c: f64 = alpha.row(i).sum();
        if c <= 0.0 {
            return Err(Error::DegenerateLikelihood(format!(
                "observation at position {i} impossible under theta"
            )));
        }
        alpha.row_mut(i).mapv_inplace(|x| x / c);
        scaling[i] = c;
    }

    // backward, scaled with the same normalizers
    let mut beta = Array2::<f64>::zeros((m, k));
    beta.row_mut(m - 1).fill(1.0);
    for i in (0..m - 1).rev() {
        for a in 0..k {
            let mut acc = 0.0;
            for b in 0..k {
                let emit = match mask[i + 1] {
                    Some(obs) => theta.o[[b, obs]],
                    None => 1.0,
                };
                acc += theta.p_tilde[[a, b]] * emit * beta[[i + 1, b]];
            }
            beta[[i, a]] = acc / scaling[i + 1];
        }
    }

    // posteriors
    let mut gamma = Array2::<f64>::zeros((m, k));
    for i in 0..m {
        let mut total = 0.0;
        for a in 0..k {
            gamma[[i, a]] = alpha[[i, a]] * beta[[i, a]];
            total += gamma[[i, a]];
        }
        if total <= 0.0 {
            return Err(Error::DegenerateLikelihood(format!(
                "zero posterior mass at position {i}"
            )));
        }
        gamma.row_mut(i).mapv_inplace(|x| x / total);
    }
    let mut xi = Array3::<f64>::zeros((m.saturating_sub(1), k, k));
    for i in 0..m.saturating_sub(1) {
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                let emit = match mask[i + 1] {
                    Some(obs) => theta.o[[b, obs]],
                    None => 1.0,
                };
                let v = alpha[[i, a]] * theta.p_tilde[[a, b]] * emit * beta[[i + 1, b]]
                    / scaling[i + 1];
                xi[[i, a, b]] = v;
                total += v;
            }
        }
        if total > 0.0 {
            for a in 0..k {
                for b in 0..k {
                    xi[[i, a, b]] /= total;
                }
            }
        }
    }
    let log_likelihood = scaling.iter().map(|&c| c.ln()).sum();
    Ok(FbTables { alpha, beta, gamma, xi, scaling, log_likelihood })
}

/// Fit an HMM to the clusterer's output sequence by EM.
///
/// Each iteration runs the scaled forward/backward pass and re-estimates
/// `(p_tilde, o, mu)` from the posteriors; with a gap the pair posteriors
/// through the hidden bridge enter the transition update, which keeps the
/// exact EM monotonicity property. Stops when the log-likelihood improves
/// by less than `tol` or after `max_iter` iterations. States are then
/// permuted so that `trace(O)` is maximal, anchoring hidden state `k` to
/// the cluster label it most often emits.
pub fn baum_welch(
    observed: &Labeling,
    gap: Option<GapSpec>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<HmmState> {
    let init = HmmState::init(observed.k(), epsilon)?;
    baum_welch_from(init, observed, gap, max_iter, tol)
}

/// [`baum_welch`] starting from a caller-supplied parameter guess. EM only
/// refines locally, so an informed initialization (for instance one built
/// from the similarity of the estimated groups' connectivity profiles)
/// selects which basin the fit lands in.
pub fn baum_welch_from(
    init: HmmState,
    observed: &Labeling,
    gap: Option<GapSpec>,
    max_iter: usize,
    tol: f64,
) -> Result<HmmState> {
    if observed.is_empty() {
        return Err(Error::InvalidInput("empty observation sequence".into()));
    }
    let k = observed.k();
    if init.k() != k {
        return Err(Error::InvalidInput("init has wrong K".into()));
    }
    let mut theta = init;
    theta.history.clear();
    let mask = build_mask(observed, gap)?;
    let m = mask.len();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..max_iter.max(1) {
        let tables = forward_backward(&theta, observed, gap)?;
        let ll = tables.log_likelihood;
        theta.history.push(ll);
        theta.log_likelihood = ll;

        // M-step
        let mut mu = Array1::<f64>::zeros(k);
        for a in 0..k {
            mu[a] = tables.gamma[[0, a]];
        }
        let mut p_num = Array2::<f64>::zeros((k, k));
        let mut p_den = vec![0.0f64; k];
        for i in 0..m - 1 {
            for a in 0..k {
                p_den[a] += tables.gamma[[i, a]];
                for b in 0..k {
                    p_num[[a, b]] += tables.xi[[i, a, b]];
                }
            }
        }
        let mut p_tilde = theta.p_tilde.clone();
        for a in 0..k {
            if p_den[a] > 1e-300 {
                for b in 0..k {
                    p_tilde[[a, b]] = p_num[[a, b]] / p_den[a];
                }
            }
            let row: f64 = (0..k).map(|b| p_tilde[[a, b]]).sum();
            if row > 0.0 {
                for b in 0..k {
                    p_tilde[[a, b]] /= row;
                }
            }
        }
        let mut o_num = Array2::<f64>::zeros((k, k));
        let mut o_den = vec![0.0f64; k];
        for (i, slot) in mask.iter().enumerate() {
            if let Some(obs) = slot {
                for a in 0..k {
                    o_num[[a, *obs]] += tables.gamma[[i, a]];
                    o_den[a] += tables.gamma[[i, a]];
                }
            }
        }
        let mut o = theta.o.clone();
        for a in 0..k {
            if o_den[a] > 1e-300 {
                for b in 0..k {
                    o[[a, b]] = o_num[[a, b]] / o_den[a];
                }
            }
            let row: f64 = (0..k).map(|b| o[[a, b]]).sum();
            if row > 0.0 {
                for b in 0..k {
                    o[[a, b]] /= row;
                }
            }
        }
        theta.p_tilde = p_tilde;
        theta.o = o;
        theta.mu = mu;

        if m == 1 || k == 1 || (ll - prev_ll).abs() < tol {
            break;
        }
        prev_ll = ll;
    }
    // final likelihood under the last parameter update
    let tables = forward_backward(&theta, observed, gap)?;
    theta.log_likelihood = tables.log_likelihood;
    theta.history.push(tables.log_likelihood);

    align_states(&mut theta);
    Ok(theta)
}

/// Permute hidden states to maximize `trace(O)`.
fn align_states(theta: &mut HmmState) {
    let k = theta.k();
    if k <= 1 {
        return;
    }
    let (perm, _) = max_assignment(&theta.o);
    // perm[state] = cluster label it should be renamed to
    if perm.iter().enumerate().all(|(a, &b)| a == b) {
        return;
    }
    let mut p2 = Array2::<f64>::zeros((k, k));
    let mut o2 = Array2::<f64>::zeros((k, k));
    let mut mu2 = Array1::<f64>::zeros(k);
    for a in 0..k {
        mu2[perm[a]] = theta.mu[a];
        for b in 0..k {
            p2[[perm[a], perm[b]]] = theta.p_tilde[[a, b]];
            o2[[perm[a], b]] = theta.o[[a, b]];
        }
    }
    theta.p_tilde = p2;
    theta.o = o2;
    theta.mu = mu2;
}

/// Path probability matrix
/// `chi[i->j][k][l] = P(C_j = l, observed i+1..=j | C_i = k)`,
/// evaluated as the matrix product of `p_tilde * diag(O[:, obs_m])` over
/// `m` in `i+1..=j`. Positions are 0-based into a contiguous observed
/// sequence. Rows are sub-stochastic.
pub fn chi(theta: &HmmState, observed: &Labeling, i: usize, j: usize) -> Result<Array2<f64>> {
    chi_scaled(theta, observed, i, j).map(|(m, logscale)| m.mapv(|x| x * logscale.exp()))
}

/// As [`chi`] but returns `(matrix, log_scale)` with the matrix kept
/// normalized step by step; the true chi is `matrix * exp(log_scale)`.
pub fn chi_scaled(
    theta: &HmmState,
    observed: &Labeling,
    i: usize,
    j: usize,
) -> Result<(Array2<f64>, f64)> {
    theta.validate()?;
    let k = theta.k();
    if i >= j || j >= observed.len() {
        return Err(Error::InvalidInput(format!(
            "chi needs i < j < n, got i={i} j={j} n={}",
            observed.len()
        )));
    }
    let vals = observed.values();
    let mut acc = Array2::<f64>::eye(k);
    let mut logscale = 0.0f64;
    for pos in i + 1..=j {
        let obs = vals[pos];
        // acc <- acc * (P~ diag(O[:, obs]))
        let mut next = Array2::<f64>::zeros((k, k));
        for a in 0..k {
            for b in 0..k {
                let mut s = 0.0;
                for c in 0..k {
                    s += acc[[a, c]] * theta.p_tilde[[c, b]];
                }
                next[[a, b]] = s * theta.o[[b, obs]];
            }
        }
        let mx = next.iter().fold(0.0f64, |m, &x| m.max(x));
        if mx <= 0.0 {
            return Err(Error::DegenerateLikelihood(format!(
                "chi vanished at position {pos}"
            )));
        }
        next.mapv_inplace(|x| x / mx);
        logscale += mx.ln();
        acc = next;
    }
    Ok((acc, logscale))
}

/// Joint posterior of the hidden states at two positions,
/// `zeta[k][l] = P(C_i = k, C_j = l | all observations)`, normalized to
/// sum 1.
pub fn zeta(theta: &HmmState, observed: &Labeling, i: usize, j: usize) -> Result<Array2<f64>> {
    let tables = forward_backward(theta, observed, None)?;
    zeta_with_tables(theta, &tables, observed, i, j)
}

/// [`zeta`] reusing precomputed forward/backward tables.
pub fn zeta_with_tables(
    theta: &HmmState,
    tables: &FbTables,
    observed: &Labeling,
    i: usize,
    j: usize,
) -> Result<Array2<f64>> {
    let k = theta.k();
    let (chi_m, _) = chi_scaled(theta, observed, i, j)?;
    let mut z = Array2::<f64>::zeros((k, k));
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            let v = tables.alpha[[i, a]] * chi_m[[a, b]] * tables.beta[[j, b]];
            z[[a, b]] = v;
            total += v;
        }
    }
    if total <= 0.0 {
        return Err(Error::DegenerateLikelihood("zeta has zero mass".into()));
    }
    z.mapv_inplace(|x| x / total);
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn demo_theta() -> HmmState {
        HmmState {
            p_tilde: arr2(&[[0.7, 0.3], [0.4, 0.6]]),
            o: arr2(&[[0.9, 0.1], [0.2, 0.8]]),
            mu: arr1(&[0.6, 0.4]),
            log_likelihood: 0.0,
            history: Vec::new(),
        }
    }

    fn labels(v: &[usize], k: usize) -> Labeling {
        Labeling::new(v.to_vec(), k).unwrap()
    }

    /// Joint probability of (hidden path, observations) under theta,
    /// respecting an observation mask.
    fn path_joint(theta: &HmmState, path: &[usize], mask: &[Option<usize>]) -> f64 {
        let mut p = theta.mu[path[0]];
        if let Some(o) = mask[0] {
            p *= theta.o[[path[0], o]];
        }
        for i in 1..path.len() {
            p *= theta.p_tilde[[path[i - 1], path[i]]];
            if let Some(o) = mask[i] {
                p *= theta.o[[path[i], o]];
            }
        }
        p
    }

    fn enumerate_paths(k: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..m {
            let mut next = Vec::new();
            for p in &out {
                for s in 0..k {
                    let mut q = p.clone();
                    q.push(s);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn gamma_xi_match_enumeration() {
        let theta = demo_theta();
        let obs = labels(&[0, 1, 1, 0], 2);
        let mask: Vec<Option<usize>> = obs.values().iter().map(|&o| Some(o)).collect();
        let tables = forward_backward(&theta, &obs, None).unwrap();
        let paths = enumerate_paths(2, 4);
        let total: f64 = paths.iter().map(|p| path_joint(&theta, p, &mask)).sum();
        assert!((tables.log_likelihood - total.ln()).abs() < 1e-12);
        for i in 0..4 {
            for a in 0..2 {
                let want: f64 = paths
                    .iter()
                    .filter(|p| p[i] == a)
                    .map(|p| path_joint(&theta, p, &mask))
                    .sum::<f64>()
                    / total;
                assert!((tables.gamma[[i, a]] - want).abs() < 1e-12);
            }
        }
        for i in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    let want: f64 = paths
                        .iter()
                        .filter(|p| p[i] == a && p[i + 1] == b)
                        .map(|p| path_joint(&theta, p, &mask))
                        .sum::<f64>()
                        / total;
                    assert!((tables.xi[[i, a, b]] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_position_posterior() {
        let theta = demo_theta();
        let obs = labels(&[1], 2);
        let t = forward_backward(&theta, &obs, None).unwrap();
        let raw = [theta.mu[0] * theta.o[[0, 1]], theta.mu[1] * theta.o[[1, 1]]];
        let z = raw[0] + raw[1];
        assert!((t.gamma[[0, 0]] - raw[0] / z).abs() < 1e-15);
        assert!((t.gamma[[0, 1]] - raw[1] / z).abs() < 1e-15);
    }

    #[test]
    fn uniform_theta_gives_uniform_gamma() {
        let k = 3;
        let theta = HmmState {
            p_tilde: Array2::from_elem((k, k), 1.0 / 3.0),
            o: Array2::from_elem((k, k), 1.0 / 3.0),
            mu: Array1::from_elem(k, 1.0 / 3.0),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        let obs = labels(&[0, 2, 1, 1, 0], 3);
        let t = forward_backward(&theta, &obs, None).unwrap();
        for i in 0..5 {
            for a in 0..3 {
                assert!((t.gamma[[i, a]] - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaled_recursion_reproduces_unscaled() {
        let theta = demo_theta();
        let obs = labels(&(0..30).map(|i| (i / 3) % 2).collect::<Vec<_>>(), 2);
        let t = forward_backward(&theta, &obs, None).unwrap();
        // unscaled forward by direct recursion
        let mut a = vec![0.0f64; 2];
        for s in 0..2 {
            a[s] = theta.mu[s] * theta.o[[s, obs.values()[0]]];
        }
        let mut prod = t.scaling[0];
        for s in 0..2 {
            assert!((t.alpha[[0, s]] * prod - a[s]).abs() < 1e-10 * a[s].max(1e-30));
        }
        for i in 1..obs.len() {
            let mut next = vec![0.0f64; 2];
            for b in 0..2 {
                for s in 0..2 {
                    next[b] += a[s] * theta.p_tilde[[s, b]];
                }
                next[b] *= theta.o[[b, obs.values()[i]]];
            }
            a = next;
            prod *= t.scaling[i];
            for s in 0..2 {
                let unscaled = t.alpha[[i, s]] * prod;
                assert!(
                    (unscaled - a[s]).abs() <= 1e-10 * a[s].abs().max(1e-300),
                    "i={i} s={s}"
                );
            }
        }
    }

    #[test]
    fn gap_consistency_empty_gap() {
        let theta = demo_theta();
        let obs = labels(&[0, 1, 0, 0, 1, 1], 2);
        let plain = forward_backward(&theta, &obs, None).unwrap();
        // t = 2, n_start = 3 gives an empty hidden range
        let gap = GapSpec { t: 2, n_start: 3, delta: 3 };
        let gapped = forward_backward(&theta, &obs, Some(gap)).unwrap();
        assert!((&plain.gamma - &gapped.gamma)
            .mapv(f64::abs)
            .iter()
            .all(|&x| x < 1e-14));
        assert!((plain.log_likelihood - gapped.log_likelihood).abs() < 1e-12);
    }

    #[test]
    fn gap_recursion_uses_transition_powers() {
        // With a real gap, the hidden bridge must contribute exactly one
        // transition-power factor: compare against enumeration over all
        // full-length hidden paths with no emissions inside the gap.
        let theta = demo_theta();
        let obs = labels(&[0, 1, 1], 2); // observed positions 1..=2 and 5 (1-based)
        let gap = GapSpec { t: 2, n_start: 5, delta: 0 };
        let tables = forward_backward(&theta, &obs, Some(gap)).unwrap();
        let mask = build_mask(&obs, Some(gap)).unwrap();
        assert_eq!(mask.len(), 5);
        let paths = enumerate_paths(2, 5);
        let total: f64 = paths.iter().map(|p| path_joint(&theta, p, &mask)).sum();
        assert!((tables.log_likelihood - total.ln()).abs() < 1e-12);
        for i in 0..5 {
            for a in 0..2 {
                let want: f64 = paths
                    .iter()
                    .filter(|p| p[i] == a)
                    .map(|p| path_joint(&theta, p, &mask))
                    .sum::<f64>()
                    / total;
                assert!((tables.gamma[[i, a]] - want).abs() < 1e-12, "i={i} a={a}");
            }
        }
    }

    #[test]
    fn chi_single_factor() {
        let theta = demo_theta();
        let obs = labels(&[0, 1, 0], 2);
        let c = chi(&theta, &obs, 0, 1).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let want = theta.p_tilde[[a, b]] * theta.o[[b, 1]];
                assert!((c[[a, b]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn chi_identity_emissions_collapse_to_powers() {
        let theta = HmmState {
            p_tilde: arr2(&[[0.7, 0.3], [0.4, 0.6]]),
            o: arr2(&[[1.0, 0.0], [0.0, 1.0]]),
            mu: arr1(&[0.5, 0.5]),
            log_likelihood: 0.0,
            history: Vec::new(),
        };
        // observations equal to a fixed hidden path
        let obs = labels(&[0, 1, 0, 1], 2);
        let c = chi(&theta, &obs, 0, 3).unwrap();
        // chi[a][l] = P(path obs[1..=3] and C_3 = l | C_0 = a); only l = obs[3]
        for a in 0..2 {
            assert!((c[[a, 0]] - 0.0).abs() < 1e-15);
            let want = theta.p_tilde[[a, 1]] * theta.p_tilde[[1, 0]] * theta.p_tilde[[0, 1]];
            assert!((c[[a, 1]] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn chi_matches_enumeration() {
        let theta = demo_theta();
        let obs = labels(&[0, 1, 1, 0], 2);
        let c = chi(&theta, &obs, 0, 3).unwrap();
        // enumerate intermediate states c1, c2
        for a in 0..2 {
            for l in 0..2 {
                let mut want = 0.0;
                for c1 in 0..2 {
                    for c2 in 0..2 {
                        want += theta.p_tilde[[a, c1]]
                            * theta.o[[c1, 1]]
                            * theta.p_tilde[[c1, c2]]
                            * theta.o[[c2, 1]]
                            * theta.p_tilde[[c2, l]]
                            * theta.o[[l, 0]];
                    }
                }
                assert!((c[[a, l]] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zeta_marginalizes_to_gamma_and_matches_xi() {
        let theta = demo_theta();
        let obs = labels(&[0, 1, 0, 1, 1], 2);
        let tables = forward_backward(&theta, &obs, None).unwrap();
        let z = zeta(&theta, &obs, 1, 4).unwrap();
        assert!((z.sum() - 1.0).abs() < 1e-12);
        for a in 0..2 {
            let marg: f64 = (0..2).map(|b| z[[a, b]]).sum();
            assert!((marg - tables.gamma[[1, a]]).abs() < 1e-12);
        }
        // adjacent positions: zeta == xi
        let z = zeta(&theta, &obs, 2, 3).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((z[[a, b]] - tables.xi[[2, a, b]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn baum_welch_single_state() {
        let obs = labels(&[0, 0, 0], 1);
        let theta = baum_welch(&obs, None, 0.01, 10, 1e-8).unwrap();
        assert!((theta.o[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((theta.p_tilde[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((theta.mu[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baum_welch_monotone_likelihood() {
        let params = crate::presets::two_communities();
        let (_, truth) = crate::model::sample_graph(&params, 400, 5).unwrap();
        let theta = baum_welch(&truth, None, 0.01, 60, 1e-9).unwrap();
        for w in theta.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "log-likelihood decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn baum_welch_recovers_chain_under_perfect_clustering() {
        // Observations = hidden chain (identity emissions): the learned
        // transition matrix approaches P and O approaches identity. EM can
        // stop in a local optimum with a few percent of emission blur, so
        // this checks one demonstration run, not a worst case.
        let params = crate::presets::two_communities();
        let (_, truth) = crate::model::sample_graph(&params, 2000, 12).unwrap();
        let theta = baum_welch(&truth, None, 0.01, 200, 1e-6).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!(
                    (theta.p_tilde[[a, b]] - params.p[[a, b]]).abs() < 0.05,
                    "P~ far from P at [{a},{b}]: {} vs {}",
                    theta.p_tilde[[a, b]],
                    params.p[[a, b]]
                );
                let id = if a == b { 1.0 } else { 0.0 };
                assert!((theta.o[[a, b]] - id).abs() < 0.05);
            }
        }
    }

    #[test]
    fn baum_welch_gap_monotone() {
        let params = crate::presets::two_communities();
        let (_, truth) = crate::model::sample_graph(&params, 60, 3).unwrap();
        let gap = GapSpec { t: 20, n_start: 50, delta: 9 };
        let observed = Labeling::new(
            truth.values()[..20]
                .iter()
                .chain(&truth.values()[49..59])
                .copied()
                .collect(),
            2,
        )
        .unwrap();
        let theta = baum_welch(&observed, Some(gap), 0.01, 50, 1e-9).unwrap();
        for w in theta.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let obs = labels(&[0, 1], 2);
        assert!(baum_welch(&obs, None, 0.0, 10, 1e-6).is_err());
        assert!(GapSpec { t: 3, n_start: 3, delta: 0 }.validate().is_err());
        let theta = demo_theta();
        assert!(chi(&theta, &obs, 1, 1).is_err());
        assert!(chi(&theta, &obs, 0, 5).is_err());
    }
}
