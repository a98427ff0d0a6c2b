//! Core model: parameters, ordered graphs, labelings, the sampler, the
//! misclassification metric, SNR, and graph construction from point
//! sequences.
//!
//! Communities are indexed `0..k` throughout the crate; file formats are
//! 1-based (see [`crate::io`]).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assignment::max_assignment;
use crate::error::{Error, Result};
use crate::linalg::solve_linear;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Hidden-chain and connectivity parameters.
///
/// The chain `(C_i)` has transition matrix `p` and initial/stationary
/// distribution `pi`; an edge between nodes with communities `a` and `b`
/// appears with probability `alpha * q0[a][b]`.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub k: usize,
    pub p: Array2<f64>,
    pub pi: Array1<f64>,
    pub alpha: f64,
    pub q0: Array2<f64>,
}

impl ModelParams {
    pub fn new(p: Array2<f64>, pi: Array1<f64>, alpha: f64, q0: Array2<f64>) -> Result<Self> {
        let k = p.nrows();
        if k == 0 {
            return Err(Error::InvalidParams("K must be >= 1".into()));
        }
        if p.ncols() != k || q0.nrows() != k || q0.ncols() != k || pi.len() != k {
            return Err(Error::InvalidParams("dimension mismatch".into()));
        }
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                if p[[i, j]] < 0.0 {
                    return Err(Error::InvalidParams(format!("P[{i}][{j}] < 0")));
                }
                row += p[[i, j]];
            }
            if (row - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidParams(format!(
                    "row {i} of P sums to {row}, not 1"
                )));
            }
        }
        let pisum: f64 = pi.iter().sum();
        if (pisum - 1.0).abs() > STOCHASTIC_TOL || pi.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidParams("pi is not a distribution".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("alpha {alpha} not in (0,1]")));
        }
        for i in 0..k {
            for j in 0..k {
                if (q0[[i, j]] - q0[[j, i]]).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidParams("Q0 is not symmetric".into()));
                }
                let q = alpha * q0[[i, j]];
                if !(0.0..=1.0).contains(&q) || q0[[i, j]] < 0.0 || q0[[i, j]] > 1.0 {
                    return Err(Error::InvalidParams(format!(
                        "effective connectivity [{i}][{j}] = {q} outside [0,1]"
                    )));
                }
            }
        }
        Ok(Self { k, p, pi, alpha, q0 })
    }

    /// Build params with `pi` set to the stationary distribution of `p`.
    pub fn with_stationary(p: Array2<f64>, alpha: f64, q0: Array2<f64>) -> Result<Self> {
        let pi = stationary_distribution(&p)?;
        Self::new(p, pi, alpha, q0)
    }

    /// Effective connectivity matrix `alpha * q0`.
    pub fn q(&self) -> Array2<f64> {
        self.q0.mapv(|x| x * self.alpha)
    }
}

/// Symmetric binary adjacency over nodes indexed by arrival order.
#[derive(Debug, Clone)]
pub struct OrderedGraph {
    n: usize,
    adj: Vec<u8>, // row-major n*n, symmetric, zero diagonal
}

impl OrderedGraph {
    pub fn empty(n: usize) -> Self {
        Self { n, adj: vec![0; n * n] }
    }

    /// Build from an edge list of unordered pairs (0-based).
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i},{j}) out of range")));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
            g.adj[i * n + j] = 1;
            g.adj[j * n + i] = 1;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    fn set_edge(&mut self, i: usize, j: usize) {
        self.adj[i * self.n + j] = 1;
        self.adj[j * self.n + i] = 1;
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|&x| x as usize).sum::<usize>() / 2
    }

    /// Graph density `2|E| / (n(n-1))`.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / (self.n as f64 * (self.n as f64 - 1.0))
    }

    /// Edges as pairs `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Adjacency as a float matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.adj[i * self.n + j] as f64)
    }

    /// Induced subgraph on the first `m` nodes (arrival order preserved).
    pub fn prefix(&self, m: usize) -> OrderedGraph {
        assert!(m <= self.n);
        let mut g = OrderedGraph::empty(m);
        for i in 0..m {
            for j in i + 1..m {
                if self.has_edge(i, j) {
                    g.set_edge(i, j);
                }
            }
        }
        g
    }
}

/// A community assignment, values in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    values: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(values: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("K must be >= 1".into()));
        }
        if let Some(&bad) = values.iter().find(|&&v| v >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for K={k}")));
        }
        Ok(Self { values, k })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    /// Number of nodes per community.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.k];
        for &v in &self.values {
            c[v] += 1;
        }
        c
    }

    /// True when every community has at least one member.
    pub fn has_no_empty_community(&self) -> bool {
        self.counts().iter().all(|&c| c > 0)
    }

    /// First `m` entries as a labeling with the same K.
    pub fn prefix(&self, m: usize) -> Labeling {
        Labeling { values: self.values[..m].to_vec(), k: self.k }
    }

    /// Apply a relabeling permutation: `new[i] = perm[old[i]]`.
    pub fn relabel(&self, perm: &[usize]) -> Labeling {
        Labeling {
            values: self.values.iter().map(|&v| perm[v]).collect(),
            k: self.k,
        }
    }
}

/// Signal-to-noise summary for one model size.
#[derive(Debug, Clone, Copy)]
pub struct SnrSummary {
    /// Largest entry of Q0.
    pub l: f64,
    /// Smallest stationary probability.
    pub pi_min: f64,
    /// Minimum squared distance between distinct columns of Q0.
    pub d2: f64,
    /// `n * alpha * pi_min * d2 / l`.
    pub s2: f64,
}

fn draw_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    probs.len() - 1
}

/// Sample a graph of `n` nodes.
///
/// The community chain is drawn first (`labels[0] ~ pi`, then row
/// `labels[i]` of `P`); afterwards each unordered pair `{i,j}`, `i < j`,
/// is visited once in row-major order and kept with probability
/// `alpha * q0[c_i][c_j]`. One ChaCha8 stream per call, so output is a
/// pure function of `(params, n, seed)`.
pub fn sample_graph(params: &ModelParams, n: usize, seed: u64) -> Result<(OrderedGraph, Labeling)> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.k;
    let mut labels = Vec::with_capacity(n);
    let pi: Vec<f64> = params.pi.iter().copied().collect();
    labels.push(draw_categorical(&mut rng, &pi));
    for i in 1..n {
        let prev = labels[i - 1];
        let row: Vec<f64> = (0..k).map(|j| params.p[[prev, j]]).collect();
        labels.push(draw_categorical(&mut rng, &row));
    }
    let q = params.q();
    let mut graph = OrderedGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let prob = q[[labels[i], labels[j]]];
            if rng.gen::<f64>() < prob {
                graph.set_edge(i, j);
            }
        }
    }
    Ok((graph, Labeling::new(labels, k)?))
}

/// Sample a graph whose labels are drawn independently from `pi` (the
/// null model of the Markov-dynamic test) with edge probabilities `q`.
pub fn sample_iid_graph(
    pi: &Array1<f64>,
    q: &Array2<f64>,
    n: usize,
    seed: u64,
) -> Result<(OrderedGraph, Labeling)> {
    let k = pi.len();
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    if q.nrows() != k || q.ncols() != k {
        return Err(Error::InvalidInput("q must be K x K".into()));
    }
    if (pi.sum() - 1.0).abs() > 1e-9 || pi.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParams("pi is not a distribution".into()));
    }
    if q.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidParams("q entries must lie in [0,1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let piv: Vec<f64> = pi.iter().copied().collect();
    let labels: Vec<usize> = (0..n).map(|_| draw_categorical(&mut rng, &piv)).collect();
    let mut graph = OrderedGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < q[[labels[i], labels[j]]] {
                graph.set_edge(i, j);
            }
        }
    }
    Ok((graph, Labeling::new(labels, k)?))
}

/// Stationary distribution of an irreducible row-stochastic matrix.
///
/// Solves the fixed point `pi P = pi`, `sum pi = 1` and checks the result
/// to 1e-10.
pub fn stationary_distribution(p: &Array2<f64>) -> Result<Array1<f64>> {
    let k = p.nrows();
    if k == 0 || p.ncols() != k {
        return Err(Error::InvalidInput("P must be square and non-empty".into()));
    }
    for i in 0..k {
        let row: f64 = (0..k).map(|j| p[[i, j]]).sum();
        if (row - 1.0).abs() > STOCHASTIC_TOL || (0..k).any(|j| p[[i, j]] < 0.0) {
            return Err(Error::InvalidParams(format!("row {i} of P is not a distribution")));
        }
    }
    if !strongly_connected(p) {
        return Err(Error::ReducibleChain(
            "support graph of P is not strongly connected".into(),
        ));
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            a[[i, j]] = p[[j, i]] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[[k - 1, j]] = 1.0;
    }
    let mut b = Array1::zeros(k);
    b[k - 1] = 1.0;
    let mut pi = solve_linear(&a, &b)?;
    let total: f64 = pi.iter().sum();
    pi.mapv_inplace(|x| x / total);
    let resid = (0..k)
        .map(|j| ((0..k).map(|i| pi[i] * p[[i, j]]).sum::<f64>() - pi[j]).abs())
        .fold(0.0f64, f64::max);
    if resid > 1e-10 {
        return Err(Error::ReducibleChain(format!(
            "stationary solve residual {resid:.3e}"
        )));
    }
    Ok(pi)
}

fn strongly_connected(p: &Array2<f64>) -> bool {
    let k = p.nrows();
    let reach = |transpose: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..k {
                let w = if transpose { p[[v, u]] } else { p[[u, v]] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

/// Confusion matrix `counts[e][t] = #{i : est_i = e, truth_i = t}`.
fn confusion(est: &Labeling, truth: &Labeling) -> Array2<f64> {
    let k = est.k();
    let mut m = Array2::zeros((k, k));
    for (&e, &t) in est.values().iter().zip(truth.values()) {
        m[[e, t]] += 1.0;
    }
    m
}

/// Proportion of non-matching points, minimized over label permutations.
///
/// Computed exactly by optimal assignment on the confusion matrix: the
/// permutation-minimized symmetric-difference objective equals
/// `1 - (matched count)/n`.
pub fn misclassification(est: &Labeling, truth: &Labeling) -> Result<f64> {
    misclassification_alignment(est, truth).map(|(e, _)| e)
}

/// As [`misclassification`], also returning the best relabeling
/// `perm[est_label] = truth_label`.
pub fn misclassification_alignment(
    est: &Labeling,
    truth: &Labeling,
) -> Result<(f64, Vec<usize>)> {
    if est.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            est.len(),
            truth.len()
        )));
    }
    if est.k() != truth.k() {
        return Err(Error::InvalidInput(format!(
            "K mismatch: {} vs {}",
            est.k(),
            truth.k()
        )));
    }
    if est.is_empty() {
        return Err(Error::InvalidInput("empty labelings".into()));
    }
    if !truth.has_no_empty_community() {
        return Err(Error::InvalidInput(
            "ground truth has an empty community".into(),
        ));
    }
    let n = est.len() as f64;
    let m = confusion(est, truth);
    let (perm, matched) = max_assignment(&m);
    Ok((1.0 - matched / n, perm))
}

/// Signal-to-noise ratio of the model at size `n`.
pub fn snr(params: &ModelParams, n: usize) -> Result<SnrSummary> {
    let k = params.k;
    let l = params.q0.iter().fold(0.0f64, |m, &x| m.max(x));
    let pi_min = params.pi.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if pi_min <= 0.0 {
        return Err(Error::AssumptionViolated(
            "stationary distribution has a zero entry".into(),
        ));
    }
    let mut d2 = f64::INFINITY;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                let dist: f64 = (0..k)
                    .map(|r| (params.q0[[r, a]] - params.q0[[r, b]]).powi(2))
                    .sum();
                d2 = d2.min(dist);
            }
        }
    }
    if k == 1 {
        d2 = f64::INFINITY; // no pair of columns to separate
    }
    if d2 <= 0.0 {
        return Err(Error::AssumptionViolated(
            "two columns of Q0 coincide (D^2 = 0)".into(),
        ));
    }
    if l <= 0.0 {
        return Err(Error::AssumptionViolated("Q0 is identically zero".into()));
    }
    let s2 = if d2.is_infinite() {
        f64::INFINITY
    } else {
        n as f64 * params.alpha * pi_min * d2 / l
    };
    Ok(SnrSummary { l, pi_min, d2, s2 })
}

/// One entry of a timestamped point sequence.
#[derive(Debug, Clone, Copy)]
pub struct PointRecord {
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
    /// Class label, 1-based as found in data files.
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Euclidean distance on the raw coordinates.
    Planar,
    /// Great-circle (haversine) distance in kilometres; coordinates are
    /// latitude/longitude in degrees.
    GreatCircle,
}

const EARTH_RADIUS_KM: f64 = 6371.0;

fn haversine_km(a: &PointRecord, b: &PointRecord) -> f64 {
    let (la1, lo1) = (a.lat.to_radians(), a.lon.to_radians());
    let (la2, lo2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = la2 - la1;
    let dlon = lo2 - lo1;
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Build an ordered graph from a point sequence: node `i` is the i-th
/// point, an edge appears iff the pairwise distance is strictly below
/// `tau`, and labels are copied from the class column.
pub fn threshold_graph(
    points: &[PointRecord],
    tau: f64,
    mode: DistanceMode,
) -> Result<(OrderedGraph, Labeling)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points".into()));
    }
    for p in points {
        if !(p.timestamp.is_finite() && p.lat.is_finite() && p.lon.is_finite()) {
            return Err(Error::InvalidInput("non-finite point".into()));
        }
        if p.class == 0 {
            return Err(Error::InvalidInput("class labels are 1-based".into()));
        }
    }
    for w in points.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::InvalidInput(
                "timestamps are not in non-decreasing order".into(),
            ));
        }
    }
    let n = points.len();
    let k = points.iter().map(|p| p.class).max().unwrap();
    let mut g = OrderedGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let d = match mode {
                DistanceMode::Planar => {
                    ((points[i].lat - points[j].lat).powi(2)
                        + (points[i].lon - points[j].lon).powi(2))
                    .sqrt()
                }
                DistanceMode::GreatCircle => haversine_km(&points[i], &points[j]),
            };
            if d < tau {
                g.set_edge(i, j);
            }
        }
    }
    let labels = Labeling::new(points.iter().map(|p| p.class - 1).collect(), k)?;
    Ok((g, labels))
}
