//! Experiment harness: reproducible benchmark grids writing one CSV row
//! per replicate plus a JSON summary of per-cell means and deviations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use msbm::cluster::cluster;
use msbm::estimators::EstimatedParams;
use msbm::filter::FilterQuery;
use msbm::hmm::baum_welch;
use msbm::inference::{markov_test, select_k};
use msbm::model::{
    misclassification, misclassification_alignment, sample_graph, Labeling, ModelParams,
};
use msbm::predict::{eta_true, msbm_classify, reliable_classify};
use msbm::rng::subseed;

/// EM budget for the reliability layer (link scores, collaborative
/// filtering): a short refinement anchored at the near-identity start;
/// longer runs drift into blurred local optima at these sample sizes.
pub const RELIABILITY_EM_ITER: usize = 10;

pub const EXPERIMENTS: &[&str] = &[
    "convergence-P",
    "err-decay",
    "precision-recall-sparsity",
    "hypo-power",
    "link-l1",
    "collab-sweep",
    "select-k",
];

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Preset key (`k2`, `k4`, `k5`) or path to a model JSON file.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_mc")]
    pub mc: usize,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_m_prefix")]
    pub m_prefix: usize,
    #[serde(default = "default_query_node")]
    pub query_node: usize,
    #[serde(default = "default_e_sizes")]
    pub e_sizes: Vec<usize>,
}

fn default_seed() -> u64 {
    1
}
fn default_replicates() -> usize {
    10
}
fn default_model() -> String {
    "k4".into()
}
fn default_alpha() -> Vec<f64> {
    vec![1.0]
}
fn default_level() -> f64 {
    0.05
}
fn default_mc() -> usize {
    100
}
fn default_k_min() -> usize {
    2
}
fn default_k_max() -> usize {
    7
}
fn default_m_prefix() -> usize {
    100
}
fn default_query_node() -> usize {
    120
}
fn default_e_sizes() -> Vec<usize> {
    vec![1, 2, 5, 10, 26]
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            bail!(
                "unknown experiment '{}'; expected one of {:?}",
                self.experiment,
                EXPERIMENTS
            );
        }
        if self.replicates == 0 {
            bail!("replicates must be positive");
        }
        if self.alpha.is_empty() {
            bail!("alpha grid is empty");
        }
        if self.needs_n_grid() && self.n.is_empty() {
            bail!("experiment '{}' needs a non-empty n grid", self.experiment);
        }
        if !msbm::presets::by_name(&self.model).is_some() && !Path::new(&self.model).exists() {
            bail!("model '{}' is neither a preset nor an existing file", self.model);
        }
        Ok(())
    }

    fn needs_n_grid(&self) -> bool {
        matches!(
            self.experiment.as_str(),
            "convergence-P" | "err-decay" | "hypo-power" | "link-l1" | "select-k"
        )
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        if let Some(p) = msbm::presets::by_name(&self.model) {
            return Ok(p);
        }
        Ok(msbm::io::read_model_params(Path::new(&self.model))?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub seed: u64,
    pub n: usize,
    pub alpha: f64,
    pub metric: String,
    pub value: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct Summary {
    /// keyed by "n=<n>,alpha=<alpha>,metric=<metric>"
    pub cells: BTreeMap<String, CellStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

fn with_alpha(params: &ModelParams, alpha: f64) -> Result<ModelParams> {
    Ok(ModelParams::new(
        params.p.clone(),
        params.pi.clone(),
        alpha,
        params.q0.clone(),
    )?)
}

fn linf(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

/// Precision and recall of one community, after aligning the estimate to
/// the truth by the error-minimizing permutation. `None` marks an
/// undefined 0/0 ratio.
pub fn compute_precision_recall(
    est: &Labeling,
    truth: &Labeling,
    positive: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    let (_, perm) = misclassification_alignment(est, truth)?;
    let aligned = est.relabel(&perm);
    let mut tp = 0usize;
    let mut labeled_pos = 0usize;
    let mut actual_pos = 0usize;
    for (&e, &t) in aligned.values().iter().zip(truth.values()) {
        if e == positive {
            labeled_pos += 1;
            if t == positive {
                tp += 1;
            }
        }
        if t == positive {
            actual_pos += 1;
        }
    }
    let precision = (labeled_pos > 0).then(|| tp as f64 / labeled_pos as f64);
    let recall = (actual_pos > 0).then(|| tp as f64 / actual_pos as f64);
    Ok((precision, recall))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let mut rows: Vec<ReportRow> = Vec::new();
    match config.experiment.as_str() {
        "convergence-P" => run_convergence_p(config, &mut rows)?,
        "err-decay" => run_err_decay(config, &mut rows)?,
        "precision-recall-sparsity" => run_precision_recall(config, &mut rows)?,
        "hypo-power" => run_hypo_power(config, &mut rows)?,
        "link-l1" => run_link_l1(config, &mut rows)?,
        "collab-sweep" => run_collab_sweep(config, &mut rows)?,
        "select-k" => run_select_k(config, &mut rows)?,
        other => bail!("unknown experiment '{other}'"),
    }
    let summary = summarize(&rows);
    write_rows(&config.output_dir.join("results.csv"), &rows)?;
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(config.output_dir.join("summary.json"), json)?;
    Ok(summary)
}

fn push(
    rows: &mut Vec<ReportRow>,
    config: &ExperimentConfig,
    seed: u64,
    n: usize,
    alpha: f64,
    metric: &str,
    value: f64,
    started: Instant,
) {
    rows.push(ReportRow {
        experiment: config.experiment.clone(),
        seed,
        n,
        alpha,
        metric: metric.to_string(),
        value,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });
}

fn run_convergence_p(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    for (ci, &n) in config.n.iter().enumerate() {
        for (ai, &alpha) in config.alpha.iter().enumerate() {
            let params = with_alpha(&base, alpha)?;
            for rep in 0..config.replicates {
                let t = Instant::now();
                let seed = subseed(config.master_seed, &[ci as u64, ai as u64, rep as u64]);
                let (_, truth) = sample_graph(&params, n, seed)?;
                let p_hat = msbm::estimators::estimate_p(&truth);
                let e = linf(&p_hat, &params.p);
                push(rows, config, seed, n, alpha, "p_inf_error", e, t);
            }
        }
    }
    Ok(())
}

fn run_err_decay(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    for (ci, &n) in config.n.iter().enumerate() {
        for (ai, &alpha) in config.alpha.iter().enumerate() {
            let params = with_alpha(&base, alpha)?;
            for rep in 0..config.replicates {
                let t = Instant::now();
                let seed = subseed(config.master_seed, &[ci as u64, ai as u64, rep as u64]);
                match sample_and_cluster(&params, n, seed) {
                    Ok(err) => push(rows, config, seed, n, alpha, "err", err, t),
                    Err(_) => push(rows, config, seed, n, alpha, "failure", 1.0, t),
                }
            }
        }
    }
    Ok(())
}

fn sample_and_cluster(params: &ModelParams, n: usize, seed: u64) -> Result<f64> {
    let (graph, truth) = sample_graph(params, n, seed)?;
    let res = cluster(&graph, params.k, subseed(seed, &[9]))?;
    Ok(misclassification(&res.labels, &truth)?)
}

fn run_precision_recall(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    let n = *config.n.first().unwrap_or(&100);
    for (ai, &alpha) in config.alpha.iter().enumerate() {
        let params = with_alpha(&base, alpha)?;
        for rep in 0..config.replicates {
            let t = Instant::now();
            let seed = subseed(config.master_seed, &[ai as u64, rep as u64]);
            let (graph, truth) = sample_graph(&params, n, seed)?;
            match cluster(&graph, params.k, subseed(seed, &[9])) {
                Ok(res) => {
                    let (p, r) = compute_precision_recall(&res.labels, &truth, 0)?;
                    push(rows, config, seed, n, alpha, "precision", p.unwrap_or(f64::NAN), t);
                    push(rows, config, seed, n, alpha, "recall", r.unwrap_or(f64::NAN), t);
                }
                Err(_) => push(rows, config, seed, n, alpha, "failure", 1.0, t),
            }
        }
    }
    Ok(())
}

fn run_hypo_power(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    for (ci, &n) in config.n.iter().enumerate() {
        for rep in 0..config.replicates {
            let seed = subseed(config.master_seed, &[ci as u64, rep as u64]);
            // null: iid labels from the stationary law, same connectivity
            let t = Instant::now();
            let (null_graph, _) =
                msbm::model::sample_iid_graph(&base.pi, &base.q(), n, subseed(seed, &[0]))?;
            match markov_test(&null_graph, base.k, &base.pi, config.level, config.mc, subseed(seed, &[1])) {
                Ok(rep_out) => push(
                    rows, config, seed, n, 1.0, "reject_null",
                    rep_out.decision as u8 as f64, t,
                ),
                Err(_) => push(rows, config, seed, n, 1.0, "failure", 1.0, t),
            }
            // alternative: the Markov assignment itself
            let t = Instant::now();
            let (alt_graph, _) = sample_graph(&base, n, subseed(seed, &[2]))?;
            match markov_test(&alt_graph, base.k, &base.pi, config.level, config.mc, subseed(seed, &[3])) {
                Ok(rep_out) => push(
                    rows, config, seed, n, 1.0, "reject_alt",
                    rep_out.decision as u8 as f64, t,
                ),
                Err(_) => push(rows, config, seed, n, 1.0, "failure", 1.0, t),
            }
        }
    }
    Ok(())
}

fn run_link_l1(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    for (ci, &n) in config.n.iter().enumerate() {
        for rep in 0..config.replicates {
            let t = Instant::now();
            let seed = subseed(config.master_seed, &[ci as u64, rep as u64]);
            let (graph, truth) = sample_graph(&base, n, seed)?;
            let res = match cluster(&graph, base.k, subseed(seed, &[9])) {
                Ok(r) => r,
                Err(_) => {
                    push(rows, config, seed, n, base.alpha, "failure", 1.0, t);
                    continue;
                }
            };
            let est = EstimatedParams::from_graph(&graph, &res.labels)?;
            let theta = baum_welch(&res.labels, None, 0.01, RELIABILITY_EM_ITER, 1e-6)?;
            let eta = eta_true(&base, &truth);
            let plugin = msbm_classify(&est, &res.labels)?;
            let reliable = reliable_classify(&theta, &est, &res.labels)?;
            let l1 = |s: &[f64]| {
                s.iter().zip(&eta).map(|(a, b)| (a - b).abs()).sum::<f64>() / eta.len() as f64
            };
            let err = misclassification(&res.labels, &truth)?;
            push(rows, config, seed, n, base.alpha, "err", err, t);
            push(rows, config, seed, n, base.alpha, "plugin_l1", l1(&plugin.eta), t);
            push(rows, config, seed, n, base.alpha, "reliable_l1", l1(&reliable.eta), t);
        }
    }
    Ok(())
}

fn run_collab_sweep(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    let m = config.m_prefix;
    let nq = config.query_node;
    if nq <= m {
        bail!("query_node must exceed m_prefix");
    }
    for rep in 0..config.replicates {
        let seed = subseed(config.master_seed, &[rep as u64]);
        let (graph, truth) = sample_graph(&base, nq, seed)?;
        let prefix_graph = graph.prefix(m);
        let t = Instant::now();
        let res = match cluster(&prefix_graph, base.k, subseed(seed, &[9])) {
            Ok(r) => r,
            Err(_) => {
                push(rows, config, seed, 0, base.alpha, "failure", 1.0, t);
                continue;
            }
        };
        let (_, perm) = misclassification_alignment(&res.labels, &truth.prefix(m))?;
        let est = EstimatedParams::from_graph(&prefix_graph, &res.labels)?;
        let theta = baum_welch(&res.labels, None, 0.01, RELIABILITY_EM_ITER, 1e-6)?;
        let truth_prefix = truth.prefix(m);
        let cn = truth.values()[nq - 1];
        for &s in &config.e_sizes {
            let t = Instant::now();
            let q = FilterQuery::suffix_window(&graph, m, nq, s)?;
            let o = msbm::filter::map_optimal(&base, &truth_prefix, &q)?;
            let p = msbm::filter::map_plugin(&est, &res.labels, &q)?;
            let r = msbm::filter::map_reliable(&theta, &est, &res.labels, &q)?;
            push(rows, config, seed, s, base.alpha, "optimal_err", (o != cn) as u8 as f64, t);
            push(rows, config, seed, s, base.alpha, "plugin_err", (perm[p] != cn) as u8 as f64, t);
            push(rows, config, seed, s, base.alpha, "reliable_err", (perm[r] != cn) as u8 as f64, t);
        }
    }
    Ok(())
}

fn run_select_k(config: &ExperimentConfig, rows: &mut Vec<ReportRow>) -> Result<()> {
    let base = config.model_params()?;
    let n = *config.n.first().unwrap_or(&110);
    for rep in 0..config.replicates {
        let t = Instant::now();
        let seed = subseed(config.master_seed, &[rep as u64]);
        let (graph, _) = sample_graph(&base, n, seed)?;
        match select_k(&graph, config.k_min, config.k_max, subseed(seed, &[9])) {
            Ok(trace) => push(rows, config, seed, n, base.alpha, "k_hat", trace.k_hat as f64, t),
            Err(_) => push(rows, config, seed, n, base.alpha, "failure", 1.0, t),
        }
    }
    Ok(())
}

fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "seed", "n", "alpha", "metric", "value", "wall_ms"])?;
    for r in rows {
        w.write_record([
            r.experiment.as_str(),
            &r.seed.to_string(),
            &r.n.to_string(),
            &format_float(r.alpha),
            r.metric.as_str(),
            &format_float(r.value),
            &format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

pub fn summarize(rows: &[ReportRow]) -> Summary {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if r.value.is_nan() {
            continue;
        }
        let key = format!("n={},alpha={},metric={}", r.n, r.alpha, r.metric);
        acc.entry(key).or_default().push(r.value);
    }
    let mut cells = BTreeMap::new();
    for (key, vals) in acc {
        let count = vals.len();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        cells.insert(key, CellStats { count, mean, std: var.sqrt() });
    }
    Summary { cells }
}

/// Least-squares slope of `log(mean metric)` against `log n`.
pub fn loglog_slope(rows: &[ReportRow], metric: &str) -> Option<f64> {
    let mut per_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if r.metric == metric && r.value.is_finite() {
            per_n.entry(r.n).or_default().push(r.value);
        }
    }
    if per_n.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = per_n
        .into_iter()
        .map(|(n, vals)| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            ((n as f64).ln(), mean.ln())
        })
        .collect();
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Some((m * sxy - sx * sy) / (m * sxx - sx * sx))
}

pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(ReportRow {
            experiment: rec[0].to_string(),
            seed: rec[1].parse()?,
            n: rec[2].parse()?,
            alpha: rec[3].parse()?,
            metric: rec[4].to_string(),
            value: if &rec[5] == "nan" { f64::NAN } else { rec[5].parse()? },
            wall_ms: rec[6].parse()?,
        });
    }
    Ok(rows)
}
