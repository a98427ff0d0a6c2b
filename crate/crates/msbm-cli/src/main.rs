//! `msbm` command line: sampling, clustering, estimation, HMM fitting,
//! link prediction, collaborative filtering, Markov-dynamic testing,
//! model selection, threshold-graph construction, and experiment grids.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use msbm_cli::experiments::{run_experiment, ExperimentConfig, RELIABILITY_EM_ITER};
use msbm::cluster::{cluster_full, ClusterOptions};
use msbm::estimators::EstimatedParams;
use msbm::filter::FilterQuery;
use msbm::hmm::{baum_welch, GapSpec};
use msbm::inference::{markov_test, select_k};
use msbm::model::{sample_graph, threshold_graph, DistanceMode, Labeling};
use msbm::predict::{eta_true, msbm_classify, reliable_classify, LinkScores};

#[derive(Parser)]
#[command(name = "msbm", version, about = "Markov stochastic block models: sampling, recovery, prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictMethod {
    Plugin,
    Reliable,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterMethod {
    Optimal,
    Plugin,
    Reliable,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Planar,
    Geodesic,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and its community labels from a model file.
    Sample {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        graph_out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
    },
    /// Recover communities; writes a labels file and prints one JSON
    /// diagnostics line.
    Cluster {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form parameter estimates from a graph and labels.
    Estimate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the clusterer-error HMM to a label sequence.
    HmmFit {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Unreliable-range spec `T,n_start,delta` (1-based).
        #[arg(long)]
        gap: Option<String>,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores for edges between every node and the next arrival.
    PredictLink {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        method: PredictMethod,
        /// Model file (oracle method).
        #[arg(long)]
        params: Option<PathBuf>,
        /// True labels file (oracle method).
        #[arg(long)]
        true_labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer the community of a late node from partial edges.
    CollabFilter {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        /// CSV file of `i,x` rows: 1-based prefix index, edge indicator.
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum)]
        method: FilterMethod,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        true_labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test the independent-assignment null against a Markov dynamic.
    TestMarkov {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        /// Comma-separated null distribution.
        #[arg(long)]
        pi0: String,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        #[arg(long, default_value_t = 500)]
        mc: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the number of communities by the emission-confusion jump.
    SelectK {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        kmin: usize,
        #[arg(long)]
        kmax: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a graph from a timestamped point sequence.
    ThresholdGraph {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        graph_out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
    },
    /// Run an experiment grid from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn write_scores(path: &PathBuf, scores: &LinkScores) -> Result<()> {
    let mut out = String::from("node,eta,decision\n");
    for (i, (e, d)) in scores.eta.iter().zip(&scores.decisions).enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, e, *d as u8));
    }
    fs::write(path, out)?;
    Ok(())
}

fn load_labels(path: &PathBuf, k: Option<usize>) -> Result<Labeling> {
    Ok(msbm::io::read_labels(path, k)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Sample { params, n, seed, graph_out, labels_out } => {
            let model = msbm::io::read_model_params(&params)?;
            let (graph, labels) = sample_graph(&model, n, seed)?;
            msbm::io::write_graph(&graph_out, &graph, model.k)?;
            msbm::io::write_labels(&labels_out, &labels)?;
            println!(
                "{}",
                json!({"n": n, "k": model.k, "edges": graph.edge_count(), "seed": seed})
            );
        }
        Command::Cluster { graph, k, beta, tol, seed, out } => {
            let (g, _) = msbm::io::read_graph(&graph)?;
            let mut opts = ClusterOptions { beta, ..Default::default() };
            if let Some(t) = tol {
                opts.solver.tol = t;
            }
            let (res, sol) = cluster_full(&g, k, seed, &opts)?;
            msbm::io::write_labels(&out, &res.labels)?;
            println!(
                "{}",
                json!({
                    "objective": sol.objective,
                    "iterations": sol.iterations,
                    "trace_residual": sol.trace_residual,
                    "rowsum_residual": sol.rowsum_residual,
                    "box_residual": sol.box_residual,
                    "assignment_cost": res.assignment_cost,
                    "medoid_rows": res.medoid_rows.iter().map(|m| m + 1).collect::<Vec<_>>(),
                })
            );
        }
        Command::Estimate { graph, labels, out } => {
            let (g, k) = msbm::io::read_graph(&graph)?;
            let l = load_labels(&labels, Some(k))?;
            let est = EstimatedParams::from_graph(&g, &l)?;
            msbm::io::write_estimated_params(&out, &est)?;
            println!("{}", json!({"k": est.k, "written": out}));
        }
        Command::HmmFit { labels, k, gap, epsilon, max_iter, out } => {
            let l = load_labels(&labels, k)?;
            let gap = match gap {
                None => None,
                Some(spec) => {
                    let parts: Vec<usize> = spec
                        .split(',')
                        .map(|s| s.trim().parse().context("parsing gap"))
                        .collect::<Result<_>>()?;
                    if parts.len() != 3 {
                        bail!("gap must be T,n_start,delta");
                    }
                    Some(GapSpec { t: parts[0], n_start: parts[1], delta: parts[2] })
                }
            };
            let theta = baum_welch(&l, gap, epsilon, max_iter, 1e-6)?;
            msbm::io::write_hmm(&out, &theta)?;
            println!(
                "{}",
                json!({"log_likelihood": theta.log_likelihood, "iterations": theta.history.len()})
            );
        }
        Command::PredictLink { graph, k, seed, method, params, true_labels, out } => {
            let (g, _) = msbm::io::read_graph(&graph)?;
            let scores = match method {
                PredictMethod::Oracle => {
                    let params = params.context("oracle needs --params")?;
                    let labels = true_labels.context("oracle needs --true-labels")?;
                    let model = msbm::io::read_model_params(&params)?;
                    let truth = load_labels(&labels, Some(model.k))?;
                    let eta = eta_true(&model, &truth);
                    let decisions = eta.iter().map(|&e| e >= 0.5).collect();
                    LinkScores { eta, decisions }
                }
                PredictMethod::Plugin | PredictMethod::Reliable => {
                    let res = msbm::cluster::cluster(&g, k, seed)?;
                    let est = EstimatedParams::from_graph(&g, &res.labels)?;
                    match method {
                        PredictMethod::Plugin => msbm_classify(&est, &res.labels)?,
                        _ => {
                            let theta =
                                baum_welch(&res.labels, None, 0.01, RELIABILITY_EM_ITER, 1e-6)?;
                            reliable_classify(&theta, &est, &res.labels)?
                        }
                    }
                }
            };
            write_scores(&out, &scores)?;
            println!("{}", json!({"nodes": scores.eta.len(), "written": out}));
        }
        Command::CollabFilter { graph, k, m, n, obs, method, seed, params, true_labels, out } => {
            let (g, _) = msbm::io::read_graph(&graph)?;
            let text = fs::read_to_string(&obs)?;
            let mut observed = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() != 2 {
                    bail!("bad observation row '{line}', expected i,x");
                }
                let i: usize = parts[0].trim().parse()?;
                let x: u8 = parts[1].trim().parse()?;
                if i == 0 {
                    bail!("observation indices are 1-based");
                }
                observed.push((i - 1, x != 0));
            }
            let query = FilterQuery::new(m, n, observed)?;
            let (community, posterior) = match method {
                FilterMethod::Optimal => {
                    let params = params.context("optimal needs --params")?;
                    let labels = true_labels.context("optimal needs --true-labels")?;
                    let model = msbm::io::read_model_params(&params)?;
                    let truth = load_labels(&labels, Some(model.k))?;
                    let post = msbm::filter::optimal_posterior(&model, &truth, &query)?;
                    (msbm::filter::map_optimal(&model, &truth, &query)?, post)
                }
                FilterMethod::Plugin | FilterMethod::Reliable => {
                    let prefix = g.prefix(m);
                    let res = msbm::cluster::cluster(&prefix, k, seed)?;
                    let est = EstimatedParams::from_graph(&prefix, &res.labels)?;
                    match method {
                        FilterMethod::Plugin => (
                            msbm::filter::map_plugin(&est, &res.labels, &query)?,
                            msbm::filter::plugin_posterior(&est, &res.labels, &query)?,
                        ),
                        _ => {
                            let theta =
                                baum_welch(&res.labels, None, 0.01, RELIABILITY_EM_ITER, 1e-6)?;
                            (
                                msbm::filter::map_reliable(&theta, &est, &res.labels, &query)?,
                                msbm::filter::reliable_posterior(&theta, &est, &res.labels, &query)?,
                            )
                        }
                    }
                }
            };
            let payload = json!({"community": community + 1, "posterior": posterior});
            fs::write(&out, serde_json::to_string_pretty(&payload)?)?;
            println!("{payload}");
        }
        Command::TestMarkov { graph, k, pi0, level, mc, seed, out } => {
            let (g, _) = msbm::io::read_graph(&graph)?;
            let pi: Vec<f64> = pi0
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("parsing pi0"))
                .collect::<Result<_>>()?;
            let report = markov_test(&g, k, &ndarray::Array1::from(pi), level, mc, seed)?;
            let payload = json!({
                "statistic": report.statistic,
                "threshold": report.threshold,
                "mc_replicates": report.mc_replicates,
                "decision": if report.decision { "reject" } else { "accept" },
                "level": report.level,
            });
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string_pretty(&payload)?)?;
            }
            println!("{payload}");
        }
        Command::SelectK { graph, kmin, kmax, seed, out } => {
            let (g, _) = msbm::io::read_graph(&graph)?;
            let trace = select_k(&g, kmin, kmax, seed)?;
            let payload = json!({
                "k_hat": trace.k_hat,
                "k_min": trace.k_min,
                "k_max": trace.k_max,
                "m_values": trace.m_values,
            });
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string_pretty(&payload)?)?;
            }
            println!("{payload}");
        }
        Command::ThresholdGraph { points, tau, mode, graph_out, labels_out } => {
            let pts = msbm::io::read_points(&points)?;
            let mode = match mode {
                Mode::Planar => DistanceMode::Planar,
                Mode::Geodesic => DistanceMode::GreatCircle,
            };
            let (g, labels) = threshold_graph(&pts, tau, mode)?;
            msbm::io::write_graph(&graph_out, &g, labels.k())?;
            msbm::io::write_labels(&labels_out, &labels)?;
            println!(
                "{}",
                json!({"n": g.n(), "k": labels.k(), "edges": g.edge_count()})
            );
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_toml_file(&config)?;
            let summary = run_experiment(&cfg)?;
            println!(
                "{}",
                json!({
                    "experiment": cfg.experiment,
                    "output_dir": cfg.output_dir,
                    "cells": summary.cells.len(),
                })
            );
        }
    }
    Ok(())
}
