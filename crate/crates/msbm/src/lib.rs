//! Growing stochastic block models whose node communities follow a hidden
//! Markov chain over arrival order.
//!
//! The crate covers the full pipeline: sampling ([`model`]), community
//! recovery through a relaxed K-means program with K-medoids rounding
//! ([`cluster`]), closed-form parameter estimation ([`estimators`]), a
//! Baum-Welch layer that learns how often the clusterer mislabels each
//! community ([`hmm`]), link prediction for the next incoming node
//! ([`predict`]), collaborative filtering of a partially observed late
//! node ([`filter`]), a Monte Carlo calibrated test for Markovian
//! community dynamics and a model-selection heuristic ([`inference`]).

pub mod assignment;
pub mod cluster;
pub mod error;
pub mod estimators;
pub mod filter;
pub mod hmm;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod predict;
pub mod presets;
pub mod rng;

pub use error::{Error, Result};
pub use model::{
    misclassification, misclassification_alignment, sample_graph, snr,
    stationary_distribution, threshold_graph, DistanceMode, Labeling, ModelParams,
    OrderedGraph, PointRecord, SnrSummary,
};
