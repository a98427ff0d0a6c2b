//! File formats.
//!
//! - Graph: plain text, first line `n K`, then one `i j` line per edge
//!   with 1-based endpoints, `i < j`.
//! - Labels: one 1-based integer per line.
//! - Point sequence: CSV with header `timestamp,lat,lon,class`.
//! - Parameter files: JSON envelopes whose matrices are row-major CSV
//!   blocks (`nan` marks undefined entries).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatedParams;
use crate::hmm::HmmState;
use crate::model::{Labeling, ModelParams, OrderedGraph, PointRecord};

pub fn write_graph(path: &Path, graph: &OrderedGraph, k: usize) -> Result<()> {
    let mut out = format!("{} {}\n", graph.n(), k);
    for (i, j) in graph.edges() {
        out.push_str(&format!("{} {}\n", i + 1, j + 1));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Returns the graph and the community count declared in the header.
pub fn read_graph(path: &Path) -> Result<(OrderedGraph, usize)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let mut parts = header.split_whitespace();
    let n: usize = parts
        .next()
        .ok_or_else(|| Error::Parse("missing n".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad n: {e}")))?;
    let k: usize = parts
        .next()
        .ok_or_else(|| Error::Parse("missing K in header".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad K: {e}")))?;
    let mut pairs = Vec::new();
    for line in lines {
        let mut it = line.split_whitespace();
        let i: usize = it
            .next()
            .ok_or_else(|| Error::Parse(format!("bad edge line: {line}")))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad edge endpoint: {e}")))?;
        let j: usize = it
            .next()
            .ok_or_else(|| Error::Parse(format!("bad edge line: {line}")))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad edge endpoint: {e}")))?;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::Parse(format!("edge ({i},{j}) out of range")));
        }
        pairs.push((i - 1, j - 1));
    }
    Ok((OrderedGraph::from_pairs(n, &pairs)?, k))
}

pub fn write_labels(path: &Path, labels: &Labeling) -> Result<()> {
    let mut out = String::new();
    for &v in labels.values() {
        out.push_str(&format!("{}\n", v + 1));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `k` fixes the community count; pass `None` to use the largest label.
pub fn read_labels(path: &Path, k: Option<usize>) -> Result<Labeling> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t
            .parse()
            .map_err(|e| Error::Parse(format!("bad label {t}: {e}")))?;
        if v == 0 {
            return Err(Error::Parse("labels are 1-based".into()));
        }
        values.push(v - 1);
    }
    if values.is_empty() {
        return Err(Error::Parse("empty labels file".into()));
    }
    let k = k.unwrap_or_else(|| values.iter().max().unwrap() + 1);
    Labeling::new(values, k)
}

pub fn read_points(path: &Path) -> Result<Vec<PointRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty points file".into()))?;
    if header.trim() != "timestamp,lat,lon,class" {
        return Err(Error::Parse(format!(
            "expected header 'timestamp,lat,lon,class', got '{header}'"
        )));
    }
    let mut points = Vec::new();
    for line in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("bad point row: {t}")));
        }
        points.push(PointRecord {
            timestamp: fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("bad timestamp: {e}")))?,
            lat: fields[1]
                .parse()
                .map_err(|e| Error::Parse(format!("bad lat: {e}")))?,
            lon: fields[2]
                .parse()
                .map_err(|e| Error::Parse(format!("bad lon: {e}")))?,
            class: fields[3]
                .parse()
                .map_err(|e| Error::Parse(format!("bad class: {e}")))?,
        });
    }
    Ok(points)
}

fn matrix_to_csv(m: &Array2<f64>) -> String {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| format_float(m[[i, j]]))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn vector_to_csv(v: &Array1<f64>) -> String {
    v.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(",")
}

fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        // round-trippable representation
        format!("{}", x)
    }
}

fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_row)
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix block".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("ragged matrix block".into()));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols, cols), flat)
        .map_err(|e| Error::Parse(format!("matrix shape: {e}")))
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            let t = f.trim();
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number '{t}': {e}")))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EstimatedParamsFile {
    k: usize,
    q_hat: String,
    pi_hat: String,
    p_hat: String,
}

pub fn write_estimated_params(path: &Path, est: &EstimatedParams) -> Result<()> {
    let file = EstimatedParamsFile {
        k: est.k,
        q_hat: matrix_to_csv(&est.q_hat),
        pi_hat: vector_to_csv(&est.pi_hat),
        p_hat: matrix_to_csv(&est.p_hat),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_estimated_params(path: &Path) -> Result<EstimatedParams> {
    let text = fs::read_to_string(path)?;
    let file: EstimatedParamsFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("parse: {e}")))?;
    let pi_row = parse_row(&file.pi_hat)?;
    Ok(EstimatedParams {
        k: file.k,
        q_hat: matrix_from_csv(&file.q_hat)?,
        pi_hat: Array1::from(pi_row),
        p_hat: matrix_from_csv(&file.p_hat)?,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelParamsFile {
    k: usize,
    alpha: f64,
    p: String,
    q0: String,
    #[serde(default)]
    pi: Option<String>,
}

pub fn write_model_params(path: &Path, params: &ModelParams) -> Result<()> {
    let file = ModelParamsFile {
        k: params.k,
        alpha: params.alpha,
        p: matrix_to_csv(&params.p),
        q0: matrix_to_csv(&params.q0),
        pi: Some(vector_to_csv(&params.pi)),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

/// Missing `pi` falls back to the stationary distribution of `p`.
pub fn read_model_params(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path)?;
    let file: ModelParamsFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("parse: {e}")))?;
    let p = matrix_from_csv(&file.p)?;
    let q0 = matrix_from_csv(&file.q0)?;
    if p.nrows() != file.k {
        return Err(Error::Parse("P size disagrees with k".into()));
    }
    match file.pi {
        Some(s) => {
            let pi = Array1::from(parse_row(&s)?);
            ModelParams::new(p, pi, file.alpha, q0)
        }
        None => ModelParams::with_stationary(p, file.alpha, q0),
    }
}

#[derive(Serialize, Deserialize)]
struct HmmFile {
    k: usize,
    p_tilde: String,
    o: String,
    mu: String,
    log_likelihood: f64,
}

pub fn write_hmm(path: &Path, theta: &HmmState) -> Result<()> {
    let file = HmmFile {
        k: theta.k(),
        p_tilde: matrix_to_csv(&theta.p_tilde),
        o: matrix_to_csv(&theta.o),
        mu: vector_to_csv(&theta.mu),
        log_likelihood: theta.log_likelihood,
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn read_hmm(path: &Path) -> Result<HmmState> {
    let text = fs::read_to_string(path)?;
    let file: HmmFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("parse: {e}")))?;
    Ok(HmmState {
        p_tilde: matrix_from_csv(&file.p_tilde)?,
        o: matrix_from_csv(&file.o)?,
        mu: Array1::from(parse_row(&file.mu)?),
        log_likelihood: file.log_likelihood,
        history: Vec::new(),
    })
}
