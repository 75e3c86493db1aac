//! Vector arithmetic on top of a trained embedding.
//!
//! An edge `(s, t)` is embedded as `π(t) - π(s)`. The representative vector
//! of an edge type (or of a typed path) is the plain mean of the vectors of
//! its evaluable members, and a target for `(source, type)` is predicted by
//! ranking candidates around `π(source) + representative`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EmbeddingModel;
use crate::graph::{paths_matching, GeneralizedGraph, GraphError, PathInstance, TypedPath};

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no evaluable element of type {0}")]
    EmptyType(String),
    #[error("source node {0} has no embedding")]
    AbsentSource(String),
    #[error("candidate {0} has no embedding")]
    AbsentCandidate(String),
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("vector has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("rank list is empty")]
    EmptyRanks,
    #[error("ranks start at 1")]
    ZeroRank,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric {other} (expected euclidean or cosine)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

/// Embedding of node index `i`, if the node was ever sampled.
pub fn node_vector<'m>(model: &'m EmbeddingModel, g: &GeneralizedGraph, i: usize) -> Option<&'m [f64]> {
    model.lookup(g.node_id(i))
}

pub(crate) fn edge_vector_at(
    model: &EmbeddingModel,
    g: &GeneralizedGraph,
    e: usize,
) -> Result<Option<Vec<f64>>, GraphError> {
    let (s, t) = g.endpoints(e)?;
    Ok(match (node_vector(model, g, s), node_vector(model, g, t)) {
        (Some(vs), Some(vt)) => Some(vt.iter().zip(vs).map(|(b, a)| b - a).collect()),
        _ => None,
    })
}

/// `π(t) - π(s)` for a binary edge, `None` when an endpoint was never sampled.
pub fn edge_vector(model: &EmbeddingModel, g: &GeneralizedGraph, e: &str) -> Result<Option<Vec<f64>>, VectorError> {
    let i = g.edge_index(e).ok_or_else(|| GraphError::UnknownElement(e.to_string()))?;
    Ok(edge_vector_at(model, g, i)?)
}

fn mean_of<I: Iterator<Item = Vec<f64>>>(dim: usize, vectors: I) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(&v) {
            *s += x;
        }
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Mean edge vector over the evaluable edges carrying `edge_type`.
pub fn representative_vector_edge_type(
    model: &EmbeddingModel,
    g: &GeneralizedGraph,
    edge_type: &str,
) -> Result<Vec<f64>, VectorError> {
    let mut vectors = Vec::new();
    for e in (0..g.edge_count()).filter(|&e| g.edge_has_type(e, edge_type)) {
        if let Some(v) = edge_vector_at(model, g, e)? {
            vectors.push(v);
        }
    }
    mean_of(model.dim(), vectors.into_iter()).ok_or_else(|| VectorError::EmptyType(edge_type.to_string()))
}

/// Mean of `π(last) - π(first)` over instances whose terminals are both embedded.
pub fn path_representative(
    model: &EmbeddingModel,
    g: &GeneralizedGraph,
    instances: &[PathInstance],
) -> Option<Vec<f64>> {
    let deltas = instances.iter().filter_map(|p| {
        let a = node_vector(model, g, p.source())?;
        let b = node_vector(model, g, p.target())?;
        Some(b.iter().zip(a).map(|(y, x)| y - x).collect::<Vec<_>>())
    });
    mean_of(model.dim(), deltas)
}

pub fn representative_vector_typed_path(
    model: &EmbeddingModel,
    g: &GeneralizedGraph,
    path: &TypedPath,
) -> Result<Vec<f64>, VectorError> {
    let instances = paths_matching(g, path)?;
    path_representative(model, g, &instances).ok_or_else(|| VectorError::EmptyType(path.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub query_point: Vec<f64>,
    /// Ascending by distance, ties by node id.
    pub entries: Vec<(String, f64)>,
}

impl Ranking {
    /// 1-based position of `node`.
    pub fn position(&self, node: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == node).map(|p| p + 1)
    }
}

pub fn query_point(source: &[f64], rep: &[f64]) -> Vec<f64> {
    source.iter().zip(rep).map(|(a, b)| a + b).collect()
}

/// Ranks `candidates` by distance to `π(source) + rep`.
pub fn predict_target(
    model: &EmbeddingModel,
    source: &str,
    rep: &[f64],
    candidates: &[&str],
    metric: Metric,
) -> Result<Ranking, VectorError> {
    if rep.len() != model.dim() {
        return Err(VectorError::Dimension { expected: model.dim(), got: rep.len() });
    }
    let src = model.lookup(source).ok_or_else(|| VectorError::AbsentSource(source.to_string()))?;
    if candidates.is_empty() {
        return Err(VectorError::NoCandidates);
    }
    let q = query_point(src, rep);
    let mut entries = candidates
        .iter()
        .map(|&c| {
            let v = model.lookup(c).ok_or_else(|| VectorError::AbsentCandidate(c.to_string()))?;
            Ok((c.to_string(), metric.distance(&q, v)))
        })
        .collect::<Result<Vec<_>, VectorError>>()?;
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    entries.dedup_by(|a, b| a.0 == b.0);
    Ok(Ranking { query_point: q, entries })
}

/// Rank of `target` among candidate vectors: one plus the number of
/// candidates strictly closer to `query` (exact ties resolve in the target's
/// favour).
pub fn optimistic_rank(query: &[f64], target: &[f64], candidates: &[&[f64]], metric: Metric) -> usize {
    let d = metric.distance(query, target);
    1 + candidates.iter().filter(|c| metric.distance(query, c) < d).count()
}

/// Non-empty list of 1-based ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrrInput {
    ranks: Vec<usize>,
}

impl MrrInput {
    pub fn new(ranks: Vec<usize>) -> Result<Self, VectorError> {
        if ranks.is_empty() {
            return Err(VectorError::EmptyRanks);
        }
        if ranks.contains(&0) {
            return Err(VectorError::ZeroRank);
        }
        Ok(Self { ranks })
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }
}

/// Mean reciprocal rank.
pub fn mrr(input: &MrrInput) -> f64 {
    input.ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / input.ranks.len() as f64
}
