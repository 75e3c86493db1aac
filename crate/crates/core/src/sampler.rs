//! Training-set generation: pick a node uniformly, then draw `window` tokens
//! uniformly with replacement from its pool (neighbor ids plus its own
//! `key=value` property tokens). Types never enter the pool.
//!
//! Pair `i` uses its own random stream derived from `(seed, i)`, so the output
//! does not depend on how the index range is split across threads.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GeneralizedGraph, GraphError};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} has no neighbors and no properties")]
    Unsampleable(String),
    #[error("graph has no sampleable node")]
    NoSampleableNode,
    #[error("training-set dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub center: String,
    pub context: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of (node, context) pairs.
    pub n_pairs: usize,
    /// Tokens per context.
    pub window: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_pairs: 100_000, window: 3, seed: 1 }
    }
}

impl SamplerConfig {
    pub fn new(n_pairs: usize, window: usize, seed: u64) -> Result<Self, SampleError> {
        let cfg = Self { n_pairs, window, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if self.n_pairs == 0 {
            return Err(SampleError::Config("n_pairs must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(SampleError::Config("window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    pub pairs: Vec<TrainingPair>,
    /// Center draws that hit an unsampleable node and were repeated.
    pub redraws: usize,
    /// Nodes with an empty pool; they never appear as centers.
    pub unsampleable_nodes: usize,
}

/// Neighbor ids followed by the node's own property tokens.
fn node_pool(g: &GeneralizedGraph, i: usize) -> Vec<String> {
    let mut pool: Vec<String> = g.neighbor_indices(i).iter().map(|&j| g.node_id(j).to_string()).collect();
    pool.extend(g.node_property_tokens(i));
    pool
}

/// Per-node sampling pools, built once per graph.
pub struct Pools<'g> {
    graph: &'g GeneralizedGraph,
    tokens: Vec<Vec<String>>,
}

impl<'g> Pools<'g> {
    pub fn new(graph: &'g GeneralizedGraph) -> Self {
        let tokens = (0..graph.node_count()).map(|i| node_pool(graph, i)).collect();
        Self { graph, tokens }
    }

    pub fn pool(&self, node: usize) -> &[String] {
        &self.tokens[node]
    }

    pub fn is_sampleable(&self, node: usize) -> bool {
        !self.tokens[node].is_empty()
    }

    fn draw<R: Rng>(&self, node: usize, window: usize, rng: &mut R) -> Result<Vec<String>, SampleError> {
        let pool = &self.tokens[node];
        if pool.is_empty() {
            return Err(SampleError::Unsampleable(self.graph.node_id(node).to_string()));
        }
        Ok((0..window).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
    }
}

/// `window` independent uniform draws from the pool of node `n`.
pub fn sample_context<R: Rng>(
    g: &GeneralizedGraph,
    n: &str,
    window: usize,
    rng: &mut R,
) -> Result<Vec<String>, SampleError> {
    let i = g.node_index(n).ok_or_else(|| GraphError::UnknownNode(n.to_string()))?;
    let pool = node_pool(g, i);
    if pool.is_empty() {
        return Err(SampleError::Unsampleable(n.to_string()));
    }
    Ok((0..window).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
}

/// Random stream for pair `index` under `seed`.
pub fn pair_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn build_training_set(g: &GeneralizedGraph, cfg: &SamplerConfig) -> Result<TrainingSet, SampleError> {
    cfg.validate()?;
    let pools = Pools::new(g);
    let unsampleable_nodes = (0..g.node_count()).filter(|&i| !pools.is_sampleable(i)).count();
    if unsampleable_nodes == g.node_count() {
        return Err(SampleError::NoSampleableNode);
    }

    let drawn: Vec<(TrainingPair, usize)> = (0..cfg.n_pairs as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = pair_rng(cfg.seed, index);
            let mut redraws = 0;
            let center = loop {
                let n = rng.random_range(0..g.node_count());
                if pools.is_sampleable(n) {
                    break n;
                }
                redraws += 1;
            };
            let context = pools.draw(center, cfg.window, &mut rng).expect("center is sampleable");
            (TrainingPair { center: g.node_id(center).to_string(), context }, redraws)
        })
        .collect();

    let redraws = drawn.iter().map(|(_, r)| r).sum();
    Ok(TrainingSet { pairs: drawn.into_iter().map(|(p, _)| p).collect(), redraws, unsampleable_nodes })
}

/// Dumps pairs as JSON Lines `{"center": str, "context": [str]}`.
pub fn write_pairs<W: Write>(pairs: &[TrainingPair], mut out: W) -> Result<(), SampleError> {
    for p in pairs {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(input: R) -> Result<Vec<TrainingPair>, SampleError> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair =
            serde_json::from_str(&line).map_err(|e| SampleError::Dump { line: i + 1, message: e.to_string() })?;
        pairs.push(pair);
    }
    Ok(pairs)
}
