//! Experiment drivers: node/edge type prediction with kNN, entity retrieval
//! with edge hold-out, and typed-path target retrieval. Every driver repeats
//! its experiment with per-repetition seeds and reports the spread.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{train, EmbeddingModel, EncoderError, TrainConfig};
use crate::graph::{paths_matching, GeneralizedGraph, GraphError, TypeSet, TypedPath};
use crate::sampler::{build_training_set, SampleError, SamplerConfig};
use crate::vectors::{edge_vector_at, node_vector, optimistic_rank, path_representative, query_point, Metric};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("knn needs at least {k} points, got {got}")]
    TooFewPoints { k: usize, got: usize },
    #[error("no embedded element carries a type")]
    NoEvaluableItems,
    #[error("hold-out would remove every edge of type {0}")]
    HoldoutEmptiesType(String),
    #[error("no query could be evaluated")]
    NoQueries,
    #[error("no path matches {0}")]
    NoMatchingPaths(String),
    #[error("no evaluable instance of {0}")]
    EmptyType(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// How the candidate set of a retrieval query is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// Only nodes sharing a type with the expected target.
    #[default]
    Filtered,
    /// Every embedded node.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub holdout_fraction: f64,
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub metric: Metric,
    pub candidates: CandidateMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            k: 3,
            repetitions: 10,
            seed: 1,
            metric: Metric::Euclidean,
            candidates: CandidateMode::Filtered,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(EvalError::Config(format!("holdout fraction {} outside (0, 1)", self.holdout_fraction)));
        }
        if self.k == 0 || self.k.is_multiple_of(2) {
            return Err(EvalError::Config(format!("k = {} must be a positive odd integer", self.k)));
        }
        if self.repetitions == 0 {
            return Err(EvalError::Config("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// SplitMix64 of `base` and `index`: independent-looking seeds per repetition.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type ConfusionRows = BTreeMap<String, BTreeMap<String, f64>>;

/// Row-normalized confusion matrix in percent. `rows[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub rows: ConfusionRows,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: &str, predicted: &str) -> f64 {
        self.rows.get(truth).and_then(|r| r.get(predicted)).copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (truth, row) in &self.rows {
            out.push_str(truth);
            for l in &self.labels {
                let _ = write!(out, ",{:.4}", row.get(l).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut out = format!("{:width$}", "");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (truth, row) in &self.rows {
            let _ = write!(out, "{truth:width$}");
            for l in &self.labels {
                let _ = write!(out, " {:>width$.2}", row.get(l).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `accuracy` or `mrr`.
    pub metric_name: String,
    pub per_repetition: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single repetition).
    pub stddev: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    /// Retrieval only: MRR of uniformly shuffled rankings on the same queries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_per_repetition: Option<Vec<f64>>,
    /// Queries (or test items) scored, summed over repetitions.
    pub evaluated: usize,
    /// Queries skipped because an embedding was missing, summed over repetitions.
    pub excluded: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_repetitions(metric_name: &str, per_repetition: Vec<f64>) -> Self {
        let (mean, stddev) = mean_std(&per_repetition);
        Self {
            metric_name: metric_name.to_string(),
            per_repetition,
            mean,
            stddev,
            confusion: None,
            baseline_per_repetition: None,
            evaluated: 0,
            excluded: 0,
        }
    }

    pub fn baseline_mean(&self) -> Option<f64> {
        self.baseline_per_repetition.as_ref().map(|b| mean_std(b).0)
    }

    /// Concatenates single-model reports into one.
    pub fn merge(parts: Vec<EvalReport>) -> Option<EvalReport> {
        let first = parts.first()?;
        let metric = first.metric_name.clone();
        let values = parts.iter().flat_map(|p| p.per_repetition.iter().copied()).collect();
        let mut merged = EvalReport::from_repetitions(&metric, values);
        if parts.iter().all(|p| p.baseline_per_repetition.is_some()) {
            merged.baseline_per_repetition =
                Some(parts.iter().flat_map(|p| p.baseline_per_repetition.clone().unwrap_or_default()).collect());
        }
        merged.evaluated = parts.iter().map(|p| p.evaluated).sum();
        merged.excluded = parts.iter().map(|p| p.excluded).sum();
        Some(merged)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {}", "metric", self.metric_name);
        let _ = writeln!(out, "{:<12} {:.6}", "mean", self.mean);
        let _ = writeln!(out, "{:<12} {:.6}", "stddev", self.stddev);
        if let Some(b) = self.baseline_mean() {
            let _ = writeln!(out, "{:<12} {:.6}", "baseline", b);
        }
        let _ = writeln!(out, "{:<12} {}", "evaluated", self.evaluated);
        let _ = writeln!(out, "{:<12} {}", "excluded", self.excluded);
        for (i, v) in self.per_repetition.iter().enumerate() {
            let _ = writeln!(out, "{:<12} {:.6}", format!("rep {i}"), v);
        }
        if let Some(c) = &self.confusion {
            out.push('\n');
            out.push_str(&c.to_table());
        }
        out
    }
}

/// Majority label among the `k` nearest points (Euclidean). Distance ties go
/// to the earlier point, vote ties to the smaller label. A point with several
/// labels gives one vote to each.
pub fn knn_classify(points: &[(Vec<f64>, TypeSet)], k: usize, query: &[f64]) -> Result<String, EvalError> {
    if k == 0 || points.len() < k {
        return Err(EvalError::TooFewPoints { k, got: points.len() });
    }
    let refs: Vec<(&[f64], &TypeSet)> = points.iter().map(|(v, l)| (v.as_slice(), l)).collect();
    Ok(knn_vote(&refs, k, query).to_string())
}

fn knn_vote<'a>(points: &[(&[f64], &'a TypeSet)], k: usize, query: &[f64]) -> &'a str {
    let mut dist: Vec<(f64, usize)> =
        points.iter().enumerate().map(|(i, (v, _))| (Metric::Euclidean.distance(v, query), i)).collect();
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by);
        dist.truncate(k);
    }
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for &(_, i) in &dist {
        for label in points[i].1 {
            *votes.entry(label).or_default() += 1;
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for (label, n) in votes {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((label, n));
        }
    }
    best.map(|(l, _)| l).unwrap_or_default()
}

struct LabeledItems {
    vectors: Vec<Vec<f64>>,
    labels: Vec<TypeSet>,
}

fn classification_report(items: &LabeledItems, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let n = items.vectors.len();
    if n == 0 {
        return Err(EvalError::NoEvaluableItems);
    }
    let n_test = ((cfg.holdout_fraction * n as f64).round() as usize).clamp(1, n);
    if n - n_test < cfg.k {
        return Err(EvalError::TooFewPoints { k: cfg.k, got: n - n_test });
    }

    let runs: Vec<(f64, ConfusionRows)> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, rep as u64));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (test, train) = order.split_at(n_test);
            let train_points: Vec<(&[f64], &TypeSet)> =
                train.iter().map(|&i| (items.vectors[i].as_slice(), &items.labels[i])).collect();

            let mut correct = 0usize;
            let mut mass: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            for &i in test {
                let predicted = knn_vote(&train_points, cfg.k, &items.vectors[i]);
                let truth = &items.labels[i];
                if truth.contains(predicted) {
                    correct += 1;
                }
                let share = 1.0 / truth.len() as f64;
                for t in truth {
                    *mass.entry(t.clone()).or_default().entry(predicted.to_string()).or_default() += share;
                }
            }
            for row in mass.values_mut() {
                let total: f64 = row.values().sum();
                row.values_mut().for_each(|v| *v = 100.0 * *v / total);
            }
            (correct as f64 / n_test as f64, mass)
        })
        .collect();

    let labels: BTreeSet<String> = items
        .labels
        .iter()
        .flatten()
        .cloned()
        .chain(runs.iter().flat_map(|(_, m)| m.values().flat_map(|r| r.keys().cloned())))
        .collect();
    let mut sums: BTreeMap<String, (BTreeMap<String, f64>, usize)> = BTreeMap::new();
    for (_, mass) in &runs {
        for (truth, row) in mass {
            let entry = sums.entry(truth.clone()).or_default();
            entry.1 += 1;
            for (p, v) in row {
                *entry.0.entry(p.clone()).or_default() += v;
            }
        }
    }
    let rows = sums
        .into_iter()
        .map(|(truth, (row, count))| {
            let row = labels.iter().map(|l| (l.clone(), row.get(l).copied().unwrap_or(0.0) / count as f64)).collect();
            (truth, row)
        })
        .collect();

    let mut report = EvalReport::from_repetitions("accuracy", runs.iter().map(|(a, _)| *a).collect());
    report.confusion = Some(ConfusionMatrix { labels: labels.into_iter().collect(), rows });
    report.evaluated = n_test * cfg.repetitions;
    Ok(report)
}

/// kNN node-type prediction over embedded, typed nodes; a prediction is
/// correct when it is one of the node's types.
pub fn eval_node_types(
    g: &GeneralizedGraph,
    model: &EmbeddingModel,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut items = LabeledItems { vectors: Vec::new(), labels: Vec::new() };
    let mut excluded = 0;
    for i in 0..g.node_count() {
        let Some(types) = g.node_types(i) else { continue };
        match node_vector(model, g, i) {
            Some(v) => {
                items.vectors.push(v.to_vec());
                items.labels.push(types.clone());
            }
            None => excluded += 1,
        }
    }
    let mut report = classification_report(&items, cfg)?;
    report.excluded = excluded * cfg.repetitions;
    Ok(report)
}

/// Same protocol over edge vectors `π(t) - π(s)` of typed binary edges.
pub fn eval_edge_types(
    g: &GeneralizedGraph,
    model: &EmbeddingModel,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    g.require_binary()?;
    let mut items = LabeledItems { vectors: Vec::new(), labels: Vec::new() };
    let mut excluded = 0;
    for e in 0..g.edge_count() {
        let Some(types) = g.edge_types(e) else { continue };
        match edge_vector_at(model, g, e)? {
            Some(v) => {
                items.vectors.push(v);
                items.labels.push(types.clone());
            }
            None => excluded += 1,
        }
    }
    let mut report = classification_report(&items, cfg)?;
    report.excluded = excluded * cfg.repetitions;
    Ok(report)
}

/// First (smallest) type label of an edge; used to stratify and to pick the
/// representative vector of a query.
fn primary_type(g: &GeneralizedGraph, e: usize) -> Option<&str> {
    g.edge_types(e).and_then(|t| t.iter().next()).map(String::as_str)
}

/// Stratified hold-out: `round(fraction * n_t)` random edges of each primary
/// edge type `t`. Untyped edges are never held out.
pub fn holdout_split(g: &GeneralizedGraph, fraction: f64, seed: u64) -> Result<BTreeSet<usize>, EvalError> {
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for e in 0..g.edge_count() {
        if let Some(t) = primary_type(g, e) {
            strata.entry(t).or_default().push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = BTreeSet::new();
    for (t, mut edges) in strata {
        let n_hold = (fraction * edges.len() as f64).round() as usize;
        if n_hold >= edges.len() {
            return Err(EvalError::HoldoutEmptiesType(t.to_string()));
        }
        edges.shuffle(&mut rng);
        held.extend(edges.into_iter().take(n_hold));
    }
    Ok(held)
}

/// Embedded nodes usable as ranking candidates.
struct CandidatePool<'m> {
    nodes: Vec<(usize, &'m [f64])>,
}

impl<'m> CandidatePool<'m> {
    fn new(g: &GeneralizedGraph, model: &'m EmbeddingModel) -> Self {
        let nodes = (0..g.node_count()).filter_map(|i| node_vector(model, g, i).map(|v| (i, v))).collect();
        Self { nodes }
    }

    fn select(&self, g: &GeneralizedGraph, mode: CandidateMode, wanted: Option<&TypeSet>) -> Vec<&'m [f64]> {
        self.nodes
            .iter()
            .filter(|(i, _)| match (mode, wanted) {
                (CandidateMode::All, _) => true,
                (CandidateMode::Filtered, Some(w)) => g.node_types(*i).is_some_and(|t| !t.is_disjoint(w)),
                (CandidateMode::Filtered, None) => g.node_types(*i).is_none(),
            })
            .map(|&(_, v)| v)
            .collect()
    }
}

struct RetrievalRun {
    ranks: Vec<usize>,
    baseline_ranks: Vec<usize>,
    excluded: usize,
}

impl RetrievalRun {
    fn into_report(runs: Vec<RetrievalRun>) -> Result<EvalReport, EvalError> {
        if runs.iter().any(|r| r.ranks.is_empty()) {
            return Err(EvalError::NoQueries);
        }
        let rr = |ranks: &[usize]| ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
        let mut report = EvalReport::from_repetitions("mrr", runs.iter().map(|r| rr(&r.ranks)).collect());
        report.baseline_per_repetition = Some(runs.iter().map(|r| rr(&r.baseline_ranks)).collect());
        report.evaluated = runs.iter().map(|r| r.ranks.len()).sum();
        report.excluded = runs.iter().map(|r| r.excluded).sum();
        Ok(report)
    }
}

/// Position of the target in a uniformly shuffled list of `n` candidates.
fn shuffled_rank<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.random_range(1..=n)
}

fn retrieval_run(
    g: &GeneralizedGraph,
    model: &EmbeddingModel,
    queries: &[(usize, usize, &[f64])],
    target_types: impl Fn(usize) -> Option<TypeSet>,
    cfg: &EvalConfig,
    baseline_seed: u64,
    mut excluded: usize,
) -> RetrievalRun {
    let pool = CandidatePool::new(g, model);
    let mut rng = ChaCha8Rng::seed_from_u64(baseline_seed);
    let mut ranks = Vec::with_capacity(queries.len());
    let mut baseline_ranks = Vec::with_capacity(queries.len());
    for &(s, t, rep) in queries {
        let (Some(vs), Some(vt)) = (node_vector(model, g, s), node_vector(model, g, t)) else {
            excluded += 1;
            continue;
        };
        let wanted = target_types(t);
        let candidates = pool.select(g, cfg.candidates, wanted.as_ref());
        let q = query_point(vs, rep);
        let rank = optimistic_rank(&q, vt, &candidates, cfg.metric);
        ranks.push(rank);
        baseline_ranks.push(shuffled_rank(&mut rng, candidates.len().max(1)));
    }
    RetrievalRun { ranks, baseline_ranks, excluded }
}

/// Entity retrieval: hold out edges per type, embed the rest, and rank the
/// true target of every held-out edge around `π(s) + π(type)`.
pub fn eval_entity_retrieval(
    g: &GeneralizedGraph,
    holdout_fraction: f64,
    sampler: &SamplerConfig,
    encoder: &TrainConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(EvalError::Config(format!("holdout fraction {holdout_fraction} outside (0, 1)")));
    }
    g.require_binary()?;

    let runs = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<RetrievalRun, EvalError> {
            let rep_seed = derive_seed(cfg.seed, rep as u64);
            let held = holdout_split(g, holdout_fraction, rep_seed)?;
            let remaining = g.without_edges(&held);
            let sampler = SamplerConfig { seed: derive_seed(sampler.seed, rep as u64), ..*sampler };
            let encoder = TrainConfig { seed: derive_seed(encoder.seed, rep as u64), ..*encoder };
            let pairs = build_training_set(&remaining, &sampler)?.pairs;
            let model = train(&pairs, &encoder)?;
            Ok(retrieval_on_holdout(g, &remaining, &held, &model, cfg, derive_seed(rep_seed, u64::MAX)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    RetrievalRun::into_report(runs)
}

fn retrieval_on_holdout(
    g: &GeneralizedGraph,
    remaining: &GeneralizedGraph,
    held: &BTreeSet<usize>,
    model: &EmbeddingModel,
    cfg: &EvalConfig,
    baseline_seed: u64,
) -> RetrievalRun {
    let mut reps: BTreeMap<&str, Option<Vec<f64>>> = BTreeMap::new();
    let mut queries = Vec::with_capacity(held.len());
    let mut excluded = 0;
    for &e in held {
        let ty = primary_type(g, e).expect("held-out edges are typed");
        let rep = reps
            .entry(ty)
            .or_insert_with(|| crate::vectors::representative_vector_edge_type(model, remaining, ty).ok());
        match rep {
            Some(_) => {
                let (s, t) = g.endpoints(e).expect("binary graph");
                queries.push((s, t, ty));
            }
            None => excluded += 1,
        }
    }
    let resolved: Vec<(usize, usize, &[f64])> =
        queries.iter().map(|&(s, t, ty)| (s, t, reps[ty].as_deref().expect("checked above"))).collect();
    retrieval_run(g, model, &resolved, |t| g.node_types(t).cloned(), cfg, baseline_seed, excluded)
}

/// Typed-path retrieval on a model trained over the full graph: for every
/// matching path, rank its true last node among nodes of the path's last type
/// around `π(first) + π(T)`.
pub fn eval_typed_path(
    g: &GeneralizedGraph,
    model: &EmbeddingModel,
    path: &TypedPath,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let instances = paths_matching(g, path)?;
    if instances.is_empty() {
        return Err(EvalError::NoMatchingPaths(path.to_string()));
    }
    let rep = path_representative(model, g, &instances).ok_or_else(|| EvalError::EmptyType(path.to_string()))?;
    let queries: Vec<(usize, usize, &[f64])> =
        instances.iter().map(|p| (p.source(), p.target(), rep.as_slice())).collect();
    let target: TypeSet = [path.target_type().to_string()].into();
    let run = retrieval_run(g, model, &queries, |_| Some(target.clone()), cfg, derive_seed(cfg.seed, u64::MAX), 0);
    RetrievalRun::into_report(vec![run])
}

/// Typed-path retrieval repeated over independently trained models.
pub fn eval_typed_path_repeated(
    g: &GeneralizedGraph,
    path: &TypedPath,
    sampler: &SamplerConfig,
    encoder: &TrainConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let parts = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let sampler = SamplerConfig { seed: derive_seed(sampler.seed, rep as u64), ..*sampler };
            let encoder = TrainConfig { seed: derive_seed(encoder.seed, rep as u64), ..*encoder };
            let model = train(&build_training_set(g, &sampler)?.pairs, &encoder)?;
            let rep_cfg = EvalConfig { seed: derive_seed(cfg.seed, rep as u64), ..*cfg };
            eval_typed_path(g, &model, path, &rep_cfg)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::merge(parts).expect("at least one repetition"))
}
