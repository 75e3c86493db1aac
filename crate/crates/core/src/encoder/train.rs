//! SGD over the training pairs with per-pair negative sampling.
//!
//! Parameters live in `AtomicU64` cells holding `f64` bits. With one worker
//! the updates are applied in order and the result is bit-reproducible. With
//! more workers each thread takes every `workers`-th pair and writes without
//! locking (hogwild); concurrent row updates may overwrite each other, which
//! perturbs low-order bits but never the shape or finiteness of the matrices.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;

use super::objective::{cbow_gradient, Gradients};
use super::{EmbeddingModel, EncoderError, TrainConfig, Vocabulary};
use crate::sampler::TrainingPair;

/// Exponent applied to token counts for the noise distribution.
pub const NOISE_POWER: f64 = 0.75;
const DECILES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub updates: usize,
    pub mean_loss: f64,
    /// Mean loss over the first and last 10% of updates.
    pub first_decile_loss: f64,
    pub last_decile_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub stats: TrainStats,
    /// Training stopped early because the stop flag was raised.
    pub interrupted: bool,
}

struct SharedParams {
    dim: usize,
    w_in: Vec<AtomicU64>,
    w_out: Vec<AtomicU64>,
}

impl SharedParams {
    fn new(model: &EmbeddingModel) -> Self {
        let cells = |m: &[f64]| m.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        Self { dim: model.dim(), w_in: cells(model.w_in()), w_out: cells(model.w_out()) }
    }

    fn read(m: &[AtomicU64], dim: usize, r: usize, out: &mut [f64]) {
        for (o, cell) in out.iter_mut().zip(&m[r * dim..(r + 1) * dim]) {
            *o = f64::from_bits(cell.load(Ordering::Relaxed));
        }
    }

    fn apply(&self, grads: &Gradients, lr: f64) {
        for (m, rows) in [(&self.w_in, &grads.w_in), (&self.w_out, &grads.w_out)] {
            for (r, g) in rows.iter() {
                for (cell, d) in m[r * self.dim..(r + 1) * self.dim].iter().zip(g) {
                    let w = f64::from_bits(cell.load(Ordering::Relaxed));
                    cell.store((w - lr * d).to_bits(), Ordering::Relaxed);
                }
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.w_in.iter().chain(&self.w_out).all(|c| f64::from_bits(c.load(Ordering::Relaxed)).is_finite())
    }

    fn into_vecs(self) -> (Vec<f64>, Vec<f64>) {
        let plain = |m: Vec<AtomicU64>| m.into_iter().map(|c| f64::from_bits(c.into_inner())).collect();
        (plain(self.w_in), plain(self.w_out))
    }
}

/// Noise distribution proportional to `count^0.75`.
struct NoiseSampler {
    alias: Option<WeightedAliasIndex<f64>>,
}

impl NoiseSampler {
    fn new(vocab: &Vocabulary) -> Self {
        if vocab.len() < 2 {
            return Self { alias: None };
        }
        let weights = vocab.counts().iter().map(|&c| (c as f64).powf(NOISE_POWER)).collect();
        Self { alias: Some(WeightedAliasIndex::new(weights).expect("positive counts")) }
    }

    /// `k` draws, each re-drawn while it equals `center`. Empty when the
    /// vocabulary has no token other than the center.
    fn sample(&self, rng: &mut ChaCha8Rng, k: usize, center: usize, out: &mut Vec<usize>) {
        out.clear();
        let Some(alias) = &self.alias else { return };
        while out.len() < k {
            let z = alias.sample(rng);
            if z != center {
                out.push(z);
            }
        }
    }
}

fn learning_rate(cfg: &TrainConfig, update: usize, total: usize) -> f64 {
    if total <= 1 {
        return cfg.lr_start;
    }
    let progress = update.min(total - 1) as f64 / (total - 1) as f64;
    cfg.lr_start - (cfg.lr_start - cfg.lr_end) * progress
}

#[derive(Default, Clone, Copy)]
struct LossBuckets {
    sum: [f64; DECILES],
    count: [usize; DECILES],
}

impl LossBuckets {
    fn add(&mut self, update: usize, total: usize, loss: f64) {
        let b = (update * DECILES / total.max(1)).min(DECILES - 1);
        self.sum[b] += loss;
        self.count[b] += 1;
    }

    fn merge(&mut self, other: &LossBuckets) {
        for b in 0..DECILES {
            self.sum[b] += other.sum[b];
            self.count[b] += other.count[b];
        }
    }

    fn mean(&self, b: usize) -> f64 {
        if self.count[b] == 0 {
            f64::NAN
        } else {
            self.sum[b] / self.count[b] as f64
        }
    }
}

struct Encoded {
    center: usize,
    context: Vec<usize>,
}

fn encode(vocab: &Vocabulary, pairs: &[TrainingPair]) -> Result<Vec<Encoded>, EncoderError> {
    pairs
        .iter()
        .map(|p| {
            if p.context.is_empty() {
                return Err(EncoderError::Config(format!("pair with center {} has an empty context", p.center)));
            }
            Ok(Encoded {
                center: vocab.require(&p.center)?,
                context: p.context.iter().map(|t| vocab.require(t)).collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<EmbeddingModel, EncoderError> {
    train_with_control(pairs, cfg, None).map(|o| o.model)
}

/// Trains the encoder. When `stop` is raised, workers finish their current
/// update and the partially trained model is returned with `interrupted` set.
pub fn train_with_control(
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    stop: Option<&AtomicBool>,
) -> Result<TrainOutcome, EncoderError> {
    cfg.validate()?;
    let vocab = Vocabulary::build(pairs)?;
    let encoded = encode(&vocab, pairs)?;
    let noise = NoiseSampler::new(&vocab);
    let model = EmbeddingModel::initialize(vocab, cfg.dim, cfg.seed);
    let params = SharedParams::new(&model);
    let dim = cfg.dim;

    let total = encoded.len() * cfg.epochs;
    let counter = AtomicUsize::new(0);
    let stopped = || stop.is_some_and(|s| s.load(Ordering::Relaxed));

    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.workers)
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(w as u64 + 1);
            rng
        })
        .collect();
    let mut buckets = LossBuckets::default();
    let mut interrupted = false;

    let run_worker = |worker: usize, rng: &mut ChaCha8Rng| -> LossBuckets {
        let mut local = LossBuckets::default();
        let mut negs = Vec::with_capacity(cfg.negatives);
        for ex in encoded.iter().skip(worker).step_by(cfg.workers) {
            if stopped() {
                break;
            }
            let update = counter.fetch_add(1, Ordering::Relaxed);
            let lr = learning_rate(cfg, update, total);
            noise.sample(rng, cfg.negatives, ex.center, &mut negs);
            let (loss, grads) = cbow_gradient(
                dim,
                |r, out| SharedParams::read(&params.w_in, dim, r, out),
                |r, out| SharedParams::read(&params.w_out, dim, r, out),
                ex.center,
                &ex.context,
                &negs,
            );
            params.apply(&grads, lr);
            local.add(update, total, loss);
        }
        local
    };

    for epoch in 0..cfg.epochs {
        if cfg.workers == 1 {
            buckets.merge(&run_worker(0, &mut rngs[0]));
        } else {
            let parts: Vec<LossBuckets> = std::thread::scope(|s| {
                let handles: Vec<_> = rngs
                    .iter_mut()
                    .enumerate()
                    .map(|(w, rng)| {
                        let run = &run_worker;
                        s.spawn(move || run(w, rng))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
            });
            parts.iter().for_each(|p| buckets.merge(p));
        }
        if !params.all_finite() {
            return Err(EncoderError::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: {} updates", counter.load(Ordering::Relaxed));
        if stopped() {
            interrupted = true;
            break;
        }
    }

    let updates = counter.into_inner();
    let (w_in, w_out) = params.into_vecs();
    let model = EmbeddingModel { w_in, w_out, ..model };
    let stats = TrainStats {
        updates,
        mean_loss: buckets.sum.iter().sum::<f64>() / updates.max(1) as f64,
        first_decile_loss: buckets.mean(0),
        last_decile_loss: buckets.mean(DECILES - 1),
    };
    Ok(TrainOutcome { model, stats, interrupted })
}
