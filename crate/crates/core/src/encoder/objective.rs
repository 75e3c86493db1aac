use super::{EmbeddingModel, EncoderError};
use crate::sampler::TrainingPair;

/// Gradient rows for one matrix: `rows[i]` owns `values[i*dim..(i+1)*dim]`.
/// Rows are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub dim: usize,
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRows {
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().copied().zip(self.values.chunks_exact(self.dim))
    }

    pub fn row(&self, r: usize) -> Option<&[f64]> {
        self.rows.binary_search(&r).ok().map(|i| &self.values[i * self.dim..(i + 1) * self.dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_in: SparseRows,
    pub w_out: SparseRows,
}

/// `-log(sigmoid(x))`, stable for large `|x|`.
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sorted unique values with their multiplicities.
pub(crate) fn multiplicities(idx: &[usize]) -> Vec<(usize, usize)> {
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(sorted.len());
    for i in sorted {
        match out.last_mut() {
            Some((last, m)) if *last == i => *m += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}

/// Loss and exact gradient for one example, given row readers for both
/// matrices. Shared by the public entry point and the trainer so that both
/// produce bit-identical updates.
pub(crate) fn cbow_gradient<I, O>(
    dim: usize,
    read_in: I,
    read_out: O,
    center: usize,
    context: &[usize],
    negatives: &[usize],
) -> (f64, Gradients)
where
    I: Fn(usize, &mut [f64]),
    O: Fn(usize, &mut [f64]),
{
    let mut row = vec![0.0; dim];
    let mut h = vec![0.0; dim];
    for &c in context {
        read_in(c, &mut row);
        for (acc, x) in h.iter_mut().zip(&row) {
            *acc += x;
        }
    }
    let ws = context.len() as f64;
    for x in h.iter_mut() {
        *x /= ws;
    }

    // (row, coefficient) for every scored output row; d loss / d score
    let mut scored = Vec::with_capacity(1 + negatives.len());
    let mut dh = vec![0.0; dim];
    let mut loss = 0.0;
    for (k, &target) in std::iter::once(&center).chain(negatives).enumerate() {
        read_out(target, &mut row);
        let s = dot(&row, &h);
        let coeff = if k == 0 {
            loss += neg_log_sigmoid(s);
            sigmoid(s) - 1.0
        } else {
            loss += neg_log_sigmoid(-s);
            sigmoid(s)
        };
        for (d, u) in dh.iter_mut().zip(&row) {
            *d += coeff * u;
        }
        scored.push((target, coeff));
    }

    let w_out = {
        let mut coeff_by_row: Vec<(usize, f64)> = Vec::with_capacity(scored.len());
        let mut sorted = scored;
        sorted.sort_by_key(|&(r, _)| r);
        for (r, c) in sorted {
            match coeff_by_row.last_mut() {
                Some((last, acc)) if *last == r => *acc += c,
                _ => coeff_by_row.push((r, c)),
            }
        }
        let mut values = Vec::with_capacity(coeff_by_row.len() * dim);
        for &(_, c) in &coeff_by_row {
            values.extend(h.iter().map(|x| c * x));
        }
        SparseRows { dim, rows: coeff_by_row.into_iter().map(|(r, _)| r).collect(), values }
    };

    let w_in = {
        let mult = multiplicities(context);
        let mut values = Vec::with_capacity(mult.len() * dim);
        for &(_, m) in &mult {
            let scale = m as f64 / ws;
            values.extend(dh.iter().map(|d| scale * d));
        }
        SparseRows { dim, rows: mult.into_iter().map(|(r, _)| r).collect(), values }
    };

    (loss, Gradients { w_in, w_out })
}

fn check_index(model: &EmbeddingModel, i: usize) -> Result<usize, EncoderError> {
    if i < model.vocab().len() {
        Ok(i)
    } else {
        Err(EncoderError::IndexOutOfRange(i))
    }
}

/// Negative-sampling CBOW loss
/// `-log s(u_c . h) - sum_j log s(-u_j . h)` with `h` the mean input row of
/// the context, and its analytic gradient as sparse row updates.
pub fn loss_and_grad(
    model: &EmbeddingModel,
    pair: &TrainingPair,
    negatives: &[usize],
) -> Result<(f64, Gradients), EncoderError> {
    if pair.context.is_empty() {
        return Err(EncoderError::Config("context must not be empty".into()));
    }
    let center = model.vocab().require(&pair.center)?;
    let context = pair.context.iter().map(|t| model.vocab().require(t)).collect::<Result<Vec<_>, _>>()?;
    for &n in negatives {
        check_index(model, n)?;
        if n == center {
            return Err(EncoderError::NegativeIsCenter(n));
        }
    }
    let dim = model.dim();
    Ok(cbow_gradient(
        dim,
        |r, out| out.copy_from_slice(model.in_row(r)),
        |r, out| out.copy_from_slice(model.out_row(r)),
        center,
        &context,
        negatives,
    ))
}

/// One SGD step: `w <- w - lr * grad` on every touched row.
pub fn apply_gradients(model: &mut EmbeddingModel, grads: &Gradients, lr: f64) {
    let dim = model.dim();
    for (r, g) in grads.w_in.iter() {
        for (w, d) in model.w_in_mut()[r * dim..(r + 1) * dim].iter_mut().zip(g) {
            *w -= lr * d;
        }
    }
    for (r, g) in grads.w_out.iter() {
        for (w, d) in model.w_out_mut()[r * dim..(r + 1) * dim].iter_mut().zip(g) {
            *w -= lr * d;
        }
    }
}
