use serde::{Deserialize, Serialize};

use super::{forward, init_network, loss_and_grads, Architecture, NetworkParams, Scalar};
use crate::dataset::{batch_iter, Dataset, Split, SplitPart};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied to dense weights only.
    pub l1_lambda: f64,
    pub seed: u64,
    /// Per-window RMS normalization of the inputs. Off by default.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 128,
            epochs: 35,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l1_lambda: 1e-5,
            seed: 0,
            normalize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.beta1, self.beta2, self.eps];
        if self.batch == 0
            || self.epochs == 0
            || positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::invalid("train config values must be positive"));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::invalid("Adam betas must be below 1"));
        }
        if !(self.l1_lambda >= 0.0 && self.l1_lambda.is_finite()) {
            return Err(Error::invalid("l1_lambda must be non-negative"));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: NetworkParams<T>,
    pub v: NetworkParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &NetworkParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    grads: &NetworkParams<T>,
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - T::lit(cfg.beta1.powi(t));
    let c2 = T::one() - T::lit(cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((w, g), m), v) in tensors {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Accuracy and confusion counts (rows = true class).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

const EVAL_BATCH: usize = 256;

pub fn evaluate(
    params: &NetworkParams<f32>,
    ds: &Dataset,
    split: &Split,
    part: SplitPart,
    normalize: bool,
) -> Result<Evaluation> {
    let n = params.arch.n_classes();
    if ds.n_classes() > n {
        return Err(Error::LabelRange {
            label: ds.n_classes() - 1,
            n_classes: n,
        });
    }
    if split.part(part).is_empty() {
        return Err(Error::EmptySplit(part.as_str()));
    }
    let mut confusion = vec![vec![0u64; n]; n];
    for batch in batch_iter(ds, split, part, EVAL_BATCH, 0).normalized(normalize) {
        let probs = forward(params, &batch.inputs)?;
        for (row, &label) in probs.chunks(n).zip(&batch.labels) {
            confusion[label][argmax(row)] += 1;
        }
    }
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / total as f64,
        confusion,
    })
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains from a fresh initialization; see [`train_with`].
pub fn train(
    ds: &Dataset,
    split: &Split,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(NetworkParams<f32>, Vec<EpochRecord>)> {
    train_with(ds, split, arch, cfg, |_| {})
}

/// Mini-batch Adam over the train part, reporting each epoch's mean train
/// loss and validation accuracy. Initialization and epoch shuffles derive
/// from `cfg.seed` only.
pub fn train_with(
    ds: &Dataset,
    split: &Split,
    arch: &Architecture,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkParams<f32>, Vec<EpochRecord>)> {
    cfg.validate()?;
    for part in [SplitPart::Train, SplitPart::Val] {
        if split.part(part).is_empty() {
            return Err(Error::EmptySplit(part.as_str()));
        }
    }
    if arch.n_classes() < ds.n_classes() {
        return Err(Error::LabelRange {
            label: ds.n_classes() - 1,
            n_classes: arch.n_classes(),
        });
    }
    if arch.input_len != ds.window_len() || arch.input_channels != 2 {
        return Err(Error::Shape {
            expected: ds.window_len() * 2,
            got: arch.input_size(),
        });
    }
    let mut params = init_network::<f32>(arch, derive_seed(&[cfg.seed, 0x1417]))?;
    let mut adam = AdamState::new(&params);
    let l1 = cfg.l1_lambda as f32;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let epoch_seed = derive_seed(&[cfg.seed, epoch as u64]);
        let (mut loss_sum, mut count) = (0.0f64, 0usize);
        for batch in
            batch_iter(ds, split, SplitPart::Train, cfg.batch, epoch_seed).normalized(cfg.normalize)
        {
            let (loss, grads) = loss_and_grads(&params, &batch.inputs, &batch.labels, l1)?;
            adam_step(&mut params, &grads, &mut adam, cfg);
            loss_sum += loss as f64 * batch.labels.len() as f64;
            count += batch.labels.len();
        }
        if !params.is_finite() {
            return Err(Error::invalid(format!(
                "training diverged at epoch {epoch}"
            )));
        }
        let val_acc = evaluate(&params, ds, split, SplitPart::Val, cfg.normalize)?.accuracy;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / count as f64,
            val_acc,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok((params, history))
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_acc\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            r.epoch, r.train_loss, r.val_acc
        ));
    }
    out
}
