//! Adam, windowed minibatches and early stopping.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelParams};
use crate::preprocess::{PreprocessedSeries, MINUTES_PER_DAY};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub window_length: usize,
    /// Random windows drawn per person per epoch.
    pub windows_per_person: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            window_length: MINUTES_PER_DAY,
            windows_per_person: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.batch_size == 0 || self.patience == 0 || self.window_length == 0 || self.windows_per_person == 0 {
            return bad("batch_size, patience, window_length and windows_per_person must be >= 1");
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            expected: alloc::vec![params.len()],
            got: alloc::vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - libm::pow(b1, f64::from(t));
    let c2 = 1.0 - libm::pow(b2, f64::from(t));
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.alpha * m_hat / (libm::sqrt(v_hat) + config.epsilon);
        }
    }
    Ok(())
}

/// Random contiguous windows, shuffled and grouped into batches.
///
/// Draws `windows_per_person` windows per person; windows without any
/// observed heart-rate minute are dropped. Deterministic in `(seed, epoch)`.
pub fn make_batches(
    persons: &[PreprocessedSeries],
    config: &TrainConfig,
    epoch: usize,
) -> Result<Vec<Vec<PreprocessedSeries>>> {
    let len = config.window_length;
    if let Some(p) = persons.iter().find(|p| p.len() < len) {
        return Err(Error::SeriesTooShort { len: p.len(), window: len });
    }
    let mut r = rng::stream(config.seed, &[rng::TAG_BATCH, epoch as u64]);
    let mut windows = Vec::with_capacity(persons.len() * config.windows_per_person);
    for p in persons {
        for _ in 0..config.windows_per_person {
            let start = r.random_range(0..=p.len() - len);
            let w = p.window(start, len)?;
            if w.observed() > 0 {
                windows.push(w);
            }
        }
    }
    windows.shuffle(&mut r);
    let mut batches = Vec::new();
    let mut it = windows.into_iter().peekable();
    while it.peek().is_some() {
        batches.push(it.by_ref().take(config.batch_size).collect());
    }
    Ok(batches)
}

/// Counts epochs without strict improvement of the tuning loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            seen: 0,
        }
    }

    /// Records the next epoch's loss; returns `true` once training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        self.seen += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = self.seen;
        }
        self.seen - self.best_epoch >= self.patience
    }

    pub fn improved_last(&self) -> bool {
        self.best_epoch == self.seen
    }

    /// 1-based epoch with the lowest loss so far (0 before any update).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub tune_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best_tune_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].tune_loss
    }
}

/// Unweighted mean over persons of each person's masked MSE on the full series.
pub fn eval_split(params: &ModelParams, persons: &[PreprocessedSeries]) -> Result<f64> {
    if persons.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut total = 0.0;
    for p in persons {
        total += model::forward_loss(params, p)?.value();
    }
    Ok(total / persons.len() as f64)
}

/// Mean loss and mean gradient over one batch.
pub fn batch_gradients(params: &ModelParams, batch: &[PreprocessedSeries]) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::NoSamples);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut acc: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for member in batch {
        let (l, grads) = model::forward_loss(params, member)?.gradients()?;
        loss += l * scale;
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (a, g) in a.data_mut().iter_mut().zip(g.data()) {
                *a += g * scale;
            }
        }
    }
    Ok((loss, acc))
}

/// [`train_with`] without a progress callback.
pub fn train(
    init: ModelParams,
    train_set: &[PreprocessedSeries],
    tune_set: &[PreprocessedSeries],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    train_with(init, train_set, tune_set, config, |_| {})
}

/// Trains until the tuning loss stalls for `patience` epochs or
/// `max_epochs` is reached, and returns the best-epoch parameters.
pub fn train_with<F>(
    init: ModelParams,
    train_set: &[PreprocessedSeries],
    tune_set: &[PreprocessedSeries],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ModelParams, TrainHistory)>
where
    F: FnMut(&EpochRecord),
{
    config.validate()?;
    if train_set.is_empty() || tune_set.is_empty() {
        return Err(Error::NoSamples);
    }
    if config.max_epochs == 0 {
        return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
    }
    let mut params = init;
    let mut best = params.clone();
    let mut state = AdamState::new(&params.tensors);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let batches = make_batches(train_set, config, epoch)?;
        let mut loss_sum = 0.0;
        let mut members = 0;
        for batch in &batches {
            let (loss, grads) = batch_gradients(&params, batch)?;
            adam_step(&mut params.tensors, &grads, &mut state, config)?;
            loss_sum += loss * batch.len() as f64;
            members += batch.len();
        }
        let record = EpochRecord {
            epoch,
            train_loss: if members > 0 { loss_sum / members as f64 } else { f64::NAN },
            tune_loss: eval_split(&params, tune_set)?,
        };
        on_epoch(&record);
        let stop = stopper.update(record.tune_loss);
        if stopper.improved_last() {
            best = params.clone();
        }
        epochs.push(record);
        if stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let best_epoch = stopper.best_epoch().max(1);
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            stop_reason,
        },
    ))
}
