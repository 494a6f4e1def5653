use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::{
    auc, plan_epoch, stream, Adam, Decision, EarlyStopMonitor, EpochRecord, MonitorMode,
    TrainConfig, TrainRecord, DROPOUT_STREAM, SHUFFLE_STREAM,
};
use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ModelSpec};
use crate::tensor::{ParamStore, Tape};

/// A model together with its optimizer and dropout stream; one
/// [`Learner::step`] is one Adam update on BCE plus the embedding penalty.
#[derive(Debug, Clone)]
pub struct Learner {
    pub(super) model: Model,
    pub(super) adam: Adam,
    pub(super) dropout: ChaCha8Rng,
    pub(super) l2: f64,
}

impl Learner {
    pub fn new(model: Model, cfg: &TrainConfig) -> Self {
        let adam = Adam::new(model.params(), cfg.adam);
        Learner {
            model,
            adam,
            dropout: stream(cfg.seed, DROPOUT_STREAM),
            l2: cfg.l2,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn into_parts(self) -> (Model, Adam) {
        (self.model, self.adam)
    }

    pub(crate) fn restore(&mut self, snapshot: &ParamStore) -> Result<()> {
        self.model.load_params(snapshot)
    }

    /// Returns the batch's mean BCE before the update.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let labels = batch.labels()?.to_vec();
        let (loss, grads, binding) = {
            let mut tape = Tape::new();
            let out = self
                .model
                .forward(&mut tape, batch, Mode::Training(&mut self.dropout))?;
            let probs = tape.sigmoid(out.logit);
            let loss = tape.bce(probs, labels)?;
            let grads = tape.backward(loss)?;
            (tape.value(loss)[0], grads, out.binding)
        };
        let params = self.model.params_mut();
        params.accumulate(&binding, &grads)?;
        params.apply_l2(self.l2);
        self.adam.step(params)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best monitored epoch.
    pub model: Model,
    pub record: TrainRecord,
    pub best_epoch: Option<usize>,
    /// Optimizer state after the last epoch run.
    pub adam: Adam,
}

/// Trains a freshly initialized model (seeded by `cfg.seed`) on BCE with
/// validation-AUC early stopping.
pub fn train_teacher(
    spec: &ModelSpec,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = Model::new(spec.clone(), train.layout().clone(), cfg.seed)?;
    fit_supervised(model, train, val, cfg)
}

pub(crate) fn diverged(epoch: usize, detail: impl Into<String>) -> Error {
    Error::Diverged {
        epoch,
        detail: detail.into(),
    }
}

/// Supervised training of an already built model.
pub fn fit_supervised(
    model: Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.layout() != train.layout() || val.layout() != train.layout() {
        return Err(Error::invalid(
            "model and datasets disagree on the feature layout",
        ));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::data(
            "training and validation sets must be non-empty",
        ));
    }
    let mut learner = Learner::new(model, cfg);
    let mut order = stream(cfg.seed, SHUFFLE_STREAM);
    let mut monitor = EarlyStopMonitor::with_patience(MonitorMode::ValAucMax, cfg.patience);
    let mut best = learner.model().params().clone();
    let mut record = TrainRecord::default();
    let val_labels = val.labels().to_vec();
    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let plan = plan_epoch(train.len(), &mut order, 0);
        let mut total = 0.0;
        for (step, rows) in plan.train.chunks(cfg.batch_size).enumerate() {
            let loss = learner.step(&train.batch(rows, true))?;
            if !loss.is_finite() {
                return Err(diverged(epoch, format!("loss {loss} at step {step}")));
            }
            total += loss * rows.len() as f64;
        }
        if !learner.model().params().all_finite() {
            return Err(diverged(epoch, "non-finite parameters"));
        }
        let scores = learner.model().predict_dataset(val)?;
        let value = auc(&scores, &val_labels)?;
        let decision = monitor.observe(value);
        if monitor.improved() {
            best = learner.model().params().clone();
        }
        record.push(EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            monitor_value: value,
            seconds: start.elapsed().as_secs_f64(),
            stopped: decision == Decision::Stop,
        })?;
        if decision == Decision::Stop {
            break;
        }
    }
    learner.restore(&best)?;
    let (model, adam) = learner.into_parts();
    Ok(TrainOutcome {
        model,
        record,
        best_epoch: monitor.best_epoch(),
        adam,
    })
}
