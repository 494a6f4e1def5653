//! Optimization: Adam, early stopping, metrics, and the teacher and student
//! training loops.
//!
//! Every run is a pure function of its seed. One seed drives three
//! independent ChaCha streams: parameter initialization, per-epoch sample
//! order, and dropout masks.

mod adam;
mod early_stop;
pub mod grid;
mod metrics;
mod record;
mod student;
mod supervised;

pub use adam::{Adam, AdamConfig};
pub use early_stop::{Decision, EarlyStopMonitor, MonitorMode, PATIENCE};
pub use metrics::{auc, logloss};
pub use record::{EpochRecord, TrainRecord, RECORD_HEADER};
pub use student::{
    train_student_cotrain, train_student_pretrain, CotrainOutcome, StudentData, StudentOutcome,
};
pub use supervised::{fit_supervised, train_teacher, Learner, TrainOutcome};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hard cap on epochs behind early stopping.
pub const EPOCH_CAP: usize = 100;

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const PROJECTOR_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Weight of the squared L2 penalty on embedding tables.
    pub l2: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// Keys accepted by [`TrainConfig::from_entries`].
pub const TRAIN_KEYS: [&str; 8] = [
    "batch_size",
    "max_epochs",
    "patience",
    "l2",
    "lr",
    "beta1",
    "beta2",
    "eps",
];

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2000,
            max_epochs: EPOCH_CAP,
            patience: PATIENCE,
            l2: 0.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.max_epochs > EPOCH_CAP {
            return Err(Error::invalid(format!(
                "max_epochs above the cap of {EPOCH_CAP}"
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("l2 must be a finite non-negative number"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.eps > 0.0)
        {
            return Err(Error::invalid("Adam hyperparameters out of range"));
        }
        Ok(())
    }

    /// Every field except the seed, which experiments set per run.
    pub fn to_entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("l2", self.l2.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("eps", self.adam.eps.to_string()),
        ]
    }

    pub fn from_entries<'k>(entries: impl IntoIterator<Item = (&'k str, &'k str)>) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (k, v) in entries {
            let v = v.trim();
            let bad = || Error::invalid(format!("bad value for {k}: `{v}`"));
            match k {
                "batch_size" => c.batch_size = v.parse().map_err(|_| bad())?,
                "max_epochs" => c.max_epochs = v.parse().map_err(|_| bad())?,
                "patience" => c.patience = v.parse().map_err(|_| bad())?,
                "l2" => c.l2 = v.parse().map_err(|_| bad())?,
                "lr" => c.adam.lr = v.parse().map_err(|_| bad())?,
                "beta1" => c.adam.beta1 = v.parse().map_err(|_| bad())?,
                "beta2" => c.adam.beta2 = v.parse().map_err(|_| bad())?,
                "eps" => c.adam.eps = v.parse().map_err(|_| bad())?,
                other => return Err(Error::invalid(format!("unknown train key `{other}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One epoch's sample order. The first `holdout` rows of a fresh
/// permutation form the monitor slice; the rest are trained on.
pub(crate) struct EpochPlan {
    pub monitor: Vec<usize>,
    pub train: Vec<usize>,
}

pub(crate) fn plan_epoch(n: usize, rng: &mut ChaCha8Rng, holdout: usize) -> EpochPlan {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let train = idx.split_off(holdout.min(n));
    EpochPlan {
        monitor: idx,
        train,
    }
}
