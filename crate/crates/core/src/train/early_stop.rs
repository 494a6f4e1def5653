use crate::error::{Error, Result};

/// Epochs without improvement after which training stops.
pub const PATIENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorMode {
    /// Validation AUC, higher is better.
    ValAucMax,
    /// Distillation loss on unlabeled inputs, lower is better.
    KdLossMin,
}

impl MonitorMode {
    pub fn name(self) -> &'static str {
        match self {
            MonitorMode::ValAucMax => "val_auc",
            MonitorMode::KdLossMin => "kd_loss",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "val_auc" => Ok(MonitorMode::ValAucMax),
            "kd_loss" => Ok(MonitorMode::KdLossMin),
            _ => Err(Error::invalid(format!("unknown monitor `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Patience counter over one scalar per epoch. Only strict improvements
/// reset it; a non-finite value never counts as one.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopMonitor {
    mode: MonitorMode,
    patience: usize,
    best: Option<f64>,
    best_epoch: Option<usize>,
    since_best: usize,
    epochs: usize,
    improved: bool,
}

impl EarlyStopMonitor {
    pub fn new(mode: MonitorMode) -> Self {
        Self::with_patience(mode, PATIENCE)
    }

    pub fn with_patience(mode: MonitorMode, patience: usize) -> Self {
        EarlyStopMonitor {
            mode,
            patience: patience.max(1),
            best: None,
            best_epoch: None,
            since_best: 0,
            epochs: 0,
            improved: false,
        }
    }

    pub fn observe(&mut self, value: f64) -> Decision {
        let epoch = self.epochs;
        self.epochs += 1;
        let better = value.is_finite()
            && match (self.best, self.mode) {
                (None, _) => true,
                (Some(b), MonitorMode::ValAucMax) => value > b,
                (Some(b), MonitorMode::KdLossMin) => value < b,
            };
        self.improved = better;
        if better {
            self.best = Some(value);
            self.best_epoch = Some(epoch);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        if self.since_best >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    pub fn mode(&self) -> MonitorMode {
        self.mode
    }

    /// Whether the latest observation became the new best.
    pub fn improved(&self) -> bool {
        self.improved
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn since_best(&self) -> usize {
        self.since_best
    }
}
