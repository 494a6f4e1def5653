//! Knowledge-distillation losses, the teacher gate, and their configuration.
//!
//! The student minimizes `gamma * CE(y, y_S) + beta * KD`, where `KD` is
//! either the temperature-softened cross-entropy against the teacher's soft
//! label or a regression of the student's hidden vector onto a linear
//! projection of the teacher's. Several teachers are merged in logit space,
//! optionally through a learned per-sample softmax gate.

mod gate;
mod loss;

pub use gate::{HintProjector, TeacherGate};
pub use loss::{
    bce_loss, cross_entropy, ensemble_teacher_logit, gate_weights, hint_loss, soft_label_loss,
    soften, softmax, student_loss, tape_gate, tape_hint, tape_hint_per_sample, tape_soft_label,
    tape_soft_label_var, tape_student_loss,
};

use crate::error::{Error, Result};
use crate::train::MonitorMode;

/// Upper bound on `beta` for hint regression.
pub const HINT_BETA_MAX: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdMethod {
    SoftLabel { tau: f64 },
    Hint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Teachers are trained first and frozen.
    Pretrain,
    /// One teacher trains alongside the student on the same batches.
    Cotrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub method: KdMethod,
    pub beta: f64,
    pub gamma: f64,
    pub scheme: Scheme,
    pub gating: bool,
    pub monitor: MonitorMode,
    /// Share of training inputs held aside each epoch to measure the KD loss
    /// when `monitor` is [`MonitorMode::KdLossMin`].
    pub monitor_fraction: f64,
}

/// Keys accepted by [`DistillConfig::from_entries`].
pub const DISTILL_KEYS: [&str; 8] = [
    "method",
    "tau",
    "beta",
    "gamma",
    "scheme",
    "gating",
    "monitor",
    "monitor_fraction",
];

impl Default for DistillConfig {
    fn default() -> Self {
        Self::soft_label(1.0, 0.5)
    }
}

impl DistillConfig {
    /// Soft-label distillation with `gamma = 1 - beta`.
    pub fn soft_label(tau: f64, beta: f64) -> Self {
        DistillConfig {
            method: KdMethod::SoftLabel { tau },
            beta,
            gamma: 1.0 - beta,
            scheme: Scheme::Pretrain,
            gating: false,
            monitor: MonitorMode::KdLossMin,
            monitor_fraction: 0.1,
        }
    }

    pub fn hint(beta: f64) -> Self {
        DistillConfig {
            method: KdMethod::Hint,
            beta,
            gamma: 1.0,
            ..Self::soft_label(1.0, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            KdMethod::SoftLabel { tau } => {
                if !(tau >= 1.0 && tau.is_finite()) {
                    return Err(Error::invalid(format!("temperature {tau} must be >= 1")));
                }
                if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.gamma) {
                    return Err(Error::invalid(
                        "soft-label beta and gamma must lie in [0, 1]",
                    ));
                }
                if (self.beta + self.gamma - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "soft-label weights must sum to 1, got beta {} + gamma {}",
                        self.beta, self.gamma
                    )));
                }
            }
            KdMethod::Hint => {
                if self.gamma != 1.0 {
                    return Err(Error::invalid("hint regression fixes gamma = 1"));
                }
                if !(0.0..=HINT_BETA_MAX).contains(&self.beta) {
                    return Err(Error::invalid(format!(
                        "hint beta {} outside [0, {HINT_BETA_MAX}]",
                        self.beta
                    )));
                }
            }
        }
        if !(self.monitor_fraction > 0.0 && self.monitor_fraction < 1.0) {
            return Err(Error::invalid("monitor_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn to_entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self.method {
            KdMethod::SoftLabel { tau } => {
                out.push(("method", "soft_label".to_string()));
                out.push(("tau", tau.to_string()));
            }
            KdMethod::Hint => out.push(("method", "hint".to_string())),
        }
        out.push(("beta", self.beta.to_string()));
        out.push(("gamma", self.gamma.to_string()));
        let scheme = match self.scheme {
            Scheme::Pretrain => "pretrain",
            Scheme::Cotrain => "cotrain",
        };
        out.push(("scheme", scheme.to_string()));
        out.push(("gating", self.gating.to_string()));
        out.push(("monitor", self.monitor.name().to_string()));
        out.push(("monitor_fraction", self.monitor_fraction.to_string()));
        out
    }

    /// Inverse of [`Self::to_entries`]. Missing keys keep their defaults,
    /// except that an absent `gamma` follows the method: `1 - beta` for soft
    /// labels, 1 for hints. Unknown keys are rejected.
    pub fn from_entries<'k>(entries: impl IntoIterator<Item = (&'k str, &'k str)>) -> Result<Self> {
        let mut cfg = DistillConfig::default();
        let mut method = "soft_label";
        let mut tau = 1.0;
        let mut gamma = None;
        let num = |k: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::invalid(format!("bad number for {k}: `{v}`")))
        };
        for (k, v) in entries {
            let v = v.trim();
            match k {
                "method" => {
                    method = match v {
                        "soft_label" => "soft_label",
                        "hint" => "hint",
                        _ => return Err(Error::invalid(format!("unknown method `{v}`"))),
                    }
                }
                "tau" => tau = num(k, v)?,
                "beta" => cfg.beta = num(k, v)?,
                "gamma" => gamma = Some(num(k, v)?),
                "scheme" => {
                    cfg.scheme = match v {
                        "pretrain" => Scheme::Pretrain,
                        "cotrain" => Scheme::Cotrain,
                        _ => return Err(Error::invalid(format!("unknown scheme `{v}`"))),
                    }
                }
                "gating" => {
                    cfg.gating = v.parse().map_err(|_| {
                        Error::invalid(format!("gating must be true or false, got `{v}`"))
                    })?
                }
                "monitor" => cfg.monitor = MonitorMode::from_name(v)?,
                "monitor_fraction" => cfg.monitor_fraction = num(k, v)?,
                other => return Err(Error::invalid(format!("unknown distill key `{other}`"))),
            }
        }
        cfg.method = match method {
            "hint" => KdMethod::Hint,
            _ => KdMethod::SoftLabel { tau },
        };
        cfg.gamma = gamma.unwrap_or(match cfg.method {
            KdMethod::SoftLabel { .. } => 1.0 - cfg.beta,
            KdMethod::Hint => 1.0,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}
