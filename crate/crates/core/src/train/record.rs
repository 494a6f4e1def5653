use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective over the epoch's batches.
    pub loss: f64,
    pub monitor_value: f64,
    pub seconds: f64,
    pub stopped: bool,
}

/// Per-epoch log of one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainRecord {
    epochs: Vec<EpochRecord>,
}

pub const RECORD_HEADER: [&str; 5] = ["epoch", "loss", "monitor_value", "seconds", "stopped"];

impl TrainRecord {
    pub fn push(&mut self, rec: EpochRecord) -> Result<()> {
        if let Some(last) = self.epochs.last() {
            if rec.epoch <= last.epoch {
                return Err(Error::invalid(format!(
                    "epoch {} recorded after epoch {}",
                    rec.epoch, last.epoch
                )));
            }
        }
        self.epochs.push(rec);
        Ok(())
    }

    pub fn epochs(&self) -> &[EpochRecord] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    /// Equality of everything except wall time.
    pub fn same_trajectory(&self, other: &TrainRecord) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.monitor_value.to_bits() == b.monitor_value.to_bits()
                    && a.stopped == b.stopped
            })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RECORD_HEADER)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss.to_string(),
                e.monitor_value.to_string(),
                format!("{:.3}", e.seconds),
                e.stopped.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}
