//! Per-model, per-seed result rows and the ‰ delta table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const HEADER: [&str; 6] = ["model", "seed", "auc", "logloss", "best_epoch", "seconds"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub seed: u64,
    pub auc: f64,
    pub logloss: f64,
    /// `None` for rows that were not trained (e.g. a teacher average).
    pub best_epoch: Option<usize>,
    pub seconds: f64,
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for n = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub model: String,
    pub seeds: usize,
    pub auc: Stat,
    pub logloss: Stat,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Model names in first-appearance order.
    pub fn models(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.model.as_str()) {
                out.push(&r.model);
            }
        }
        out
    }

    pub fn rows_for<'s>(&'s self, model: &'s str) -> impl Iterator<Item = &'s ReportRow> + 's {
        self.rows.iter().filter(move |r| r.model == model)
    }

    /// One aggregate per model, in first-appearance order.
    pub fn aggregate(&self) -> Vec<Aggregate> {
        self.models()
            .into_iter()
            .map(|m| {
                let auc: Vec<f64> = self.rows_for(m).map(|r| r.auc).collect();
                let ll: Vec<f64> = self.rows_for(m).map(|r| r.logloss).collect();
                Aggregate {
                    model: m.to_string(),
                    seeds: auc.len(),
                    auc: Stat::of(&auc),
                    logloss: Stat::of(&ll),
                }
            })
            .collect()
    }

    /// Equality on everything except wall time.
    pub fn same_values(&self, other: &ExperimentReport) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.model == b.model
                    && a.seed == b.seed
                    && a.auc.to_bits() == b.auc.to_bits()
                    && a.logloss.to_bits() == b.logloss.to_bits()
                    && a.best_epoch == b.best_epoch
            })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.seed.to_string(),
                r.auc.to_string(),
                r.logloss.to_string(),
                r.best_epoch.map_or(String::new(), |e| e.to_string()),
                format!("{:.3}", r.seconds),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        if r.headers()?.iter().ne(HEADER) {
            return Err(Error::data("report header does not match"));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::data(format!("bad number `{}` in report", field(i))))
            };
            rows.push(ReportRow {
                model: field(0).to_string(),
                seed: field(1)
                    .parse()
                    .map_err(|_| Error::data(format!("bad seed `{}` in report", field(1))))?,
                auc: num(2)?,
                logloss: num(3)?,
                best_epoch: match field(4) {
                    "" => None,
                    e => Some(
                        e.parse()
                            .map_err(|_| Error::data(format!("bad epoch `{e}`")))?,
                    ),
                },
                seconds: num(5)?,
            });
        }
        Ok(ExperimentReport { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_csv(&text)
    }
}

/// Difference in per-mille: `(candidate - baseline) * 1000`.
pub fn per_mille(candidate: f64, baseline: f64) -> f64 {
    (candidate - baseline) * 1000.0
}

pub fn format_per_mille(delta: f64) -> String {
    // Avoid printing "-0.0" for deltas that round to zero.
    let rounded = (delta * 10.0).round() / 10.0;
    if rounded == 0.0 {
        "+0.0‰".into()
    } else {
        format!("{rounded:+.1}‰")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub text: String,
    pub csv: String,
}

/// Aggregated table with AUC and logloss deltas against `baseline`.
pub fn report_table(report: &ExperimentReport, baseline: &str) -> Result<ReportTable> {
    let aggs = report.aggregate();
    let base = aggs
        .iter()
        .find(|a| a.model == baseline)
        .ok_or_else(|| Error::invalid(format!("baseline `{baseline}` is not in the report")))?;
    let header = [
        "model",
        "seeds",
        "auc_mean",
        "auc_std",
        "logloss_mean",
        "logloss_std",
        "auc_delta",
        "logloss_delta",
    ];
    let mut cells: Vec<Vec<String>> = Vec::new();
    for a in &aggs {
        cells.push(vec![
            a.model.clone(),
            a.seeds.to_string(),
            format!("{:.4}", a.auc.mean),
            format!("{:.4}", a.auc.std),
            format!("{:.4}", a.logloss.mean),
            format!("{:.4}", a.logloss.std),
            format_per_mille(per_mille(a.auc.mean, base.auc.mean)),
            format_per_mille(per_mille(a.logloss.mean, base.logloss.mean)),
        ]);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in &cells {
        w.write_record(row)?;
    }
    let csv =
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8");

    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut text = String::new();
    let mut line = |row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(text, "{}", parts.join("  ").trim_end());
    };
    line(&header.map(String::from));
    line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>());
    for row in &cells {
        line(row);
    }
    let _ = writeln!(
        text,
        "baseline: {baseline}; deltas are (model - baseline) x 1000"
    );
    Ok(ReportTable { text, csv })
}

/// Groups the aggregates by model name, handy for assertions.
pub fn aggregate_map(report: &ExperimentReport) -> BTreeMap<String, Aggregate> {
    report
        .aggregate()
        .into_iter()
        .map(|a| (a.model.clone(), a))
        .collect()
}
