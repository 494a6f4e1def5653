//! A full declarative run: preprocess, teachers, distillation, evaluation,
//! then the per-mille summary against the student-only baseline.
//!
//! `cargo run --release --example experiment -- [config]`; defaults to
//! `configs/synthetic.conf` with a single seed.

use std::path::PathBuf;

use ctrkd::experiment::{report_table, run, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
        None => {
            let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic.conf");
            let out = std::env::temp_dir().join("ctrkd-experiment-example");
            ExperimentConfig::parse(&std::fs::read_to_string(path)?)?.with_overrides(&[
                ("experiment.seeds".into(), "1".into()),
                ("experiment.output".into(), out.display().to_string()),
            ])?
        }
    };
    let report = run(&cfg)?;
    let baseline = cfg
        .baseline
        .clone()
        .or(cfg.student.clone())
        .unwrap_or_default();
    print!("{}", report_table(&report, &baseline)?.text);
    println!("artifacts in {}", cfg.output.display());
    Ok(())
}
