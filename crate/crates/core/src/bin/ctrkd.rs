use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctrkd::experiment::{
    make_ensemble, report_table, run_stages, ExperimentConfig, ExperimentReport, Stage,
};

/// Distillation experiments for CTR models.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Experiment config file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set experiment.seeds=1,2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Build the vocabulary and splits, write their summary.
    Preprocess,
    /// Train teachers (all configured, or just `--model`).
    TrainTeacher {
        #[arg(long)]
        model: Option<String>,
    },
    /// Train the configured teacher ensemble and list its checkpoints.
    MakeEnsemble,
    /// Train the student-only baseline and the distilled student.
    Distill,
    /// Score every checkpoint on the test split and write the report.
    Evaluate,
    /// Print the summary table of an existing report.
    Report {
        #[arg(long)]
        baseline: Option<String>,
    },
    /// All stages in order.
    Run,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, String> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{s}`"))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let path = cli.config.ok_or("--config is required")?;
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut overrides = parse_overrides(&cli.overrides)?;
    if let Verb::TrainTeacher { model: Some(m) } = &cli.verb {
        overrides.push(("experiment.teachers".into(), m.clone()));
    }
    let cfg = ExperimentConfig::parse(&text)?.with_overrides(&overrides)?;

    let stages: &[Stage] = match cli.verb {
        Verb::Preprocess => &[Stage::Preprocess],
        Verb::TrainTeacher { .. } => &[Stage::Teachers],
        Verb::MakeEnsemble => {
            for p in make_ensemble(&cfg)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        Verb::Distill => &[Stage::Distill],
        Verb::Evaluate => &[Stage::Evaluate],
        Verb::Run => &Stage::ALL,
        Verb::Report { baseline } => {
            let report = ExperimentReport::read_csv(&cfg.output.join("report.csv"))?;
            let base = baseline
                .or(cfg.baseline.clone())
                .or(cfg.student.clone())
                .ok_or("no baseline: pass --baseline or set experiment.baseline")?;
            print!("{}", report_table(&report, &base)?.text);
            return Ok(());
        }
    };
    let report = run_stages(&cfg, stages)?;
    if !report.rows.is_empty() {
        if let Some(base) = cfg.baseline.as_deref().or(cfg.student.as_deref()) {
            print!("{}", report_table(&report, base)?.text);
        }
    }
    Ok(())
}
