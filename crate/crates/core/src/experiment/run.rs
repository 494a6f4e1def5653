//! Stage orchestration: preprocess, teachers, distill, evaluate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{AverageMode, DataSource, EnsembleMode, ExperimentConfig};
use super::report::{report_table, ExperimentReport, ReportRow};
use crate::data::synthetic::generate;
use crate::data::{k_folds, prepare, read_rows, CollapseStats, Dataset, FeatureVocabulary};
use crate::distill::Scheme;
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::persist::Checkpoint;
use crate::train::{
    auc, logloss, train_student_cotrain, train_student_pretrain, train_teacher, MonitorMode,
    StudentData, TrainConfig, TrainRecord,
};

/// Worker-count override for the per-seed pool.
pub const WORKERS_ENV: &str = "CTRKD_WORKERS";

/// Name of the row scoring the teachers without distillation.
pub const TEACHER_AVERAGE: &str = "teachers-avg";

const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Preprocess,
    Teachers,
    Distill,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Preprocess,
        Stage::Teachers,
        Stage::Distill,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Teachers => "teachers",
            Stage::Distill => "distill",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Encoded train / validation / test partitions of the configured source.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Present for file sources.
    pub vocab: Option<FeatureVocabulary>,
    pub collapse: Vec<CollapseStats>,
    /// SHA-256 of the raw input file, hex.
    pub input_sha256: Option<String>,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.data.source {
            DataSource::Synthetic(s) => {
                let (all, _) = generate(s)?;
                let parts = cfg.data.split.apply(all.len(), None)?;
                Ok(ExperimentData {
                    train: all.subset(&parts.train),
                    val: all.subset(&parts.val),
                    test: all.subset(&parts.test),
                    vocab: None,
                    collapse: Vec::new(),
                    input_sha256: None,
                })
            }
            DataSource::File { path, .. } => {
                let schema = cfg.data.source.schema()?.expect("file source has a schema");
                let raw = fs::read(path).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
                    _ => Error::Io(e),
                })?;
                let rows = read_rows(path, &schema)?;
                let p = prepare(&rows, &schema, &cfg.data.split, cfg.data.min_count)?;
                Ok(ExperimentData {
                    train: p.train,
                    val: p.val,
                    test: p.test,
                    vocab: Some(p.vocab),
                    collapse: p.collapse,
                    input_sha256: Some(hex(&Sha256::digest(&raw))),
                })
            }
        }
    }

    fn fingerprint(&self) -> Option<u64> {
        self.vocab.as_ref().map(FeatureVocabulary::fingerprint)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One teacher to train for one seed.
#[derive(Debug, Clone)]
pub struct TeacherJob {
    pub name: String,
    pub spec: ModelSpec,
    pub seed: u64,
    /// Rows of train ∪ val used for training and validation (mode D only).
    pub partition: Option<(Vec<usize>, Vec<usize>)>,
}

/// Seed of the `i`-th teacher under experiment seed `s`.
pub fn teacher_seed(s: u64, i: usize) -> u64 {
    s.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Train / validation row lists over a pool of `n` rows: partition `k`
/// validates on fold `k` and trains on the remaining folds.
pub fn ensemble_partitions(
    n: usize,
    partitions: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let folds = k_folds(n, partitions, seed)?;
    Ok((0..partitions)
        .map(|k| {
            let train = folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            (train, folds[k].clone())
        })
        .collect())
}

pub fn teacher_jobs(cfg: &ExperimentConfig, s: u64, pool_len: usize) -> Result<Vec<TeacherJob>> {
    let spec = |name: &str| cfg.models[name].clone();
    let mut jobs = Vec::new();
    match cfg.ensemble.mode {
        EnsembleMode::Models => {
            for name in &cfg.teachers {
                for c in 0..cfg.ensemble.copies {
                    let label = if cfg.ensemble.copies > 1 {
                        format!("{name}#{c}")
                    } else {
                        name.clone()
                    };
                    jobs.push(TeacherJob {
                        name: label,
                        spec: spec(name),
                        seed: teacher_seed(s, jobs.len()),
                        partition: None,
                    });
                }
            }
        }
        EnsembleMode::Partitions => {
            if cfg.teachers.is_empty() {
                return Ok(jobs);
            }
            let parts = ensemble_partitions(pool_len, cfg.ensemble.partitions, s)?;
            for (k, part) in parts.into_iter().enumerate() {
                let name = &cfg.teachers[k % cfg.teachers.len()];
                jobs.push(TeacherJob {
                    name: format!("{name}@p{k}"),
                    spec: spec(name),
                    seed: teacher_seed(s, k),
                    partition: Some(part),
                });
            }
        }
    }
    Ok(jobs)
}

/// Where the files of one seed live.
#[derive(Debug, Clone)]
pub struct SeedPaths {
    dir: PathBuf,
    records: PathBuf,
}

impl SeedPaths {
    pub fn new(output: &Path, seed: u64) -> Self {
        SeedPaths {
            dir: output.join("checkpoints").join(format!("s{seed}")),
            records: output.join("records").join(format!("s{seed}")),
        }
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.ckpt"))
    }

    fn info(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.info"))
    }

    fn record(&self, name: &str) -> PathBuf {
        self.records.join(format!("{name}.csv"))
    }

    fn create(&self) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::create_dir_all(&self.records)?;
        Ok(())
    }
}

/// Best epoch and training wall time, kept next to each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TrainInfo {
    best_epoch: Option<usize>,
    seconds: f64,
}

impl TrainInfo {
    fn write(&self, path: &Path) -> Result<()> {
        let epoch = self.best_epoch.map_or(String::new(), |e| e.to_string());
        fs::write(
            path,
            format!("best_epoch = {epoch}\nseconds = {}\n", self.seconds),
        )?;
        Ok(())
    }

    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        let mut info = TrainInfo {
            best_epoch: None,
            seconds: 0.0,
        };
        for line in text.lines() {
            let bad = || Error::data(format!("bad line `{line}` in {}", path.display()));
            match line.split_once(" = ") {
                Some(("best_epoch", "")) => {}
                Some(("best_epoch", e)) => info.best_epoch = Some(e.parse().map_err(|_| bad())?),
                Some(("seconds", s)) => info.seconds = s.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        Ok(info)
    }
}

fn store(
    paths: &SeedPaths,
    name: &str,
    ck: &Checkpoint,
    record: &TrainRecord,
    best_epoch: Option<usize>,
) -> Result<()> {
    ck.save(&paths.checkpoint(name))?;
    record.write_csv(&paths.record(name))?;
    TrainInfo {
        best_epoch,
        seconds: record.total_seconds(),
    }
    .write(&paths.info(name))
}

fn load_checked(path: &Path, data: &ExperimentData) -> Result<Model> {
    let ck = Checkpoint::load(path)?;
    if let Some(v) = &data.vocab {
        ck.check_vocabulary(v)?;
    }
    let model = ck.to_model()?;
    if model.layout() != data.train.layout() {
        return Err(Error::shape(format!(
            "checkpoint {} was trained on a different feature layout",
            path.display()
        )));
    }
    Ok(model)
}

fn cotrain_name(teacher: &str) -> String {
    format!("{teacher}@cotrain")
}

fn kd_name(student: &str) -> String {
    format!("{student}+kd")
}

/// Checkpoint names read by the evaluate stage, teachers first.
fn evaluated_models(cfg: &ExperimentConfig, jobs: &[TeacherJob]) -> Vec<String> {
    let mut out: Vec<String> = jobs.iter().map(|j| j.name.clone()).collect();
    if let Some(student) = &cfg.student {
        if cfg.distill.scheme == Scheme::Cotrain {
            out.extend(cfg.teachers.iter().map(|t| cotrain_name(t)));
        }
        out.push(student.clone());
        if !cfg.teachers.is_empty() {
            out.push(kd_name(student));
        }
    }
    out
}

struct SeedRun<'c> {
    cfg: &'c ExperimentConfig,
    data: &'c ExperimentData,
    seed: u64,
    paths: SeedPaths,
    jobs: Vec<TeacherJob>,
}

impl<'c> SeedRun<'c> {
    fn new(cfg: &'c ExperimentConfig, data: &'c ExperimentData, seed: u64) -> Result<Self> {
        let jobs = teacher_jobs(cfg, seed, data.train.len() + data.val.len())?;
        Ok(SeedRun {
            cfg,
            data,
            seed,
            paths: SeedPaths::new(&cfg.output, seed),
            jobs,
        })
    }

    fn train_cfg(&self, seed: u64) -> TrainConfig {
        self.cfg.train.clone().with_seed(seed)
    }

    fn teachers(&self) -> Result<Vec<PathBuf>> {
        self.paths.create()?;
        let pool = (self.cfg.ensemble.mode == EnsembleMode::Partitions)
            .then(|| Dataset::concat(&[&self.data.train, &self.data.val]))
            .transpose()?;
        let mut out = Vec::new();
        for job in &self.jobs {
            let (train, val) = match (&job.partition, &pool) {
                (Some((t, v)), Some(pool)) => (pool.subset(t), pool.subset(v)),
                _ => (self.data.train.clone(), self.data.val.clone()),
            };
            let o = train_teacher(&job.spec, &train, &val, &self.train_cfg(job.seed))?;
            let ck = Checkpoint::from_model(
                &o.model,
                job.seed,
                epoch_u64(o.best_epoch),
                self.data.fingerprint(),
            );
            store(&self.paths, &job.name, &ck, &o.record, o.best_epoch)?;
            out.push(self.paths.checkpoint(&job.name));
        }
        Ok(out)
    }

    fn distill(&self) -> Result<()> {
        let Some(student) = &self.cfg.student else {
            return Ok(());
        };
        self.paths.create()?;
        let spec = &self.cfg.models[student];
        let d = self.data;
        let fp = d.fingerprint();

        let o = train_teacher(spec, &d.train, &d.val, &self.train_cfg(self.seed))?;
        let ck = Checkpoint::from_model(&o.model, self.seed, epoch_u64(o.best_epoch), fp);
        store(&self.paths, student, &ck, &o.record, o.best_epoch)?;

        if self.cfg.teachers.is_empty() {
            return Ok(());
        }
        // KD-loss monitoring needs no labelled validation data, so the
        // validation rows join the training set.
        let merged;
        let data = if self.cfg.distill.monitor == MonitorMode::KdLossMin {
            merged = Dataset::concat(&[&d.train, &d.val])?;
            StudentData {
                train: &merged,
                val: None,
            }
        } else {
            StudentData {
                train: &d.train,
                val: Some(&d.val),
            }
        };
        let cfg = self.train_cfg(self.seed);
        let outcome = match self.cfg.distill.scheme {
            Scheme::Pretrain => {
                let teachers = self
                    .jobs
                    .iter()
                    .map(|j| load_checked(&self.paths.checkpoint(&j.name), d))
                    .collect::<Result<Vec<_>>>()?;
                train_student_pretrain(spec, &teachers, &self.cfg.distill, data, &cfg)?
            }
            Scheme::Cotrain => {
                let name = &self.cfg.teachers[0];
                let teacher_seed = teacher_seed(self.seed, 0);
                let co = train_student_cotrain(
                    spec,
                    &self.cfg.models[name],
                    &self.cfg.distill,
                    data,
                    &self.train_cfg(teacher_seed),
                    &cfg,
                    None,
                )?;
                let ck = Checkpoint::from_model(
                    &co.teacher,
                    teacher_seed,
                    epoch_u64(co.student.best_epoch),
                    fp,
                );
                store(
                    &self.paths,
                    &cotrain_name(name),
                    &ck,
                    &co.student.record,
                    co.student.best_epoch,
                )?;
                co.student
            }
        };
        let mut ck =
            Checkpoint::from_model(&outcome.model, self.seed, epoch_u64(outcome.best_epoch), fp);
        ck.adam = Some(outcome.adam.clone());
        ck.gate = outcome.gate.clone();
        ck.projectors = outcome.projectors.clone();
        store(
            &self.paths,
            &kd_name(student),
            &ck,
            &outcome.record,
            outcome.best_epoch,
        )
    }

    fn evaluate(&self) -> Result<Vec<ReportRow>> {
        let test = &self.data.test;
        let labels = test.labels();
        let mut rows = Vec::new();
        let mut teacher_probs: Vec<Vec<f64>> = Vec::new();
        for name in evaluated_models(self.cfg, &self.jobs) {
            let model = load_checked(&self.paths.checkpoint(&name), self.data)?;
            let info = TrainInfo::read(&self.paths.info(&name))?;
            let probs = model.predict_dataset(test)?;
            rows.push(ReportRow {
                model: name.clone(),
                seed: self.seed,
                auc: auc(&probs, labels)?,
                logloss: logloss(&probs, labels)?,
                best_epoch: info.best_epoch,
                seconds: info.seconds,
            });
            if self.jobs.iter().any(|j| j.name == name) {
                teacher_probs.push(probs);
            }
        }
        if teacher_probs.len() > 1 {
            let k = teacher_probs.len();
            let (auc_v, ll_v) = match self.cfg.average {
                AverageMode::Metrics => {
                    let t = &rows[..k];
                    (
                        t.iter().map(|r| r.auc).sum::<f64>() / k as f64,
                        t.iter().map(|r| r.logloss).sum::<f64>() / k as f64,
                    )
                }
                AverageMode::Predictions => {
                    let mean: Vec<f64> = (0..test.len())
                        .map(|i| teacher_probs.iter().map(|p| p[i]).sum::<f64>() / k as f64)
                        .collect();
                    (auc(&mean, labels)?, logloss(&mean, labels)?)
                }
            };
            rows.insert(
                k,
                ReportRow {
                    model: TEACHER_AVERAGE.into(),
                    seed: self.seed,
                    auc: auc_v,
                    logloss: ll_v,
                    best_epoch: None,
                    seconds: rows[..k].iter().map(|r| r.seconds).sum(),
                },
            );
        }
        Ok(rows)
    }

    fn required_checkpoints(&self, stages: &[Stage]) -> Vec<PathBuf> {
        let has = |s| stages.contains(&s);
        let mut need = Vec::new();
        let teachers_ready = has(Stage::Teachers);
        if has(Stage::Distill)
            && !teachers_ready
            && self.cfg.student.is_some()
            && self.cfg.distill.scheme == Scheme::Pretrain
        {
            need.extend(self.jobs.iter().map(|j| self.paths.checkpoint(&j.name)));
        }
        if has(Stage::Evaluate) {
            for name in evaluated_models(self.cfg, &self.jobs) {
                let is_teacher = self.jobs.iter().any(|j| j.name == name);
                let made = if is_teacher {
                    teachers_ready
                } else {
                    has(Stage::Distill)
                };
                if !made {
                    need.push(self.paths.checkpoint(&name));
                }
            }
        }
        need.sort();
        need.dedup();
        need
    }
}

fn epoch_u64(e: Option<usize>) -> u64 {
    e.map_or(0, |e| e as u64)
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            Error::invalid(format!(
                "{WORKERS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        b = b.num_threads(n.max(1));
    }
    b.build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// Runs `f` once per seed on the worker pool, results in seed order.
fn per_seed<'c, T: Send>(
    cfg: &'c ExperimentConfig,
    data: &'c ExperimentData,
    f: impl Fn(&SeedRun<'c>) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let pool = worker_pool()?;
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| f(&SeedRun::new(cfg, data, s)?))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .collect()
}

fn write_manifest(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<()> {
    let text = cfg.to_text();
    fs::write(cfg.output.join("config.txt"), &text)?;
    let mut m = String::new();
    let _ = writeln!(m, "crate_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        m,
        "config_sha256 = {}",
        hex(&Sha256::digest(text.as_bytes()))
    );
    if let Some(h) = &data.input_sha256 {
        let _ = writeln!(m, "input_sha256 = {h}");
    }
    if let Some(fp) = data.fingerprint() {
        let _ = writeln!(m, "vocab_fingerprint = {fp:016x}");
    }
    let _ = writeln!(
        m,
        "seeds = {}",
        cfg.seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    fs::write(cfg.output.join("manifest.txt"), m)?;
    Ok(())
}

fn preprocess(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "train_rows = {}", data.train.len());
    let _ = writeln!(s, "val_rows = {}", data.val.len());
    let _ = writeln!(s, "test_rows = {}", data.test.len());
    let sizes = &data.train.layout().vocab_sizes;
    let _ = writeln!(
        s,
        "vocab_sizes = {}",
        sizes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    if !data.collapse.is_empty() {
        let join = |f: fn(&CollapseStats) -> usize| {
            data.collapse
                .iter()
                .map(|c| f(c).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "rare_tokens = {}", join(|c| c.rare_tokens));
        let _ = writeln!(s, "rare_occurrences = {}", join(|c| c.rare_occurrences));
    }
    fs::write(cfg.output.join("preprocess.txt"), s)?;
    if let Some(v) = &data.vocab {
        v.save(&cfg.output.join("vocab.txt"))?;
    }
    Ok(())
}

fn execute(cfg: &ExperimentConfig, stages: &[Stage]) -> Result<ExperimentReport> {
    let data = ExperimentData::load(cfg).map_err(|e| e.in_stage("preprocess"))?;
    write_manifest(cfg, &data)?;

    // Every checkpoint a later stage reads but no earlier stage writes must
    // exist before anything trains.
    for &s in &cfg.seeds {
        for path in SeedRun::new(cfg, &data, s)?.required_checkpoints(stages) {
            if !path.exists() {
                return Err(Error::MissingFile(path).in_stage("preflight"));
            }
        }
    }

    if stages.contains(&Stage::Preprocess) {
        preprocess(cfg, &data).map_err(|e| e.in_stage("preprocess"))?;
    }
    if stages.contains(&Stage::Teachers) {
        per_seed(cfg, &data, SeedRun::teachers).map_err(|e| e.in_stage("teachers"))?;
    }
    if stages.contains(&Stage::Distill) {
        per_seed(cfg, &data, SeedRun::distill).map_err(|e| e.in_stage("distill"))?;
    }
    let mut report = ExperimentReport::default();
    if stages.contains(&Stage::Evaluate) {
        let rows = per_seed(cfg, &data, SeedRun::evaluate).map_err(|e| e.in_stage("evaluate"))?;
        // Group by model, then seed.
        let flat: Vec<ReportRow> = rows.into_iter().flatten().collect();
        let mut names: Vec<String> = Vec::new();
        for r in &flat {
            if !names.contains(&r.model) {
                names.push(r.model.clone());
            }
        }
        for n in &names {
            report
                .rows
                .extend(flat.iter().filter(|r| &r.model == n).cloned());
        }
        write_report(cfg, &report).map_err(|e| e.in_stage("evaluate"))?;
    }
    Ok(report)
}

fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    report.write_csv(&cfg.output.join("report.csv"))?;
    if let Some(base) = cfg.baseline.as_deref().or(cfg.student.as_deref()) {
        let table = report_table(report, base)?;
        fs::write(cfg.output.join("summary.txt"), &table.text)?;
        fs::write(cfg.output.join("summary.csv"), &table.csv)?;
    }
    Ok(())
}

/// Runs `stages` in pipeline order. On failure the output directory gets a
/// `FAILED` marker describing the error; a later successful run removes it.
pub fn run_stages(cfg: &ExperimentConfig, stages: &[Stage]) -> Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output)?;
    let marker = cfg.output.join(FAILED_MARKER);
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    match execute(cfg, &stages) {
        Ok(r) => {
            if marker.exists() {
                fs::remove_file(&marker)?;
            }
            Ok(r)
        }
        Err(e) => {
            let _ = fs::write(
                &marker,
                format!("{e}\noutputs in this directory may be incomplete\n"),
            );
            Err(e)
        }
    }
}

/// Runs every stage.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_stages(cfg, &Stage::ALL)
}

/// Trains and checkpoints the configured teacher ensemble for every seed.
pub fn make_ensemble(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.teachers.is_empty() {
        return Err(Error::invalid("experiment.teachers is empty"));
    }
    run_stages(cfg, &[Stage::Teachers])?;
    Ok(cfg
        .seeds
        .iter()
        .flat_map(|&s| {
            let paths = SeedPaths::new(&cfg.output, s);
            // Job names do not depend on the data, so the pool size is irrelevant here.
            teacher_jobs(cfg, s, cfg.ensemble.partitions.max(2))
                .unwrap_or_default()
                .into_iter()
                .map(move |j| paths.checkpoint(&j.name))
        })
        .collect())
}
