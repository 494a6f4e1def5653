//! Flat `section.key = value` experiment files.
//!
//! ```text
//! data.source = synthetic
//! synthetic.samples = 100000
//! model.deepfm.wide = fm
//! model.deepfm.deep = mlp:64,64
//! model.deepfm.embedding_dim = 8
//! experiment.teachers = deepfm
//! experiment.student = dnn
//! experiment.seeds = 1,2,3
//! ```
//!
//! Blank lines and `#` comments are ignored; every other line must be a
//! known key, given at most once.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::synthetic::SyntheticConfig;
use crate::data::{DatasetSplit, Schema, SplitStrategy};
use crate::distill::{DistillConfig, DISTILL_KEYS};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SPEC_KEYS};
use crate::train::{TrainConfig, TRAIN_KEYS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Criteo,
    Avazu,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    File {
        path: PathBuf,
        format: FileFormat,
        /// `label:..;num:..;cat:..` column layout, custom format only.
        layout: Option<String>,
        delimiter: u8,
        header: bool,
    },
}

impl DataSource {
    /// Column schema of a file source.
    pub fn schema(&self) -> Result<Option<Schema>> {
        let DataSource::File {
            format,
            layout,
            delimiter,
            header,
            ..
        } = self
        else {
            return Ok(None);
        };
        let mut schema = match format {
            FileFormat::Criteo => Schema::criteo(),
            FileFormat::Avazu => Schema::avazu(),
            FileFormat::Custom => Schema::parse_layout(
                layout
                    .as_deref()
                    .ok_or_else(|| Error::invalid("custom format needs data.layout"))?,
                *delimiter,
            )?,
        };
        schema.delimiter = *delimiter;
        schema.has_header = *header;
        Ok(Some(schema))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Tokens seen fewer times in the training rows map to UNK.
    pub min_count: usize,
    pub split: DatasetSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    /// Different architectures and/or seeds on the same data.
    Models,
    /// Each teacher trains on a different partition of train + validation.
    Partitions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub mode: EnsembleMode,
    /// Seeded copies of each teacher spec (mode M).
    pub copies: usize,
    /// Number of data partitions (mode D).
    pub partitions: usize,
}

/// How the plain (undistilled) teacher ensemble is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    /// Mean of the individual teachers' metrics.
    Metrics,
    /// Metrics of the mean predicted probability.
    Predictions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub models: BTreeMap<String, ModelSpec>,
    pub teachers: Vec<String>,
    pub student: Option<String>,
    pub distill: DistillConfig,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub baseline: Option<String>,
    pub average: AverageMode,
}

fn cfg_err(line: usize, detail: impl Into<String>) -> Error {
    Error::Config {
        line,
        detail: detail.into(),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    if v.trim().is_empty() {
        return Some(Vec::new());
    }
    v.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn delimiter_name(d: u8) -> String {
    match d {
        b'\t' => "tab".into(),
        b',' => "comma".into(),
        other => (other as char).to_string(),
    }
}

fn parse_delimiter(v: &str) -> Option<u8> {
    match v {
        "tab" => Some(b'\t'),
        "comma" => Some(b','),
        s if s.len() == 1 => Some(s.as_bytes()[0]),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{content}`")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !seen.insert(k.clone()) {
                return Err(cfg_err(line, format!("duplicate key `{k}`")));
            }
            entries.push((line, k, v));
        }
        Self::from_entries(&entries)
    }

    fn from_entries(entries: &[(usize, String, String)]) -> Result<Self> {
        let mut source = "synthetic".to_string();
        let mut path = None;
        let mut format = FileFormat::Criteo;
        let mut layout = None;
        let mut delimiter = None;
        let mut header = None;
        let mut min_count = None;
        let mut split = SplitStrategy::RandomRatio {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        };
        let mut shuffle_tail = false;
        let mut split_seed = 0;
        let mut synthetic = SyntheticConfig::default();
        let mut model_entries: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
        let mut train_entries = Vec::new();
        let mut distill_entries = Vec::new();
        let mut ensemble = EnsembleConfig {
            mode: EnsembleMode::Models,
            copies: 1,
            partitions: 3,
        };
        let mut teachers = Vec::new();
        let mut student = None;
        let mut seeds = vec![1];
        let mut output = PathBuf::from("out");
        let mut baseline = None;
        let mut average = AverageMode::Metrics;

        for (line, key, v) in entries {
            let line = *line;
            let bad = || cfg_err(line, format!("bad value for {key}: `{v}`"));
            let (section, rest) = key
                .split_once('.')
                .ok_or_else(|| cfg_err(line, format!("key `{key}` lacks a section")))?;
            match (section, rest) {
                ("data", "source") => {
                    if v != "synthetic" && v != "file" {
                        return Err(bad());
                    }
                    source = v.clone();
                }
                ("data", "path") => path = Some(PathBuf::from(v)),
                ("data", "format") => {
                    format = match v.as_str() {
                        "criteo" => FileFormat::Criteo,
                        "avazu" => FileFormat::Avazu,
                        "custom" => FileFormat::Custom,
                        _ => return Err(bad()),
                    }
                }
                ("data", "layout") => layout = Some(v.clone()),
                ("data", "delimiter") => delimiter = Some(parse_delimiter(v).ok_or_else(bad)?),
                ("data", "header") => header = Some(v.parse().map_err(|_| bad())?),
                ("data", "min_count") => min_count = Some(v.parse().map_err(|_| bad())?),
                ("data", "split") => {
                    split = match v.split_once(':') {
                        Some(("random", r)) => {
                            let r: Vec<f64> = parse_list(r).ok_or_else(bad)?;
                            if r.len() != 3 {
                                return Err(bad());
                            }
                            SplitStrategy::RandomRatio {
                                train: r[0],
                                val: r[1],
                                test: r[2],
                            }
                        }
                        Some(("sequential", d)) => SplitStrategy::Sequential {
                            train_days: d.trim().parse().map_err(|_| bad())?,
                            shuffle_tail: false,
                        },
                        _ => return Err(bad()),
                    }
                }
                ("data", "shuffle_tail") => shuffle_tail = v.parse().map_err(|_| bad())?,
                ("data", "split_seed") => split_seed = v.parse().map_err(|_| bad())?,
                ("synthetic", k) => {
                    let s = &mut synthetic;
                    match k {
                        "samples" => s.samples = v.parse().map_err(|_| bad())?,
                        "field_values" => s.field_values = parse_list(v).ok_or_else(bad)?,
                        "num_numeric" => s.num_numeric = v.parse().map_err(|_| bad())?,
                        "latent_dim" => s.latent_dim = v.parse().map_err(|_| bad())?,
                        "first_order_scale" => {
                            s.first_order_scale = v.parse().map_err(|_| bad())?
                        }
                        "interaction_scale" => {
                            s.interaction_scale = v.parse().map_err(|_| bad())?
                        }
                        "bias" => s.bias = v.parse().map_err(|_| bad())?,
                        "skew" => s.skew = v.parse().map_err(|_| bad())?,
                        "seed" => s.seed = v.parse().map_err(|_| bad())?,
                        _ => return Err(cfg_err(line, format!("unknown key `{key}`"))),
                    }
                }
                ("model", rest) => {
                    let (name, k) = rest.rsplit_once('.').ok_or_else(|| {
                        cfg_err(line, format!("expected model.<name>.<key>, got `{key}`"))
                    })?;
                    if !SPEC_KEYS.contains(&k) {
                        return Err(cfg_err(line, format!("unknown key `{key}`")));
                    }
                    model_entries.entry(name.to_string()).or_default().push((
                        line,
                        k.to_string(),
                        v.clone(),
                    ));
                }
                ("train", k) if TRAIN_KEYS.contains(&k) => {
                    train_entries.push((line, k, v.as_str()))
                }
                ("distill", k) if DISTILL_KEYS.contains(&k) => {
                    distill_entries.push((line, k, v.as_str()))
                }
                ("ensemble", "mode") => {
                    ensemble.mode = match v.as_str() {
                        "M" => EnsembleMode::Models,
                        "D" => EnsembleMode::Partitions,
                        _ => return Err(bad()),
                    }
                }
                ("ensemble", "copies") => ensemble.copies = v.parse().map_err(|_| bad())?,
                ("ensemble", "partitions") => ensemble.partitions = v.parse().map_err(|_| bad())?,
                ("experiment", "teachers") => teachers = parse_list(v).ok_or_else(bad)?,
                ("experiment", "student") => student = Some(v.clone()),
                ("experiment", "seeds") => seeds = parse_list(v).ok_or_else(bad)?,
                ("experiment", "output") => output = PathBuf::from(v),
                ("experiment", "baseline") => baseline = Some(v.clone()),
                ("experiment", "average") => {
                    average = match v.as_str() {
                        "metrics" => AverageMode::Metrics,
                        "predictions" => AverageMode::Predictions,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(cfg_err(line, format!("unknown key `{key}`"))),
            }
        }

        let first_line = |list: &[(usize, &str, &str)]| list.first().map_or(0, |e| e.0);
        let train = TrainConfig::from_entries(train_entries.iter().map(|e| (e.1, e.2)))
            .map_err(|e| cfg_err(first_line(&train_entries), e.to_string()))?;
        let distill = DistillConfig::from_entries(distill_entries.iter().map(|e| (e.1, e.2)))
            .map_err(|e| cfg_err(first_line(&distill_entries), e.to_string()))?;
        let mut models = BTreeMap::new();
        for (name, list) in &model_entries {
            let spec =
                ModelSpec::from_entries(list.iter().map(|(_, k, v)| (k.as_str(), v.as_str())))
                    .map_err(|e| cfg_err(list[0].0, format!("model `{name}`: {e}")))?;
            models.insert(name.clone(), spec);
        }
        if let SplitStrategy::Sequential {
            shuffle_tail: ref mut st,
            ..
        } = split
        {
            *st = shuffle_tail;
        }
        let source = match source.as_str() {
            "file" => DataSource::File {
                path: path.ok_or_else(|| cfg_err(0, "data.source = file needs data.path"))?,
                format,
                layout,
                delimiter: delimiter.unwrap_or(match format {
                    FileFormat::Criteo => b'\t',
                    _ => b',',
                }),
                header: header.unwrap_or(false),
            },
            _ => DataSource::Synthetic(synthetic),
        };
        let min_count = min_count.unwrap_or(match &source {
            DataSource::File {
                format: FileFormat::Criteo,
                ..
            } => 10,
            DataSource::File {
                format: FileFormat::Avazu,
                ..
            } => 5,
            _ => 1,
        });
        let cfg = ExperimentConfig {
            data: DataConfig {
                source,
                min_count,
                split: DatasetSplit {
                    strategy: split,
                    seed: split_seed,
                },
            },
            models,
            teachers,
            student,
            distill,
            train,
            ensemble,
            seeds,
            output,
            baseline,
            average,
        };
        cfg.validate().map_err(|e| cfg_err(0, e.to_string()))?;
        Ok(cfg)
    }

    /// Cross-field checks: every referenced model exists, seeds are given,
    /// the file schema resolves, and co-training has one teacher.
    pub fn validate(&self) -> Result<()> {
        for name in self.teachers.iter().chain(&self.student) {
            if !self.models.contains_key(name) {
                return Err(Error::invalid(format!("model `{name}` is not defined")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("experiment.seeds is empty"));
        }
        if self.ensemble.copies == 0 {
            return Err(Error::invalid("ensemble.copies must be at least 1"));
        }
        if self.ensemble.mode == EnsembleMode::Partitions && self.ensemble.partitions < 2 {
            return Err(Error::invalid(format!(
                "mode D needs at least 2 partitions, got {}",
                self.ensemble.partitions
            )));
        }
        if self.distill.scheme == crate::distill::Scheme::Cotrain && self.teachers.len() > 1 {
            return Err(Error::invalid("co-training takes exactly one teacher"));
        }
        self.data.source.schema()?;
        Ok(())
    }

    /// Canonical text; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.data.source {
            DataSource::Synthetic(s) => {
                put("data.source", "synthetic".into());
                put("synthetic.samples", s.samples.to_string());
                put("synthetic.field_values", join(&s.field_values));
                put("synthetic.num_numeric", s.num_numeric.to_string());
                put("synthetic.latent_dim", s.latent_dim.to_string());
                put(
                    "synthetic.first_order_scale",
                    s.first_order_scale.to_string(),
                );
                put(
                    "synthetic.interaction_scale",
                    s.interaction_scale.to_string(),
                );
                put("synthetic.bias", s.bias.to_string());
                put("synthetic.skew", s.skew.to_string());
                put("synthetic.seed", s.seed.to_string());
            }
            DataSource::File {
                path,
                format,
                layout,
                delimiter,
                header,
            } => {
                put("data.source", "file".into());
                put("data.path", path.display().to_string());
                let f = match format {
                    FileFormat::Criteo => "criteo",
                    FileFormat::Avazu => "avazu",
                    FileFormat::Custom => "custom",
                };
                put("data.format", f.into());
                if let Some(l) = layout {
                    put("data.layout", l.clone());
                }
                put("data.delimiter", delimiter_name(*delimiter));
                put("data.header", header.to_string());
            }
        }
        put("data.min_count", self.data.min_count.to_string());
        match &self.data.split.strategy {
            SplitStrategy::RandomRatio { train, val, test } => {
                put("data.split", format!("random:{train},{val},{test}"));
            }
            SplitStrategy::Sequential {
                train_days,
                shuffle_tail,
            } => {
                put("data.split", format!("sequential:{train_days}"));
                put("data.shuffle_tail", shuffle_tail.to_string());
            }
        }
        put("data.split_seed", self.data.split.seed.to_string());
        for (name, spec) in &self.models {
            for (k, v) in spec.to_entries() {
                put(&format!("model.{name}.{k}"), v);
            }
        }
        for (k, v) in self.train.to_entries() {
            put(&format!("train.{k}"), v);
        }
        for (k, v) in self.distill.to_entries() {
            put(&format!("distill.{k}"), v);
        }
        let mode = match self.ensemble.mode {
            EnsembleMode::Models => "M",
            EnsembleMode::Partitions => "D",
        };
        put("ensemble.mode", mode.into());
        put("ensemble.copies", self.ensemble.copies.to_string());
        put("ensemble.partitions", self.ensemble.partitions.to_string());
        put("experiment.teachers", self.teachers.join(","));
        if let Some(s) = &self.student {
            put("experiment.student", s.clone());
        }
        put("experiment.seeds", join(&self.seeds));
        put("experiment.output", self.output.display().to_string());
        if let Some(b) = &self.baseline {
            put("experiment.baseline", b.clone());
        }
        let avg = match self.average {
            AverageMode::Metrics => "metrics",
            AverageMode::Predictions => "predictions",
        };
        put("experiment.average", avg.into());
        out
    }

    /// Applies `key = value` overrides on top of this config's text.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut text = self.to_text();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        for (k, v) in overrides {
            let prefix = format!("{k} =");
            match lines.iter_mut().find(|l| l.starts_with(&prefix)) {
                Some(l) => *l = format!("{k} = {v}"),
                None => lines.push(format!("{k} = {v}")),
            }
        }
        text = lines.join("\n");
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::Scheme;

    const SAMPLE: &str = "\
# two teachers, one student
data.source = synthetic
synthetic.samples = 2000
synthetic.field_values = 5,6,7
model.deepfm.wide = fm
model.deepfm.deep = mlp:16,16
model.deepfm.embedding_dim = 4
model.dcn.wide = cross:2
model.dcn.deep = mlp:16
model.dcn.dropout = 0.1
model.dcn.embedding_dim = 4
model.dnn.deep = mlp:8
model.dnn.embedding_dim = 4
train.batch_size = 128
distill.tau = 3
distill.beta = 0.4
distill.gamma = 0.6
experiment.teachers = deepfm, dcn
experiment.student = dnn
experiment.seeds = 1,2,3
experiment.baseline = dnn
";

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.models.len(), 3);
        assert_eq!(c.teachers, vec!["deepfm", "dcn"]);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.train.batch_size, 128);
        let text = c.to_text();
        let again = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn file_source_round_trips() {
        let text = "\
data.source = file
data.path = /tmp/x.tsv
data.format = custom
data.layout = label:0;num:1-2;cat:3-5
data.delimiter = comma
data.split = sequential:7
data.shuffle_tail = true
model.lr.wide = lr
model.lr.embedding_dim = 1
experiment.teachers = lr
";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.data.min_count, 1);
        assert!(matches!(
            c.data.split.strategy,
            SplitStrategy::Sequential {
                train_days: 7,
                shuffle_tail: true
            }
        ));
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn recipe_defaults() {
        let c = ExperimentConfig::parse("data.source = file\ndata.path = a\ndata.format = avazu\n")
            .unwrap();
        assert_eq!(c.data.min_count, 5);
        let c = ExperimentConfig::parse("data.source = file\ndata.path = a\n").unwrap();
        assert_eq!(c.data.min_count, 10);
        let schema = c.data.source.schema().unwrap().unwrap();
        assert_eq!(schema.delimiter, b'\t');
    }

    #[test]
    fn rejects_bad_input() {
        let unknown = ExperimentConfig::parse("data.source = synthetic\nexperiment.colour = red\n")
            .unwrap_err();
        assert!(
            matches!(unknown, Error::Config { line: 2, .. }),
            "{unknown}"
        );
        assert!(ExperimentConfig::parse("model.x.depth = 3\n").is_err());
        assert!(ExperimentConfig::parse("experiment.seeds = 1\nexperiment.seeds = 2\n").is_err());
        assert!(ExperimentConfig::parse("experiment.teachers = ghost\n").is_err());
        assert!(ExperimentConfig::parse("ensemble.mode = D\nensemble.partitions = 1\n").is_err());
        assert!(ExperimentConfig::parse("just text\n").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let o = c
            .with_overrides(&[
                ("experiment.seeds".into(), "7".into()),
                ("distill.scheme".into(), "cotrain".into()),
                ("experiment.teachers".into(), "dcn".into()),
            ])
            .unwrap();
        assert_eq!(o.seeds, vec![7]);
        assert_eq!(o.distill.scheme, Scheme::Cotrain);
        assert!(c
            .with_overrides(&[("train.momentum".into(), "1".into())])
            .is_err());
    }
}
