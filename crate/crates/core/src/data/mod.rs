//! Raw log ingestion, vocabularies, numeric transform, splits and batching.

mod dataset;
mod numeric;
mod reader;
mod schema;
mod split;
pub mod synthetic;
mod vocab;

pub use dataset::{Batch, Batches, Dataset, EncodedSample, FeatureLayout, Order};
pub use numeric::{transform_numeric, LOG_THRESHOLD};
pub use reader::{open, parse_rows, read_rows, RawRow};
pub use schema::{DayColumn, FieldKind, FieldSchema, Schema};
pub use split::{k_folds, DatasetSplit, SplitIndices, SplitStrategy};
pub use vocab::{CollapseStats, FeatureVocabulary, FieldVocabulary, UNK};

use crate::error::Result;

/// Output of [`prepare`]: a vocabulary fitted on the training rows and the
/// three encoded partitions.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: FeatureVocabulary,
    pub collapse: Vec<CollapseStats>,
    pub split: SplitIndices,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits `rows`, builds the vocabulary on the training partition only and
/// encodes all three partitions with it.
pub fn prepare(
    rows: &[RawRow],
    schema: &Schema,
    split: &DatasetSplit,
    min_count: usize,
) -> Result<Prepared> {
    let days: Option<Vec<i64>> = rows.iter().map(|r| r.day).collect();
    let parts = split.apply(rows.len(), days.as_deref())?;
    let pick = |idx: &[usize]| -> Vec<RawRow> { idx.iter().map(|&i| rows[i].clone()).collect() };
    let train_rows = pick(&parts.train);
    let (vocab, collapse) = FeatureVocabulary::build(&train_rows, schema, min_count)?;
    let train = Dataset::encode(&train_rows, &vocab, schema.num_numeric())?;
    let val = Dataset::encode(&pick(&parts.val), &vocab, schema.num_numeric())?;
    let test = Dataset::encode(&pick(&parts.test), &vocab, schema.num_numeric())?;
    Ok(Prepared {
        vocab,
        collapse,
        split: parts,
        train,
        val,
        test,
    })
}
