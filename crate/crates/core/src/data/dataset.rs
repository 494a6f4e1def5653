use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::numeric::transform_numeric;
use super::reader::RawRow;
use super::vocab::FeatureVocabulary;
use crate::error::{Error, Result};

/// Input shape shared by every model trained on one vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    /// Vocabulary size (UNK included) of each categorical field.
    pub vocab_sizes: Vec<usize>,
    pub num_numeric: usize,
}

impl FeatureLayout {
    pub fn new(vocab_sizes: Vec<usize>, num_numeric: usize) -> Self {
        FeatureLayout {
            vocab_sizes,
            num_numeric,
        }
    }

    pub fn num_categorical(&self) -> usize {
        self.vocab_sizes.len()
    }

    pub fn num_fields(&self) -> usize {
        self.vocab_sizes.len() + self.num_numeric
    }

    /// Row offset of each categorical field inside a concatenated table.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.vocab_sizes
            .iter()
            .map(|s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }

    /// Rows of a table holding every categorical index plus one row per
    /// numeric field.
    pub fn table_rows(&self) -> usize {
        self.vocab_sizes.iter().sum::<usize>() + self.num_numeric
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub categorical: Vec<u32>,
    pub numeric: Vec<f64>,
    pub label: u8,
}

/// Sample order for one pass over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Sequential,
    Shuffled(u64),
}

/// Column-major block of samples. `labels` is `None` for input-only batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    /// `size * num_categorical` field-local indices.
    pub categorical: Vec<u32>,
    /// `size * num_numeric` transformed values.
    pub numeric: Vec<f64>,
    pub labels: Option<Vec<f64>>,
}

impl Batch {
    pub fn labels(&self) -> Result<&[f64]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::data("batch carries no labels"))
    }
}

/// Encoded samples in flat row-major storage.
///
/// Every read of labels goes through a counter so callers can verify that a
/// code path never looks at them.
#[derive(Debug)]
pub struct Dataset {
    layout: FeatureLayout,
    categorical: Vec<u32>,
    numeric: Vec<f64>,
    labels: Vec<u8>,
    label_reads: AtomicUsize,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            layout: self.layout.clone(),
            categorical: self.categorical.clone(),
            numeric: self.numeric.clone(),
            labels: self.labels.clone(),
            label_reads: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout
            && self.categorical == other.categorical
            && self.numeric == other.numeric
            && self.labels == other.labels
    }
}

impl Dataset {
    pub fn new(layout: FeatureLayout) -> Self {
        Dataset {
            layout,
            categorical: Vec::new(),
            numeric: Vec::new(),
            labels: Vec::new(),
            label_reads: AtomicUsize::new(0),
        }
    }

    pub fn from_samples(layout: FeatureLayout, samples: &[EncodedSample]) -> Result<Self> {
        let mut ds = Dataset::new(layout);
        for s in samples {
            ds.push(s)?;
        }
        Ok(ds)
    }

    /// Encodes raw rows with a frozen vocabulary, transforming numerics.
    pub fn encode(rows: &[RawRow], vocab: &FeatureVocabulary, num_numeric: usize) -> Result<Self> {
        let mut ds = Dataset::new(FeatureLayout::new(vocab.sizes(), num_numeric));
        for row in rows {
            let categorical = vocab.encode_tokens(&row.tokens)?;
            let numeric = row.numerics.iter().map(|&x| transform_numeric(x)).collect();
            ds.push(&EncodedSample {
                categorical,
                numeric,
                label: row.label,
            })?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, s: &EncodedSample) -> Result<()> {
        if s.categorical.len() != self.layout.num_categorical()
            || s.numeric.len() != self.layout.num_numeric
        {
            return Err(Error::data("sample does not match the feature layout"));
        }
        for (i, (&idx, &size)) in s
            .categorical
            .iter()
            .zip(&self.layout.vocab_sizes)
            .enumerate()
        {
            if idx as usize >= size {
                return Err(Error::data(format!(
                    "index {idx} out of range for field {i} of size {size}"
                )));
            }
        }
        if s.label > 1 {
            return Err(Error::data(format!("label {} is not binary", s.label)));
        }
        if s.numeric.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite numeric value"));
        }
        self.categorical.extend_from_slice(&s.categorical);
        self.numeric.extend_from_slice(&s.numeric);
        self.labels.push(s.label);
        Ok(())
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of label reads made through this handle so far.
    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }

    pub fn labels(&self) -> &[u8] {
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        &self.labels
    }

    pub fn sample(&self, i: usize) -> EncodedSample {
        let (m, n) = (self.layout.num_categorical(), self.layout.num_numeric);
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        EncodedSample {
            categorical: self.categorical[i * m..(i + 1) * m].to_vec(),
            numeric: self.numeric[i * n..(i + 1) * n].to_vec(),
            label: self.labels[i],
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (m, n) = (self.layout.num_categorical(), self.layout.num_numeric);
        let mut ds = Dataset::new(self.layout.clone());
        for &i in indices {
            ds.categorical
                .extend_from_slice(&self.categorical[i * m..(i + 1) * m]);
            ds.numeric
                .extend_from_slice(&self.numeric[i * n..(i + 1) * n]);
            ds.labels.push(self.labels[i]);
        }
        if !indices.is_empty() {
            self.label_reads.fetch_add(1, Ordering::Relaxed);
        }
        ds
    }

    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::data("concat of zero datasets"))?;
        let mut ds = Dataset::new(first.layout.clone());
        for p in parts {
            if p.layout != ds.layout {
                return Err(Error::data("datasets differ in feature layout"));
            }
            ds.categorical.extend_from_slice(&p.categorical);
            ds.numeric.extend_from_slice(&p.numeric);
            ds.labels.extend_from_slice(p.labels());
        }
        Ok(ds)
    }

    fn order(&self, order: Order) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        if let Order::Shuffled(seed) = order {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        idx
    }

    /// Collects the given rows into one batch.
    pub fn batch(&self, rows: &[usize], with_labels: bool) -> Batch {
        let (m, n) = (self.layout.num_categorical(), self.layout.num_numeric);
        let mut categorical = Vec::with_capacity(rows.len() * m);
        let mut numeric = Vec::with_capacity(rows.len() * n);
        for &i in rows {
            categorical.extend_from_slice(&self.categorical[i * m..(i + 1) * m]);
            numeric.extend_from_slice(&self.numeric[i * n..(i + 1) * n]);
        }
        let labels = with_labels.then(|| {
            self.label_reads.fetch_add(1, Ordering::Relaxed);
            rows.iter().map(|&i| f64::from(self.labels[i])).collect()
        });
        Batch {
            size: rows.len(),
            categorical,
            numeric,
            labels,
        }
    }

    /// One epoch of labelled batches. The last batch may be short.
    pub fn batches(&self, batch_size: usize, order: Order) -> Result<Batches<'_>> {
        self.batch_iter(batch_size, order, true)
    }

    /// One epoch of input-only batches; never touches labels.
    pub fn input_batches(&self, batch_size: usize, order: Order) -> Result<Batches<'_>> {
        self.batch_iter(batch_size, order, false)
    }

    fn batch_iter(
        &self,
        batch_size: usize,
        order: Order,
        with_labels: bool,
    ) -> Result<Batches<'_>> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.is_empty() {
            return Err(Error::data("cannot batch an empty dataset"));
        }
        Ok(Batches {
            data: self,
            order: self.order(order),
            batch_size,
            pos: 0,
            with_labels,
        })
    }
}

pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    with_labels: bool,
}

impl Batches<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = self
            .data
            .batch(&self.order[self.pos..end], self.with_labels);
        self.pos = end;
        Some(b)
    }
}
