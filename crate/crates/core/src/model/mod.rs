//! Model zoo: LR, FM, DNN, Wide&Deep, DeepFM, DCN and xDeepFM as
//! `wide + deep` compositions over one shared embedding table.
//!
//! Categorical fields index a concatenated table (field offsets from
//! [`FeatureLayout::offsets`]); each numeric field owns one extra row used as
//! a learned projection scaled by the field's value. The deep part and the
//! cross network read the categorical embeddings concatenated with the raw
//! numeric values; FM and CIN read every field through the table.

pub mod parts;
mod spec;

pub use spec::{Activation, DeepPart, ModelSpec, WidePart, SPEC_KEYS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::data::{Batch, Dataset, EncodedSample, FeatureLayout, Order};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, ParamBinding, ParamId, ParamKind, ParamStore, Tape, Tensor, Var};
use parts::{CinParams, CrossParams, MlpParams};

/// Standard deviation of the initial embedding entries.
pub const EMBEDDING_INIT_STD: f64 = 0.01;

/// Evaluation batch size used by the batched prediction helpers.
pub const PREDICT_BATCH: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
struct HeadIds {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
enum WideIds {
    None,
    Lr {
        table: ParamId,
        bias: ParamId,
    },
    Fm {
        table: ParamId,
        bias: ParamId,
    },
    Cross {
        layers: Vec<(ParamId, ParamId)>,
        head: HeadIds,
    },
    Cin {
        layers: Vec<ParamId>,
        head: HeadIds,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct MlpIds {
    layers: Vec<(ParamId, ParamId)>,
    head: HeadIds,
}

/// Training-mode dropout needs a random source; inference never does.
pub enum Mode<'r> {
    Inference,
    Training(&'r mut ChaCha8Rng),
}

/// Result of one batched forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `[B]` logits `phi(x)`.
    pub logit: Var,
    /// `[B, h]` representation used for hint regression.
    pub hint: Var,
    pub wide_logit: Option<Var>,
    pub deep_logit: Option<Var>,
    pub binding: ParamBinding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layout: FeatureLayout,
    params: ParamStore,
    embedding: Option<ParamId>,
    wide: WideIds,
    deep: Option<MlpIds>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    let values = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::new(&[fan_in, fan_out], values).expect("shape matches")
}

fn add_head(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, width: usize) -> HeadIds {
    HeadIds {
        weight: params.add(
            format!("{prefix}.head.weight"),
            ParamKind::Dense,
            glorot(rng, width, 1),
        ),
        bias: params.add(
            format!("{prefix}.head.bias"),
            ParamKind::Dense,
            Tensor::zeros(&[1]),
        ),
    }
}

impl Model {
    /// Builds a model with seeded initial parameters.
    pub fn new(spec: ModelSpec, layout: FeatureLayout, seed: u64) -> Result<Self> {
        spec.validate()?;
        if layout.num_fields() == 0 {
            return Err(Error::invalid("feature layout has no fields"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = spec.embedding_dim;
        let rows = layout.table_rows();
        let fields = layout.num_fields();
        let deep_width = layout.num_categorical() * d + layout.num_numeric;

        let needs_embedding =
            spec.deep.is_some() || !matches!(spec.wide, WidePart::None | WidePart::Lr);
        let embedding = needs_embedding.then(|| {
            let dist = Normal::new(0.0, EMBEDDING_INIT_STD).expect("positive std");
            let values = (0..rows * d).map(|_| dist.sample(&mut rng)).collect();
            params.add(
                "embedding",
                ParamKind::Embedding,
                Tensor::new(&[rows, d], values).expect("shape matches"),
            )
        });

        let wide = match &spec.wide {
            WidePart::None => WideIds::None,
            WidePart::Lr => WideIds::Lr {
                table: params.add("lr.weight", ParamKind::Dense, Tensor::zeros(&[rows, 1])),
                bias: params.add("lr.bias", ParamKind::Dense, Tensor::zeros(&[1])),
            },
            WidePart::Fm => WideIds::Fm {
                table: params.add("fm.linear", ParamKind::Dense, Tensor::zeros(&[rows, 1])),
                bias: params.add("fm.bias", ParamKind::Dense, Tensor::zeros(&[1])),
            },
            WidePart::CrossNet { layers } => {
                let ids = (0..*layers)
                    .map(|l| {
                        (
                            params.add(
                                format!("cross.{l}.weight"),
                                ParamKind::Dense,
                                glorot(&mut rng, deep_width, 1),
                            ),
                            params.add(
                                format!("cross.{l}.bias"),
                                ParamKind::Dense,
                                Tensor::zeros(&[deep_width]),
                            ),
                        )
                    })
                    .collect();
                WideIds::Cross {
                    layers: ids,
                    head: add_head(&mut params, &mut rng, "cross", deep_width),
                }
            }
            WidePart::Cin { maps } => {
                let mut prev = fields;
                let ids = maps
                    .iter()
                    .enumerate()
                    .map(|(l, &h)| {
                        let t = glorot(&mut rng, prev * fields, h);
                        // stored as [maps, prev * fields]
                        let t = transpose(&t);
                        prev = h;
                        params.add(format!("cin.{l}.weight"), ParamKind::Dense, t)
                    })
                    .collect();
                WideIds::Cin {
                    layers: ids,
                    head: add_head(&mut params, &mut rng, "cin", maps.iter().sum()),
                }
            }
        };

        let deep = spec.deep.as_ref().map(|dp| {
            let mut width = deep_width;
            let layers = dp
                .hidden
                .iter()
                .enumerate()
                .map(|(l, &h)| {
                    let w = params.add(
                        format!("mlp.{l}.weight"),
                        ParamKind::Dense,
                        glorot(&mut rng, width, h),
                    );
                    let b = params.add(
                        format!("mlp.{l}.bias"),
                        ParamKind::Dense,
                        Tensor::zeros(&[h]),
                    );
                    width = h;
                    (w, b)
                })
                .collect();
            MlpIds {
                layers,
                head: add_head(&mut params, &mut rng, "mlp", width),
            }
        });

        Ok(Model {
            spec,
            layout,
            params,
            embedding,
            wide,
            deep,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Width of the hint vector returned by [`Self::forward`].
    pub fn hint_dim(&self) -> usize {
        if let Some(d) = &self.spec.deep {
            return *d.hidden.last().expect("validated non-empty");
        }
        match &self.spec.wide {
            WidePart::Lr => self.layout.num_fields(),
            WidePart::Fm => self.spec.embedding_dim,
            WidePart::CrossNet { .. } => {
                self.layout.num_categorical() * self.spec.embedding_dim + self.layout.num_numeric
            }
            WidePart::Cin { maps } => maps.iter().sum(),
            WidePart::None => unreachable!("validated spec has a part"),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let (m, n) = (self.layout.num_categorical(), self.layout.num_numeric);
        if batch.size == 0
            || batch.categorical.len() != batch.size * m
            || batch.numeric.len() != batch.size * n
        {
            return Err(Error::shape(
                "batch does not match the model's feature layout",
            ));
        }
        for (i, &idx) in batch.categorical.iter().enumerate() {
            if idx as usize >= self.layout.vocab_sizes[i % m] {
                return Err(Error::data(format!(
                    "index {idx} out of range for field {}",
                    i % m
                )));
            }
        }
        Ok(())
    }

    /// Records `phi(x)` for a batch on `tape`.
    pub fn forward<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        batch: &Batch,
        mode: Mode<'_>,
    ) -> Result<Forward> {
        self.check_batch(batch)?;
        let binding = self.params.bind(tape);
        let b = batch.size;
        let (m, n) = (self.layout.num_categorical(), self.layout.num_numeric);
        let d = self.spec.embedding_dim;
        let fields = m + n;
        let offsets = self.layout.offsets();
        let cat_total: usize = self.layout.vocab_sizes.iter().sum();

        let mut cat_rows = Vec::with_capacity(b * m);
        let mut all_rows = Vec::with_capacity(b * fields);
        let mut all_weights = Vec::with_capacity(b * fields);
        for s in 0..b {
            for f in 0..m {
                let r = offsets[f] + batch.categorical[s * m + f] as usize;
                cat_rows.push(r);
                all_rows.push(r);
                all_weights.push(1.0);
            }
            for k in 0..n {
                all_rows.push(cat_total + k);
                all_weights.push(batch.numeric[s * n + k]);
            }
        }

        let needs_stack = matches!(self.spec.wide, WidePart::Fm | WidePart::Cin { .. });
        let needs_deep_input =
            self.deep.is_some() || matches!(self.spec.wide, WidePart::CrossNet { .. });
        let stack = match (needs_stack, self.embedding) {
            (true, Some(e)) => {
                let g = tape.gather(binding.var(e), all_rows.clone(), Some(all_weights.clone()))?;
                Some(tape.reshape(g, &[b, fields * d])?)
            }
            _ => None,
        };
        let deep_input = match (needs_deep_input, self.embedding) {
            (true, Some(e)) => {
                let mut cols = Vec::with_capacity(2);
                if m > 0 {
                    let g = tape.gather(binding.var(e), cat_rows, None)?;
                    cols.push(tape.reshape(g, &[b, m * d])?);
                }
                if n > 0 {
                    cols.push(tape.constant_from(&[b, n], batch.numeric.clone())?);
                }
                Some(if cols.len() == 1 {
                    cols[0]
                } else {
                    tape.concat_cols(&cols)?
                })
            }
            _ => None,
        };

        let wide = match &self.wide {
            WideIds::None => None,
            WideIds::Lr { table, bias } => Some(parts::lr_logit(
                tape,
                binding.var(*table),
                binding.var(*bias),
                &all_rows,
                &all_weights,
                fields,
            )?),
            WideIds::Fm { table, bias } => {
                let (linear, _) = parts::lr_logit(
                    tape,
                    binding.var(*table),
                    binding.var(*bias),
                    &all_rows,
                    &all_weights,
                    fields,
                )?;
                Some(parts::fm_logit(
                    tape,
                    linear,
                    stack.expect("fm has a stack"),
                    fields,
                    d,
                )?)
            }
            WideIds::Cross { layers, head } => {
                let params = CrossParams {
                    layers: layers
                        .iter()
                        .map(|(w, b)| (binding.var(*w), binding.var(*b)))
                        .collect(),
                    head_weight: binding.var(head.weight),
                    head_bias: binding.var(head.bias),
                };
                Some(parts::crossnet_logit(
                    tape,
                    deep_input.expect("cross has input"),
                    &params,
                )?)
            }
            WideIds::Cin { layers, head } => {
                let params = CinParams {
                    layers: layers.iter().map(|w| binding.var(*w)).collect(),
                    head_weight: binding.var(head.weight),
                    head_bias: binding.var(head.bias),
                };
                Some(parts::cin_logit(
                    tape,
                    stack.expect("cin has a stack"),
                    d,
                    &params,
                )?)
            }
        };

        let deep = match (&self.deep, &self.spec.deep) {
            (Some(ids), Some(dp)) => {
                let params = MlpParams {
                    layers: ids
                        .layers
                        .iter()
                        .map(|(w, b)| (binding.var(*w), binding.var(*b)))
                        .collect(),
                    head_weight: binding.var(ids.head.weight),
                    head_bias: binding.var(ids.head.bias),
                };
                let rng = match mode {
                    Mode::Training(r) => Some(r),
                    Mode::Inference => None,
                };
                Some(parts::mlp_logit(
                    tape,
                    deep_input.expect("deep part has input"),
                    &params,
                    dp.activation,
                    dp.dropout,
                    rng,
                )?)
            }
            _ => None,
        };

        let (logit, hint) = match (wide, deep) {
            (Some((wl, _)), Some((dl, dh))) => (tape.add(wl, dl)?, dh),
            (Some((wl, wh)), None) => (wl, wh),
            (None, Some((dl, dh))) => (dl, dh),
            (None, None) => unreachable!("validated spec has a part"),
        };
        Ok(Forward {
            logit,
            hint,
            wide_logit: wide.map(|w| w.0),
            deep_logit: deep.map(|d| d.0),
            binding,
        })
    }

    /// Inference logits for one batch.
    pub fn logits(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, Mode::Inference)?;
        Ok(tape.value(out.logit).to_vec())
    }

    /// Inference logits and hint vectors (row-major `[B, hint_dim]`).
    pub fn logits_and_hints(&self, batch: &Batch) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, Mode::Inference)?;
        Ok((
            tape.value(out.logit).to_vec(),
            tape.value(out.hint).to_vec(),
        ))
    }

    pub fn logit(&self, sample: &EncodedSample) -> Result<f64> {
        let batch = Batch {
            size: 1,
            categorical: sample.categorical.clone(),
            numeric: sample.numeric.clone(),
            labels: None,
        };
        Ok(self.logits(&batch)?[0])
    }

    /// `sigmoid(phi(x))`.
    pub fn predict(&self, sample: &EncodedSample) -> Result<f64> {
        Ok(sigmoid(self.logit(sample)?))
    }

    /// Inference logits for every sample, in dataset order. Reads no labels.
    pub fn logits_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(data.len());
        for batch in data.input_batches(PREDICT_BATCH, Order::Sequential)? {
            out.extend(self.logits(&batch)?);
        }
        Ok(out)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self
            .logits_dataset(data)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Replaces all parameter values; the store must come from a model with
    /// the same spec and layout.
    pub fn load_params(&mut self, store: &ParamStore) -> Result<()> {
        self.params.copy_values_from(store)
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let v = t.values();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = v[i * c + j];
        }
    }
    Tensor::new(&[c, r], out).expect("shape matches")
}

#[cfg(test)]
mod tests;
