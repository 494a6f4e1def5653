//! Forward functions of the individual wide and deep components.
//!
//! Every function works on a whole batch and returns the component's scalar
//! logit per sample (`[B]`) together with the vector it feeds its head (or,
//! for FM and LR, the vector whose sum is the logit).

use rand_chacha::ChaCha8Rng;

use super::spec::Activation;
use crate::error::Result;
use crate::tensor::{Tape, Var};

/// `[B, 1]` head output collapsed to `[B]`.
fn head(tape: &mut Tape<'_>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let rows = tape.shape(x)[0];
    let z = tape.matmul(x, weight)?;
    let z = tape.add_bias(z, bias)?;
    tape.reshape(z, &[rows])
}

/// `bias + sum_f w[row_f] * x_f` over the active rows of a scalar-weight table.
///
/// `rows`/`weights` list `fields` entries per sample; categorical entries
/// carry weight 1, numeric entries carry their value.
pub fn lr_logit(
    tape: &mut Tape<'_>,
    table: Var,
    bias: Var,
    rows: &[usize],
    weights: &[f64],
    fields: usize,
) -> Result<(Var, Var)> {
    let batch = rows.len() / fields;
    let w = tape.gather(table, rows.to_vec(), Some(weights.to_vec()))?;
    let per_field = tape.reshape(w, &[batch, fields])?;
    let s = tape.reduce_sum(per_field, Some(1))?;
    Ok((tape.add(s, bias)?, per_field))
}

/// Linear term plus `sum_{i<j} <v_i, v_j>`, the latter evaluated as
/// `0.5 * sum_k ((sum_i v_ik)^2 - sum_i v_ik^2)`.
///
/// `stack` is `[B, fields * dim]` with field vectors laid out contiguously.
pub fn fm_logit(
    tape: &mut Tape<'_>,
    linear: Var,
    stack: Var,
    fields: usize,
    dim: usize,
) -> Result<(Var, Var)> {
    let batch = tape.shape(stack)[0];
    let cube = tape.reshape(stack, &[batch, fields, dim])?;
    let total = tape.reduce_sum(cube, Some(1))?;
    let total_sq = tape.square(total);
    let sq = tape.square(cube);
    let sum_sq = tape.reduce_sum(sq, Some(1))?;
    let diff = tape.sub(total_sq, sum_sq)?;
    let interaction = tape.scale(diff, 0.5);
    let pairwise = tape.reduce_sum(interaction, Some(1))?;
    Ok((tape.add(linear, pairwise)?, interaction))
}

pub struct MlpParams {
    pub layers: Vec<(Var, Var)>,
    pub head_weight: Var,
    pub head_bias: Var,
}

/// Hidden stack followed by a scalar head. The returned hint is the last
/// hidden activation, taken before dropout.
pub fn mlp_logit(
    tape: &mut Tape<'_>,
    input: Var,
    params: &MlpParams,
    activation: Activation,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Var)> {
    let mut rng = rng;
    let mut h = input;
    let mut hint = input;
    for &(w, b) in &params.layers {
        let z = tape.matmul(h, w)?;
        let z = tape.add_bias(z, b)?;
        let a = match activation {
            Activation::Relu => tape.relu(z),
            Activation::Sigmoid => tape.sigmoid(z),
        };
        hint = a;
        h = match rng.as_deref_mut() {
            Some(r) => tape.dropout(a, dropout, true, r)?,
            None => a,
        };
    }
    Ok((head(tape, h, params.head_weight, params.head_bias)?, hint))
}

pub struct CrossParams {
    pub layers: Vec<(Var, Var)>,
    pub head_weight: Var,
    pub head_bias: Var,
}

/// `x_{l+1} = x_0 (x_l . w_l) + b_l + x_l`, then a linear head on `x_L`.
pub fn crossnet_logit(tape: &mut Tape<'_>, x0: Var, params: &CrossParams) -> Result<(Var, Var)> {
    let x_last = cross_layers(tape, x0, &params.layers)?;
    Ok((
        head(tape, x_last, params.head_weight, params.head_bias)?,
        x_last,
    ))
}

pub fn cross_layers(tape: &mut Tape<'_>, x0: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut x = x0;
    for &(w, b) in layers {
        let xw = tape.matmul(x, w)?;
        let t = tape.scale_rows(x0, xw)?;
        let t = tape.add_bias(t, b)?;
        x = tape.add(t, x)?;
    }
    Ok(x)
}

pub struct CinParams {
    pub layers: Vec<Var>,
    pub head_weight: Var,
    pub head_bias: Var,
}

/// Compressed interaction layers over `stack` (`[B, fields * dim]`), each
/// sum-pooled over the embedding axis; the pooled maps go through a head.
pub fn cin_logit(
    tape: &mut Tape<'_>,
    stack: Var,
    dim: usize,
    params: &CinParams,
) -> Result<(Var, Var)> {
    let batch = tape.shape(stack)[0];
    let mut prev = stack;
    let mut pooled = Vec::with_capacity(params.layers.len());
    for &w in &params.layers {
        let maps = tape.shape(w)[0];
        let out = tape.cin_layer(prev, stack, w, dim)?;
        let cube = tape.reshape(out, &[batch, maps, dim])?;
        pooled.push(tape.reduce_sum(cube, Some(2))?);
        prev = out;
    }
    let p = if pooled.len() == 1 {
        pooled[0]
    } else {
        tape.concat_cols(&pooled)?
    };
    Ok((head(tape, p, params.head_weight, params.head_bias)?, p))
}
