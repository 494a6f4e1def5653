use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Embedding tables are the only parameters that take L2 regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Named collection of trainable tensors owned by one model (or gate,
/// or projector).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Tape handles of every parameter in a store, in [`ParamId`] order.
#[derive(Debug, Clone)]
pub struct ParamBinding {
    vars: Vec<Var>,
}

impl ParamBinding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            kind,
            tensor,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Records every parameter on `tape` by reference.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> ParamBinding {
        ParamBinding {
            vars: self.params.iter().map(|p| tape.param(&p.tensor)).collect(),
        }
    }

    /// Adds the gradients of a bound backward pass into each gradient slot.
    pub fn accumulate(&mut self, binding: &ParamBinding, grads: &Gradients) -> Result<()> {
        if binding.vars.len() != self.params.len() {
            return Err(Error::shape("binding does not belong to this store"));
        }
        for (p, &v) in self.params.iter_mut().zip(&binding.vars) {
            match grads.get(v) {
                Some(g) => p.tensor.accumulate_grad(g)?,
                None => {
                    let zeros = vec![0.0; p.tensor.numel()];
                    p.tensor.accumulate_grad(&zeros)?
                }
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.clear_grad());
    }

    /// Adds the gradient of `lambda * ||E||^2` for every embedding table.
    pub fn apply_l2(&mut self, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for p in self
            .params
            .iter_mut()
            .filter(|p| p.kind == ParamKind::Embedding)
        {
            let decay: Vec<f64> = p.tensor.values().iter().map(|w| 2.0 * lambda * w).collect();
            p.tensor
                .accumulate_grad(&decay)
                .expect("decay has the tensor's length");
        }
    }

    /// Copies values (not gradients) from a store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::shape("parameter stores differ in size"));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.tensor.shape() != src.tensor.shape() {
                return Err(Error::shape(format!(
                    "parameter `{}` differs in shape",
                    dst.name
                )));
            }
            dst.tensor.values_mut().copy_from_slice(src.tensor.values());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.tensor.all_finite())
    }
}
