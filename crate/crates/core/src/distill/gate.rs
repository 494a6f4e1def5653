use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamKind, ParamStore, Tensor};

/// Sample-wise softmax gate over teacher logits: one `(w_i, b_i)` per teacher.
///
/// Starts at `w = 0, b = 0`, i.e. as a plain average of the teachers.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherGate {
    params: ParamStore,
    weight: ParamId,
    bias: ParamId,
}

impl TeacherGate {
    pub fn new(teachers: usize) -> Self {
        Self::from_params(vec![0.0; teachers], vec![0.0; teachers]).expect("equal lengths")
    }

    pub fn from_params(weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != bias.len() || weight.is_empty() {
            return Err(Error::shape(
                "gate needs one weight and one bias per teacher",
            ));
        }
        let mut params = ParamStore::new();
        let n = weight.len();
        let weight = params.add("gate.weight", ParamKind::Dense, Tensor::new(&[n], weight)?);
        let bias = params.add("gate.bias", ParamKind::Dense, Tensor::new(&[n], bias)?);
        Ok(TeacherGate {
            params,
            weight,
            bias,
        })
    }

    pub fn teachers(&self) -> usize {
        self.weight().len()
    }

    pub fn weight(&self) -> &[f64] {
        self.params.get(self.weight).values()
    }

    pub fn bias(&self) -> &[f64] {
        self.params.get(self.bias).values()
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

/// Linear map from teacher hints (dim `m`) to student hints (dim `n`),
/// stored as an `[m, n]` matrix so a batch projects as `V_T W`.
#[derive(Debug, Clone, PartialEq)]
pub struct HintProjector {
    params: ParamStore,
    weight: ParamId,
}

impl HintProjector {
    /// Identity when `m == n`, otherwise seeded Glorot-uniform.
    pub fn new(teacher_dim: usize, student_dim: usize, seed: u64) -> Self {
        if teacher_dim == student_dim {
            return Self::identity(teacher_dim);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (teacher_dim + student_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let values = (0..teacher_dim * student_dim)
            .map(|_| dist.sample(&mut rng))
            .collect();
        Self::from_weight(Tensor::new(&[teacher_dim, student_dim], values).expect("shape matches"))
            .expect("rank 2")
    }

    pub fn identity(dim: usize) -> Self {
        let mut values = vec![0.0; dim * dim];
        for i in 0..dim {
            values[i * dim + i] = 1.0;
        }
        Self::from_weight(Tensor::new(&[dim, dim], values).expect("shape matches")).expect("rank 2")
    }

    pub fn from_weight(weight: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || weight.numel() == 0 {
            return Err(Error::shape("hint projector must be a non-empty matrix"));
        }
        let mut params = ParamStore::new();
        let weight = params.add("hint.weight", ParamKind::Dense, weight);
        Ok(HintProjector { params, weight })
    }

    pub fn teacher_dim(&self) -> usize {
        self.tensor().shape()[0]
    }

    pub fn student_dim(&self) -> usize {
        self.tensor().shape()[1]
    }

    pub fn weight(&self) -> &[f64] {
        self.tensor().values()
    }

    pub fn tensor(&self) -> &Tensor {
        self.params.get(self.weight)
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}
