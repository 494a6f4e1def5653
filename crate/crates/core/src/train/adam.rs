use crate::error::{Error, Result};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over every tensor of one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        Adam {
            config,
            steps: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Rebuilds an optimizer from saved moments.
    pub fn from_state(
        config: AdamConfig,
        steps: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::shape("Adam moments differ in layout"));
        }
        Ok(Adam {
            config,
            steps,
            m,
            v,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update from the accumulated gradients, then clears them.
    /// Every parameter must carry a gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::shape(
                "optimizer state does not match the parameter store",
            ));
        }
        for (p, m) in store.iter().zip(&self.m) {
            if p.tensor.grad().is_none() {
                return Err(Error::MissingGradient(p.name.clone()));
            }
            if p.tensor.numel() != m.len() {
                return Err(Error::shape(format!(
                    "optimizer state for `{}` has the wrong size",
                    p.name
                )));
            }
        }
        self.steps += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = i32::try_from(self.steps).unwrap_or(i32::MAX);
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.tensor.grad().expect("checked above").to_vec();
            let w = p.tensor.values_mut();
            for i in 0..w.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.tensor.clear_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamKind, Tensor};

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add(
            "w",
            ParamKind::Dense,
            Tensor::new(&[values.len()], values.to_vec()).unwrap(),
        );
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(&[0.3, -2.0]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..3 {
            s.iter_mut()
                .next()
                .unwrap()
                .tensor
                .accumulate_grad(&[0.0, 0.0])
                .unwrap();
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.iter().next().unwrap().tensor.values(), &[0.3, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store(&[1.0, 1.0]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        s.iter_mut()
            .next()
            .unwrap()
            .tensor
            .accumulate_grad(&[5.0, -0.02])
            .unwrap();
        adam.step(&mut s).unwrap();
        let w = s.iter().next().unwrap().tensor.values().to_vec();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (1.0 + 1e-3)).abs() < 1e-9);
        assert!(s.iter().next().unwrap().tensor.grad().is_none());
    }

    #[test]
    fn three_steps_on_square_match_scalar_oracle() {
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        let mut s = store(&[1.0]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..3 {
            let p = s.iter_mut().next().unwrap();
            let g = 2.0 * p.tensor.values()[0];
            p.tensor.accumulate_grad(&[g]).unwrap();
            adam.step(&mut s).unwrap();
        }
        assert!((s.iter().next().unwrap().tensor.values()[0] - w).abs() < 1e-12);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = store(&[1.0]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        assert!(matches!(adam.step(&mut s), Err(Error::MissingGradient(n)) if n == "w"));
        assert_eq!(adam.steps(), 0);
    }
}
