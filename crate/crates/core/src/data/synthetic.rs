//! Click logs drawn from a known second-order interaction function.
//!
//! Each categorical value carries a scalar weight and a latent vector; the
//! true logit of a sample is `bias + sum_f w_f + sum_{f<g} <u_f, u_g> +
//! sum_k c_k x_k`, and the label is a Bernoulli draw from its sigmoid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, EncodedSample, FeatureLayout};
use crate::error::{Error, Result};
use crate::tensor::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub samples: usize,
    /// Distinct values per categorical field (index 0 stays free for UNK).
    pub field_values: Vec<usize>,
    pub num_numeric: usize,
    pub latent_dim: usize,
    pub first_order_scale: f64,
    pub interaction_scale: f64,
    pub bias: f64,
    /// Values are drawn as `floor(V * r^skew)` for uniform `r`, so larger
    /// skew concentrates mass on low indices.
    pub skew: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            samples: 100_000,
            field_values: vec![40; 10],
            num_numeric: 2,
            latent_dim: 4,
            first_order_scale: 0.3,
            interaction_scale: 1.0,
            bias: -0.5,
            skew: 1.5,
            seed: 2020,
        }
    }
}

/// The generating function, kept so tests can score the Bayes-optimal model.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    weights: Vec<Vec<f64>>,
    latents: Vec<Vec<Vec<f64>>>,
    numeric_weights: Vec<f64>,
    bias: f64,
}

impl GroundTruth {
    pub fn logit(&self, s: &EncodedSample) -> f64 {
        let mut z = self.bias;
        let k = self
            .latents
            .first()
            .and_then(|f| f.first())
            .map_or(0, Vec::len);
        let mut total = vec![0.0; k];
        let mut squares = 0.0;
        for (f, &idx) in s.categorical.iter().enumerate() {
            let v = idx as usize - 1;
            z += self.weights[f][v];
            for (t, u) in total.iter_mut().zip(&self.latents[f][v]) {
                *t += u;
                squares += u * u;
            }
        }
        z += 0.5 * (total.iter().map(|t| t * t).sum::<f64>() - squares);
        z + s
            .numeric
            .iter()
            .zip(&self.numeric_weights)
            .map(|(x, c)| x * c)
            .sum::<f64>()
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<(Dataset, GroundTruth)> {
    if cfg.field_values.is_empty() || cfg.field_values.contains(&0) {
        return Err(Error::invalid(
            "every synthetic field needs at least one value",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w_dist =
        Normal::new(0.0, cfg.first_order_scale).map_err(|e| Error::invalid(e.to_string()))?;
    let u_sd = cfg.interaction_scale
        / (cfg.latent_dim.max(1) as f64).sqrt()
        / (cfg.field_values.len() as f64).sqrt();
    let u_dist = Normal::new(0.0, u_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let weights: Vec<Vec<f64>> = cfg
        .field_values
        .iter()
        .map(|&v| (0..v).map(|_| w_dist.sample(&mut rng)).collect())
        .collect();
    let latents: Vec<Vec<Vec<f64>>> = cfg
        .field_values
        .iter()
        .map(|&v| {
            (0..v)
                .map(|_| {
                    (0..cfg.latent_dim)
                        .map(|_| u_dist.sample(&mut rng))
                        .collect()
                })
                .collect()
        })
        .collect();
    let numeric_weights: Vec<f64> = (0..cfg.num_numeric)
        .map(|_| w_dist.sample(&mut rng))
        .collect();
    let truth = GroundTruth {
        weights,
        latents,
        numeric_weights,
        bias: cfg.bias,
    };
    let layout = FeatureLayout::new(
        cfg.field_values.iter().map(|v| v + 1).collect(),
        cfg.num_numeric,
    );
    let mut ds = Dataset::new(layout);
    for _ in 0..cfg.samples {
        let categorical = cfg
            .field_values
            .iter()
            .map(|&v| {
                let r: f64 = rng.random();
                ((v as f64 * r.powf(cfg.skew)) as usize).min(v - 1) as u32 + 1
            })
            .collect();
        let numeric = (0..cfg.num_numeric)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let mut s = EncodedSample {
            categorical,
            numeric,
            label: 0,
        };
        let p = sigmoid(truth.logit(&s));
        s.label = u8::from(rng.random::<f64>() < p);
        ds.push(&s)?;
    }
    Ok((ds, truth))
}
