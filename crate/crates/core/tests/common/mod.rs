//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use ctrkd::data::{Batch, FeatureLayout};
use ctrkd::model::{Mode, Model, ModelSpec};
use ctrkd::tensor::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// The seven zoo members at gradient-check size.
pub fn zoo() -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("LR", ModelSpec::lr()),
        ("FM", ModelSpec::fm(4)),
        ("DNN", ModelSpec::dnn(&[16, 16], 0.0, 4)),
        ("Wide&Deep", ModelSpec::wide_deep(&[16, 16], 0.0, 4)),
        ("DeepFM", ModelSpec::deepfm(&[16, 16], 0.0, 4)),
        ("DCN", ModelSpec::dcn(2, &[16, 16], 0.0, 4)),
        ("xDeepFM", ModelSpec::xdeepfm(&[4], &[16, 16], 0.0, 4)),
    ]
}

pub fn small_layout() -> FeatureLayout {
    FeatureLayout::new(vec![5, 7, 3, 4], 2)
}

pub fn random_batch(layout: &FeatureLayout, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categorical = (0..n)
        .flat_map(|_| {
            layout
                .vocab_sizes
                .iter()
                .map(|&v| rng.random_range(0..v as u32))
                .collect::<Vec<_>>()
        })
        .collect();
    let numeric = (0..n * layout.num_numeric)
        .map(|_| rng.random_range(0.0..3.0))
        .collect();
    let labels = (0..n).map(|i| (i % 2) as f64).collect();
    Batch {
        size: n,
        categorical,
        numeric,
        labels: Some(labels),
    }
}

/// Model with every parameter moved away from its (often zero) init so
/// that no gradient is trivially zero.
pub fn perturbed_model(spec: &ModelSpec, layout: &FeatureLayout, seed: u64) -> Model {
    let mut m = Model::new(spec.clone(), layout.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in m.params_mut().iter_mut() {
        for v in p.tensor.values_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    m
}

fn bce(model: &Model, batch: &Batch) -> f64 {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, batch, Mode::Inference).unwrap();
    let p = tape.sigmoid(out.logit);
    let loss = tape.bce(p, batch.labels.clone().unwrap()).unwrap();
    tape.value(loss)[0]
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub scalars: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// `|a - n| / max(|a|, |n|)`, with exact agreement (including 0 = 0)
/// counting as zero error.
pub fn rel_err(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / a.abs().max(n.abs())
    }
}

/// Compares the tape gradient of mean BCE against central differences for
/// every scalar parameter.
pub fn grad_check(spec: &ModelSpec, seed: u64) -> GradCheck {
    let layout = small_layout();
    let batch = random_batch(&layout, 2, seed);
    let mut model = perturbed_model(spec, &layout, seed);

    let (grads, binding) = {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, Mode::Inference).unwrap();
        let p = tape.sigmoid(out.logit);
        let loss = tape.bce(p, batch.labels.clone().unwrap()).unwrap();
        (tape.backward(loss).unwrap(), out.binding)
    };
    model.params_mut().zero_grad();
    model.params_mut().accumulate(&binding, &grads).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.tensor.grad().unwrap().to_vec())
        .collect();

    let mut out = GradCheck {
        scalars: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let ids: Vec<_> = model.params().ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let n = model.params().get(id).numel();
        for k in 0..n {
            let orig = model.params().get(id).values()[k];
            model.params_mut().get_mut(id).values_mut()[k] = orig + FD_STEP;
            let up = bce(&model, &batch);
            model.params_mut().get_mut(id).values_mut()[k] = orig - FD_STEP;
            let down = bce(&model, &batch);
            model.params_mut().get_mut(id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let e = rel_err(analytic[pi][k], numeric);
            out.scalars += 1;
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = format!(
                    "{}[{k}] analytic {:.6e} numeric {:.6e}",
                    model.params().param(id).name,
                    analytic[pi][k],
                    numeric
                );
            }
        }
    }
    out
}
