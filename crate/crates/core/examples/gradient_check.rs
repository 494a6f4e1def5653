//! Checks the tape's gradients of a small DeepFM against central differences.

use ctrkd::data::{Batch, FeatureLayout};
use ctrkd::model::{Mode, Model, ModelSpec};
use ctrkd::tensor::Tape;

fn loss(model: &Model, batch: &Batch) -> f64 {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, batch, Mode::Inference).unwrap();
    let p = tape.sigmoid(out.logit);
    let l = tape.bce(p, batch.labels.clone().unwrap()).unwrap();
    tape.value(l)[0]
}

fn main() -> ctrkd::Result<()> {
    let layout = FeatureLayout::new(vec![4, 6, 3], 1);
    let batch = Batch {
        size: 3,
        categorical: vec![0, 1, 2, 3, 5, 0, 1, 4, 1],
        numeric: vec![0.5, 1.5, 2.0],
        labels: Some(vec![1.0, 0.0, 1.0]),
    };
    let mut model = Model::new(ModelSpec::deepfm(&[8], 0.0, 3), layout, 7)?;

    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch, Mode::Inference)?;
    let p = tape.sigmoid(out.logit);
    let l = tape.bce(p, batch.labels.clone().unwrap())?;
    let grads = tape.backward(l)?;
    let binding = out.binding;
    drop(tape);
    model.params_mut().zero_grad();
    model.params_mut().accumulate(&binding, &grads)?;

    let h = 1e-5;
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let analytic = model.params().get(id).grad().unwrap().to_vec();
        let mut worst: f64 = 0.0;
        for (k, &a) in analytic.iter().enumerate() {
            let orig = model.params().get(id).values()[k];
            model.params_mut().get_mut(id).values_mut()[k] = orig + h;
            let up = loss(&model, &batch);
            model.params_mut().get_mut(id).values_mut()[k] = orig - h;
            let down = loss(&model, &batch);
            model.params_mut().get_mut(id).values_mut()[k] = orig;
            let n = (up - down) / (2.0 * h);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-12));
        }
        println!(
            "{:<16} {:>4} scalars  max rel err {worst:.2e}",
            model.params().param(id).name,
            analytic.len()
        );
    }
    Ok(())
}
