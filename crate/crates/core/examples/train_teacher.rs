//! Trains each zoo model on planted synthetic data and reports test AUC and
//! log loss next to the generator's own (Bayes) AUC.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::data::DatasetSplit;
use ctrkd::model::ModelSpec;
use ctrkd::train::{auc, logloss, train_teacher, AdamConfig, TrainConfig};

fn main() -> ctrkd::Result<()> {
    let (data, truth) = generate(&SyntheticConfig {
        samples: 40_000,
        interaction_scale: 2.5,
        ..SyntheticConfig::default()
    })?;
    let split = DatasetSplit::random(0.8, 0.1, 0.1, 0).apply(data.len(), None)?;
    let (train, val, test) = (
        data.subset(&split.train),
        data.subset(&split.val),
        data.subset(&split.test),
    );
    let bayes: Vec<f64> = (0..test.len())
        .map(|i| truth.logit(&test.sample(i)))
        .collect();
    println!("bayes      auc {:.4}", auc(&bayes, test.labels())?);

    let cfg = TrainConfig {
        batch_size: 256,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
    .with_seed(1);
    let zoo = [
        ("lr", ModelSpec::lr()),
        ("fm", ModelSpec::fm(8)),
        ("dnn", ModelSpec::dnn(&[64, 64], 0.0, 8)),
        ("wide&deep", ModelSpec::wide_deep(&[64, 64], 0.0, 8)),
        ("deepfm", ModelSpec::deepfm(&[64, 64], 0.0, 8)),
        ("dcn", ModelSpec::dcn(2, &[64, 64], 0.0, 8)),
        ("xdeepfm", ModelSpec::xdeepfm(&[8], &[64, 64], 0.0, 8)),
    ];
    for (name, spec) in zoo {
        let out = train_teacher(&spec, &train, &val, &cfg)?;
        let p = out.model.predict_dataset(&test)?;
        println!(
            "{name:<10} auc {:.4}  logloss {:.4}  best epoch {:?} of {}",
            auc(&p, test.labels())?,
            logloss(&p, test.labels())?,
            out.best_epoch,
            out.record.len()
        );
    }
    Ok(())
}
