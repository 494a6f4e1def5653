//! Distills a DeepFM teacher into a one-layer DNN with soft labels and
//! compares against the same DNN trained on hard labels alone.
//!
//! The distilled student never looks at validation labels: early stopping
//! watches the KD loss, so the validation rows join the training set.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::data::{Dataset, DatasetSplit};
use ctrkd::distill::DistillConfig;
use ctrkd::model::ModelSpec;
use ctrkd::train::{
    auc, train_student_pretrain, train_teacher, AdamConfig, StudentData, TrainConfig,
};

fn main() -> ctrkd::Result<()> {
    let (data, _) = generate(&SyntheticConfig {
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
    let cfg = TrainConfig {
        batch_size: 256,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let student = ModelSpec::dnn(&[64], 0.0, 8);

    let teacher = train_teacher(
        &ModelSpec::deepfm(&[64, 64], 0.0, 8),
        &train,
        &val,
        &cfg.with_seed(101),
    )?;
    let plain = train_teacher(&student, &train, &val, &cfg.with_seed(1))?;
    let merged = Dataset::concat(&[&train, &val])?;
    let test_auc = |m: &ctrkd::model::Model| -> ctrkd::Result<f64> {
        auc(&m.predict_dataset(&test)?, test.labels())
    };
    println!("teacher        auc {:.4}", test_auc(&teacher.model)?);
    println!("student only   auc {:.4}", test_auc(&plain.model)?);
    for (tau, beta) in [(1.0, 0.5), (1.0, 0.9), (3.0, 0.9)] {
        let kd = train_student_pretrain(
            &student,
            std::slice::from_ref(&teacher.model),
            &DistillConfig::soft_label(tau, beta),
            StudentData {
                train: &merged,
                val: None,
            },
            &cfg.with_seed(1),
        )?;
        println!(
            "kd tau={tau} beta={beta} auc {:.4} ({} epochs)",
            test_auc(&kd.model)?,
            kd.record.len()
        );
    }
    Ok(())
}
