//! Hint regression: the student's last hidden layer is pulled toward a
//! learned linear projection of the teacher's.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::data::{Dataset, DatasetSplit};
use ctrkd::distill::{DistillConfig, HINT_BETA_MAX};
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
    let teacher = train_teacher(
        &ModelSpec::dnn(&[64, 32], 0.0, 8),
        &train,
        &val,
        &cfg.with_seed(7),
    )?;
    println!("teacher hint dim {}", teacher.model.hint_dim());

    let merged = Dataset::concat(&[&train, &val])?;
    for beta in [1e-5, 1e-4, HINT_BETA_MAX] {
        let out = train_student_pretrain(
            &ModelSpec::dnn(&[64], 0.0, 8),
            std::slice::from_ref(&teacher.model),
            &DistillConfig::hint(beta),
            StudentData {
                train: &merged,
                val: None,
            },
            &cfg.with_seed(1),
        )?;
        let w = &out.projectors[0];
        println!(
            "beta {beta:e}: auc {:.4}, projector [{} x {}], |W| {:.3}",
            auc(&out.model.predict_dataset(&test)?, test.labels())?,
            w.teacher_dim(),
            w.student_dim(),
            w.weight().iter().map(|x| x * x).sum::<f64>().sqrt()
        );
    }
    Ok(())
}
