//! Co-training: teacher and student step on the same batches. The hook sees
//! the teacher after each of its updates; the student's KD term never feeds
//! gradient back into it.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::data::DatasetSplit;
use ctrkd::distill::{DistillConfig, Scheme};
use ctrkd::model::ModelSpec;
use ctrkd::train::{auc, train_student_cotrain, AdamConfig, StudentData, TrainConfig};

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
    let distill = DistillConfig {
        scheme: Scheme::Cotrain,
        ..DistillConfig::soft_label(1.0, 0.5)
    };
    let mut steps = 0;
    let mut hook = |_: &ctrkd::data::Batch, _: &ctrkd::model::Model| steps += 1;
    let out = train_student_cotrain(
        &ModelSpec::dnn(&[64], 0.0, 8),
        &ModelSpec::deepfm(&[64, 64], 0.0, 8),
        &distill,
        StudentData {
            train: &train,
            val: Some(&val),
        },
        &cfg.with_seed(11),
        &cfg.with_seed(1),
        Some(&mut hook),
    )?;
    println!(
        "{steps} teacher steps over {} epochs",
        out.student.record.len()
    );
    for (name, m) in [("teacher", &out.teacher), ("student", &out.student.model)] {
        println!(
            "{name} auc {:.4}",
            auc(&m.predict_dataset(&test)?, test.labels())?
        );
    }
    Ok(())
}
