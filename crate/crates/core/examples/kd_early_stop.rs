//! The two early-stop modes side by side. With `val_auc` the student peeks
//! at validation labels; with `kd_loss` it monitors the KD loss on inputs
//! held aside from training and the validation labels are never read.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::data::DatasetSplit;
use ctrkd::distill::DistillConfig;
use ctrkd::model::ModelSpec;
use ctrkd::train::{
    train_student_pretrain, train_teacher, EarlyStopMonitor, MonitorMode, StudentData, TrainConfig,
};

fn main() -> ctrkd::Result<()> {
    let mut m = EarlyStopMonitor::new(MonitorMode::ValAucMax);
    for v in [0.70, 0.72, 0.71, 0.72, 0.715] {
        println!("val auc {v}: {:?}", m.observe(v));
    }
    println!("best epoch {:?}\n", m.best_epoch());

    let (data, _) = generate(&SyntheticConfig {
        samples: 10_000,
        ..SyntheticConfig::default()
    })?;
    let split = DatasetSplit::random(0.8, 0.1, 0.1, 0).apply(data.len(), None)?;
    let (train, val) = (data.subset(&split.train), data.subset(&split.val));
    let cfg = TrainConfig {
        batch_size: 256,
        ..TrainConfig::default()
    };
    let teacher = train_teacher(&ModelSpec::fm(8), &train, &val, &cfg.with_seed(3))?.model;

    for mode in [MonitorMode::ValAucMax, MonitorMode::KdLossMin] {
        let before = val.label_reads();
        let out = train_student_pretrain(
            &ModelSpec::dnn(&[16], 0.0, 4),
            std::slice::from_ref(&teacher),
            &DistillConfig {
                monitor: mode,
                ..DistillConfig::soft_label(1.0, 0.5)
            },
            StudentData {
                train: &train,
                val: Some(&val),
            },
            &cfg.with_seed(1),
        )?;
        println!(
            "{mode:?}: {} epochs, best {:?}, validation label reads {}",
            out.record.len(),
            out.best_epoch,
            val.label_reads() - before
        );
    }
    Ok(())
}
