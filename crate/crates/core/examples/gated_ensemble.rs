//! Three teachers merged in logit space by a learned per-sample softmax
//! gate, then distilled into one student.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::data::{Dataset, DatasetSplit};
use ctrkd::distill::{ensemble_teacher_logit, gate_weights, DistillConfig};
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
    let specs = [
        ("deepfm", ModelSpec::deepfm(&[64, 64], 0.0, 8)),
        ("dcn", ModelSpec::dcn(2, &[64, 64], 0.0, 8)),
        ("fm", ModelSpec::fm(8)),
    ];
    let mut teachers = Vec::new();
    for (i, (name, spec)) in specs.iter().enumerate() {
        let t = train_teacher(spec, &train, &val, &cfg.with_seed(100 + i as u64))?.model;
        println!(
            "{name:<8} auc {:.4}",
            auc(&t.predict_dataset(&test)?, test.labels())?
        );
        teachers.push(t);
    }

    let merged = Dataset::concat(&[&train, &val])?;
    let d = DistillConfig {
        gating: true,
        ..DistillConfig::soft_label(1.0, 0.9)
    };
    let out = train_student_pretrain(
        &ModelSpec::dnn(&[64], 0.0, 8),
        &teachers,
        &d,
        StudentData {
            train: &merged,
            val: None,
        },
        &cfg.with_seed(1),
    )?;
    println!(
        "student  auc {:.4}",
        auc(&out.model.predict_dataset(&test)?, test.labels())?
    );

    let gate = out.gate.expect("gating was on");
    println!("gate w {:?} b {:?}", gate.weight(), gate.bias());
    for i in 0..3 {
        let s = test.sample(i);
        let z: Vec<f64> = teachers
            .iter()
            .map(|t| t.logit(&s))
            .collect::<ctrkd::Result<_>>()?;
        let alpha = gate_weights(&z, &gate)?;
        println!(
            "sample {i}: teacher logits {z:.3?} -> alpha {alpha:.3?} -> {:.3}",
            ensemble_teacher_logit(&z, &alpha)?
        );
    }
    Ok(())
}
