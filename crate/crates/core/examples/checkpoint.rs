//! Saves a trained model with its optimizer state and vocabulary
//! fingerprint, reloads it, and checks the predictions are bit-identical.

use ctrkd::data::synthetic::{generate, SyntheticConfig};
use ctrkd::model::ModelSpec;
use ctrkd::persist::Checkpoint;
use ctrkd::train::{train_teacher, TrainConfig};

fn main() -> ctrkd::Result<()> {
    let (data, _) = generate(&SyntheticConfig {
        samples: 4_000,
        ..SyntheticConfig::default()
    })?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let (train, val) = (data.subset(&idx[..3_500]), data.subset(&idx[3_500..]));
    let cfg = TrainConfig {
        batch_size: 256,
        max_epochs: 3,
        ..TrainConfig::default()
    }
    .with_seed(5);
    let out = train_teacher(&ModelSpec::xdeepfm(&[4], &[32], 0.0, 4), &train, &val, &cfg)?;

    let mut ckpt = Checkpoint::from_model(&out.model, cfg.seed, out.record.len() as u64, None);
    ckpt.adam = Some(out.adam);
    let bytes = ckpt.to_bytes();
    println!(
        "{} bytes, magic {:?}",
        bytes.len(),
        String::from_utf8_lossy(&bytes[..8])
    );

    let dir = std::env::temp_dir().join("ctrkd-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("xdeepfm.ckpt");
    ckpt.save(&path)?;
    let back = Checkpoint::load(&path)?;
    assert_eq!(back, ckpt);
    let model = back.to_model()?;
    let a = out.model.logits_dataset(&val)?;
    let b = model.logits_dataset(&val)?;
    let same = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("{} predictions bit-identical after reload: {same}", a.len());

    let mut corrupt = bytes.clone();
    corrupt[40] ^= 1;
    println!(
        "flipped one bit: {}",
        Checkpoint::from_bytes(&corrupt).unwrap_err()
    );
    Ok(())
}
