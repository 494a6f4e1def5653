//! Hyperparameter search spaces used for tuning teachers and students.

pub const L2: [f64; 5] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5];
pub const DROPOUT: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const HIDDEN_LAYERS: [usize; 5] = [2, 3, 4, 5, 6];
pub const HIDDEN_WIDTH: [usize; 4] = [300, 400, 500, 600];
/// Cross-network layers and CIN layers.
pub const INTERACTION_DEPTH: [usize; 5] = [1, 2, 3, 4, 5];
pub const TEMPERATURE: [f64; 8] = [1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0];
pub const BETA_STEP: f64 = 0.1;

/// `0.0, 0.1, ..., 1.0` for soft-label `beta` (with `gamma = 1 - beta`).
pub fn soft_label_beta() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
