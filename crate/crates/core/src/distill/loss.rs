//! Distillation losses in two forms: plain functions over slices, and tape
//! builders that record the same arithmetic for backpropagation.
//!
//! Teacher quantities always enter as `&[f64]` snapshots, so no tape ever
//! holds a path back to teacher parameters.

use crate::error::{Error, Result};
use crate::tensor::{bce_term, sigmoid, Tape, Var};

use super::gate::{HintProjector, TeacherGate};

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::shape(format!("{what}: lengths {a} and {b}")));
    }
    Ok(())
}

/// Mean clamped cross-entropy of `probs` against soft `targets` in `[0, 1]`.
pub fn cross_entropy(targets: &[f64], probs: &[f64]) -> Result<f64> {
    check_len("cross_entropy", targets.len(), probs.len())?;
    let total: f64 = targets
        .iter()
        .zip(probs)
        .map(|(&y, &p)| bce_term(y, p))
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mean binary cross-entropy against hard labels.
pub fn bce_loss(labels: &[f64], probs: &[f64]) -> Result<f64> {
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::data(format!("label {y} is not 0 or 1")));
    }
    cross_entropy(labels, probs)
}

/// `sigmoid(z / tau)` computed as `sigmoid(z * (1 / tau))`, matching the tape.
pub fn soften(z: f64, tau: f64) -> f64 {
    sigmoid(z * (1.0 / tau))
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 1.0 && tau.is_finite()) {
        return Err(Error::invalid(format!(
            "temperature {tau} must be finite and >= 1"
        )));
    }
    Ok(())
}

/// `CE(sigmoid(z_T / tau), sigmoid(z_S / tau))`, mean over the batch.
pub fn soft_label_loss(teacher: &[f64], student: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_len("soft_label_loss", teacher.len(), student.len())?;
    let targets: Vec<f64> = teacher.iter().map(|&z| soften(z, tau)).collect();
    let probs: Vec<f64> = student.iter().map(|&z| soften(z, tau)).collect();
    cross_entropy(&targets, &probs)
}

/// `||W v_T - v_S||^2` averaged over a batch of row-major hints
/// (`teacher: [B, m]`, `student: [B, n]`).
pub fn hint_loss(teacher: &[f64], student: &[f64], projector: &HintProjector) -> Result<f64> {
    let (m, n) = (projector.teacher_dim(), projector.student_dim());
    if teacher.len() % m != 0
        || student.len() % n != 0
        || teacher.len() / m != student.len() / n
        || teacher.is_empty()
    {
        return Err(Error::shape(format!(
            "hint_loss: {} teacher values (dim {m}) and {} student values (dim {n})",
            teacher.len(),
            student.len()
        )));
    }
    let batch = teacher.len() / m;
    let w = projector.weight();
    let mut total = 0.0;
    for b in 0..batch {
        let vt = &teacher[b * m..(b + 1) * m];
        let vs = &student[b * n..(b + 1) * n];
        for j in 0..n {
            let proj: f64 = (0..m).map(|i| vt[i] * w[i * n + j]).sum();
            let d = proj - vs[j];
            total += d * d;
        }
    }
    Ok(total / batch as f64)
}

/// Softmax over `w_i z_i + b_i`, one teacher logit per entry.
pub fn gate_weights(teacher_logits: &[f64], gate: &TeacherGate) -> Result<Vec<f64>> {
    check_len("gate_weights", teacher_logits.len(), gate.teachers())?;
    let (w, b) = (gate.weight(), gate.bias());
    let scores: Vec<f64> = teacher_logits
        .iter()
        .enumerate()
        .map(|(i, z)| w[i] * z + b[i])
        .collect();
    Ok(softmax(&scores))
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// `sum_i alpha_i z_i`.
pub fn ensemble_teacher_logit(teacher_logits: &[f64], alpha: &[f64]) -> Result<f64> {
    check_len("ensemble_teacher_logit", teacher_logits.len(), alpha.len())?;
    Ok(teacher_logits.iter().zip(alpha).map(|(z, a)| z * a).sum())
}

/// `gamma * ce + beta * kd`; with `beta == 0` the KD term is not evaluated.
pub fn student_loss(ce: f64, kd: f64, beta: f64, gamma: f64) -> f64 {
    if beta == 0.0 {
        gamma * ce
    } else {
        gamma * ce + beta * kd
    }
}

/// Records the soft-label loss against a fixed teacher logit per sample.
pub fn tape_soft_label(
    tape: &mut Tape<'_>,
    student_logit: Var,
    teacher: &[f64],
    tau: f64,
) -> Result<Var> {
    check_tau(tau)?;
    let targets = teacher.iter().map(|&z| soften(z, tau)).collect();
    let scaled = tape.scale(student_logit, 1.0 / tau);
    let probs = tape.sigmoid(scaled);
    tape.bce(probs, targets)
}

/// Soft-label loss whose teacher logit is itself recorded (the gated
/// ensemble), so the gate receives a gradient through the target.
pub fn tape_soft_label_var(
    tape: &mut Tape<'_>,
    student_logit: Var,
    teacher: Var,
    tau: f64,
) -> Result<Var> {
    check_tau(tau)?;
    let s = tape.scale(student_logit, 1.0 / tau);
    let probs = tape.sigmoid(s);
    let t = tape.scale(teacher, 1.0 / tau);
    let targets = tape.sigmoid(t);
    tape.bce_var(probs, targets)
}

/// Per-sample gated ensemble logit. `teacher` is `[B, M]` row-major;
/// returns `([B] logit, [B, M] alpha)`.
pub fn tape_gate(
    tape: &mut Tape<'_>,
    teacher: &[f64],
    teachers: usize,
    weight: Var,
    bias: Var,
) -> Result<(Var, Var)> {
    let batch = teacher.len() / teachers;
    let z = tape.constant_from(&[batch, teachers], teacher.to_vec())?;
    let scores = tape.scale_cols(z, weight)?;
    let scores = tape.add_bias(scores, bias)?;
    let alpha = tape.softmax_rows(scores)?;
    let weighted = tape.mul(alpha, z)?;
    Ok((tape.reduce_sum(weighted, Some(1))?, alpha))
}

/// Per-sample `||W v_T - v_S||^2` as a `[B]` vector.
pub fn tape_hint_per_sample(
    tape: &mut Tape<'_>,
    student_hint: Var,
    teacher: &[f64],
    projector: Var,
) -> Result<Var> {
    let (m, n) = (tape.shape(projector)[0], tape.shape(projector)[1]);
    let batch = tape.shape(student_hint)[0];
    if teacher.len() != batch * m || tape.shape(student_hint) != [batch, n] {
        return Err(Error::shape(format!(
            "hint dims: teacher {} values for [{batch}, {m}], student {:?}, projector [{m}, {n}]",
            teacher.len(),
            tape.shape(student_hint)
        )));
    }
    let vt = tape.constant_from(&[batch, m], teacher.to_vec())?;
    let proj = tape.matmul(vt, projector)?;
    let diff = tape.sub(proj, student_hint)?;
    let sq = tape.square(diff);
    tape.reduce_sum(sq, Some(1))
}

/// Batch mean of [`tape_hint_per_sample`].
pub fn tape_hint(
    tape: &mut Tape<'_>,
    student_hint: Var,
    teacher: &[f64],
    projector: Var,
) -> Result<Var> {
    let per = tape_hint_per_sample(tape, student_hint, teacher, projector)?;
    tape.mean(per)
}

/// `gamma * ce + beta * kd`, recorded. A `None` KD term (or `beta == 0`)
/// leaves `ce` untouched when `gamma == 1`.
pub fn tape_student_loss(
    tape: &mut Tape<'_>,
    ce: Var,
    kd: Option<Var>,
    beta: f64,
    gamma: f64,
) -> Result<Var> {
    let ce_part = if gamma == 1.0 {
        ce
    } else {
        tape.scale(ce, gamma)
    };
    match kd {
        Some(kd) if beta != 0.0 => {
            let kd_part = tape.scale(kd, beta);
            tape.add(ce_part, kd_part)
        }
        _ => Ok(ce_part),
    }
}
