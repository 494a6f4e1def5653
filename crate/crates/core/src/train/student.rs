use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

use super::supervised::diverged;
use super::{
    auc, plan_epoch, stream, Adam, Decision, EarlyStopMonitor, EpochRecord, Learner, MonitorMode,
    TrainConfig, TrainRecord, PROJECTOR_STREAM, SHUFFLE_STREAM,
};
use crate::data::{Batch, Dataset};
use crate::distill::{
    ensemble_teacher_logit, tape_gate, tape_hint_per_sample, tape_soft_label, tape_soft_label_var,
    tape_student_loss, DistillConfig, HintProjector, KdMethod, TeacherGate,
};
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ModelSpec};
use crate::tensor::{Tape, Var};

/// Student training inputs. `val` is consulted only when the student is
/// monitored by validation AUC; under KD-loss monitoring it is never read,
/// so callers may as well merge it into `train`.
#[derive(Debug, Clone, Copy)]
pub struct StudentData<'d> {
    pub train: &'d Dataset,
    pub val: Option<&'d Dataset>,
}

#[derive(Debug, Clone)]
pub struct StudentOutcome {
    /// Parameters from the best monitored epoch.
    pub model: Model,
    pub gate: Option<TeacherGate>,
    /// One per teacher under hint regression, otherwise empty.
    pub projectors: Vec<HintProjector>,
    pub record: TrainRecord,
    pub best_epoch: Option<usize>,
    pub adam: Adam,
}

#[derive(Debug, Clone)]
pub struct CotrainOutcome {
    /// Teacher after the last step taken (no rollback).
    pub teacher: Model,
    pub student: StudentOutcome,
}

/// Detached teacher quantities for one batch.
struct TeacherOutputs {
    teachers: usize,
    /// `[B, M]` row-major.
    logits: Vec<f64>,
    /// Per teacher, `[B, hint_dim]`; empty unless hints were requested.
    hints: Vec<Vec<f64>>,
}

impl TeacherOutputs {
    fn compute(teachers: &[&Model], batch: &Batch, with_hints: bool) -> Result<Self> {
        let run = |t: &&Model| -> Result<(Vec<f64>, Vec<f64>)> {
            if with_hints {
                t.logits_and_hints(batch)
            } else {
                Ok((t.logits(batch)?, Vec::new()))
            }
        };
        let per: Vec<(Vec<f64>, Vec<f64>)> = if teachers.len() > 1 {
            teachers.par_iter().map(run).collect::<Result<_>>()?
        } else {
            teachers.iter().map(run).collect::<Result<_>>()?
        };
        let m = teachers.len();
        let mut logits = vec![0.0; batch.size * m];
        for (i, (z, _)) in per.iter().enumerate() {
            for (b, &v) in z.iter().enumerate() {
                logits[b * m + i] = v;
            }
        }
        Ok(TeacherOutputs {
            teachers: m,
            logits,
            hints: per.into_iter().map(|(_, h)| h).collect(),
        })
    }

    /// Uniformly weighted ensemble logit per sample.
    fn averaged(&self) -> Result<Vec<f64>> {
        let m = self.teachers;
        let alpha = vec![1.0 / m as f64; m];
        self.logits
            .chunks(m)
            .map(|z| ensemble_teacher_logit(z, &alpha))
            .collect()
    }
}

/// Where teacher outputs come from during student training.
trait TeacherSource {
    /// Called once per training batch, before the student steps.
    fn on_train_batch(&mut self, batch: &Batch, epoch: usize) -> Result<TeacherOutputs>;
    fn outputs(&self, batch: &Batch) -> Result<TeacherOutputs>;
}

struct Frozen<'t> {
    teachers: Vec<&'t Model>,
    hints: bool,
}

impl TeacherSource for Frozen<'_> {
    fn on_train_batch(&mut self, batch: &Batch, _epoch: usize) -> Result<TeacherOutputs> {
        self.outputs(batch)
    }

    fn outputs(&self, batch: &Batch) -> Result<TeacherOutputs> {
        TeacherOutputs::compute(&self.teachers, batch, self.hints)
    }
}

struct CoTeacher<'h> {
    learner: Learner,
    hints: bool,
    hook: Option<&'h mut dyn FnMut(&Batch, &Model)>,
}

impl TeacherSource for CoTeacher<'_> {
    fn on_train_batch(&mut self, batch: &Batch, epoch: usize) -> Result<TeacherOutputs> {
        let loss = self.learner.step(batch)?;
        if !loss.is_finite() {
            return Err(diverged(epoch, format!("co-trained teacher loss {loss}")));
        }
        if let Some(hook) = self.hook.as_mut() {
            hook(batch, self.learner.model());
        }
        self.outputs(batch)
    }

    fn outputs(&self, batch: &Batch) -> Result<TeacherOutputs> {
        TeacherOutputs::compute(&[self.learner.model()], batch, self.hints)
    }
}

struct StudentState {
    learner: Learner,
    gate: Option<(TeacherGate, Adam)>,
    projectors: Vec<(HintProjector, Adam)>,
    distill: DistillConfig,
}

struct AuxVars {
    gate: Option<(Var, Var)>,
    projectors: Vec<Var>,
}

impl StudentState {
    fn new(
        student: Model,
        teacher_hint_dims: &[usize],
        distill: &DistillConfig,
        cfg: &TrainConfig,
    ) -> Self {
        let gate = distill.gating.then(|| {
            let g = TeacherGate::new(teacher_hint_dims.len());
            let adam = Adam::new(g.params(), cfg.adam);
            (g, adam)
        });
        let mut seeds = stream(cfg.seed, PROJECTOR_STREAM);
        let projectors = match distill.method {
            KdMethod::Hint => teacher_hint_dims
                .iter()
                .map(|&m| {
                    let p = HintProjector::new(m, student.hint_dim(), seeds.next_u64());
                    let adam = Adam::new(p.params(), cfg.adam);
                    (p, adam)
                })
                .collect(),
            KdMethod::SoftLabel { .. } => Vec::new(),
        };
        StudentState {
            learner: Learner::new(student, cfg),
            gate,
            projectors,
            distill: distill.clone(),
        }
    }

    fn bind_aux<'a>(
        gate: &'a Option<(TeacherGate, Adam)>,
        projectors: &'a [(HintProjector, Adam)],
        tape: &mut Tape<'a>,
    ) -> (
        AuxVars,
        Option<crate::tensor::ParamBinding>,
        Vec<crate::tensor::ParamBinding>,
    ) {
        let gb = gate.as_ref().map(|(g, _)| g.params().bind(tape));
        let gvars = gate
            .as_ref()
            .zip(gb.as_ref())
            .map(|((g, _), b)| (b.var(g.weight_id()), b.var(g.bias_id())));
        let pbs: Vec<_> = projectors
            .iter()
            .map(|(p, _)| p.params().bind(tape))
            .collect();
        let pvars = projectors
            .iter()
            .zip(&pbs)
            .map(|((p, _), b)| b.var(p.weight_id()))
            .collect();
        (
            AuxVars {
                gate: gvars,
                projectors: pvars,
            },
            gb,
            pbs,
        )
    }

    fn kd_term(
        distill: &DistillConfig,
        tape: &mut Tape<'_>,
        logit: Var,
        hint: Var,
        t: &TeacherOutputs,
        aux: &AuxVars,
    ) -> Result<Var> {
        let m = t.teachers;
        match distill.method {
            KdMethod::SoftLabel { tau } => match aux.gate {
                Some((w, b)) => {
                    let (z, _) = tape_gate(tape, &t.logits, m, w, b)?;
                    tape_soft_label_var(tape, logit, z, tau)
                }
                None => tape_soft_label(tape, logit, &t.averaged()?, tau),
            },
            KdMethod::Hint => {
                let batch = t.logits.len() / m;
                let mut per = Vec::with_capacity(m);
                for (i, &proj) in aux.projectors.iter().enumerate() {
                    let l = tape_hint_per_sample(tape, hint, &t.hints[i], proj)?;
                    per.push(tape.reshape(l, &[batch, 1])?);
                }
                let losses = if m == 1 {
                    per[0]
                } else {
                    tape.concat_cols(&per)?
                };
                let alpha = match aux.gate {
                    Some((w, b)) => tape_gate(tape, &t.logits, m, w, b)?.1,
                    None => tape.constant_from(&[batch, m], vec![1.0 / m as f64; batch * m])?,
                };
                let weighted = tape.mul(alpha, losses)?;
                let total = tape.reduce_sum(weighted, None)?;
                Ok(tape.scale(total, 1.0 / batch as f64))
            }
        }
    }

    /// One joint update of student, gate and projectors; returns `L_S`.
    fn step(&mut self, batch: &Batch, t: &TeacherOutputs) -> Result<f64> {
        let labels = batch.labels()?.to_vec();
        let (beta, gamma) = (self.distill.beta, self.distill.gamma);
        let use_kd = beta != 0.0;
        let Learner { model, dropout, .. } = &mut self.learner;
        let (loss, grads, binding, aux_bindings) = {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, batch, Mode::Training(dropout))?;
            let probs = tape.sigmoid(out.logit);
            let ce = tape.bce(probs, labels)?;
            let (kd, aux_bindings) = if use_kd {
                let (aux, gb, pbs) = Self::bind_aux(&self.gate, &self.projectors, &mut tape);
                let kd = Self::kd_term(&self.distill, &mut tape, out.logit, out.hint, t, &aux)?;
                (Some(kd), Some((gb, pbs)))
            } else {
                (None, None)
            };
            let loss = tape_student_loss(&mut tape, ce, kd, beta, gamma)?;
            let grads = tape.backward(loss)?;
            (tape.value(loss)[0], grads, out.binding, aux_bindings)
        };
        let params = self.learner.model.params_mut();
        params.accumulate(&binding, &grads)?;
        params.apply_l2(self.learner.l2);
        self.learner.adam.step(params)?;
        if let Some((gb, pbs)) = aux_bindings {
            if let (Some((gate, adam)), Some(gb)) = (self.gate.as_mut(), gb) {
                gate.params_mut().accumulate(&gb, &grads)?;
                adam.step(gate.params_mut())?;
            }
            for ((proj, adam), pb) in self.projectors.iter_mut().zip(&pbs) {
                proj.params_mut().accumulate(pb, &grads)?;
                adam.step(proj.params_mut())?;
            }
        }
        Ok(loss)
    }

    /// Inference-mode KD loss on an input-only batch.
    fn kd_value(&self, batch: &Batch, t: &TeacherOutputs) -> Result<f64> {
        let mut tape = Tape::new();
        let out = self
            .learner
            .model
            .forward(&mut tape, batch, Mode::Inference)?;
        let (aux, _, _) = Self::bind_aux(&self.gate, &self.projectors, &mut tape);
        let kd = Self::kd_term(&self.distill, &mut tape, out.logit, out.hint, t, &aux)?;
        Ok(tape.value(kd)[0])
    }
}

fn check_layouts(
    student_layout: &crate::data::FeatureLayout,
    teachers: &[&Model],
    data: &StudentData,
) -> Result<()> {
    for t in teachers {
        if t.layout() != student_layout {
            return Err(Error::invalid(format!(
                "teacher {} and student disagree on the feature layout",
                t.spec().family()
            )));
        }
    }
    if data.train.layout() != student_layout
        || data.val.is_some_and(|v| v.layout() != student_layout)
    {
        return Err(Error::invalid(
            "datasets disagree with the student's feature layout",
        ));
    }
    Ok(())
}

fn run_student(
    mut state: StudentState,
    source: &mut dyn TeacherSource,
    data: StudentData,
    cfg: &TrainConfig,
) -> Result<StudentOutcome> {
    let train = data.train;
    let n = train.len();
    let mode = state.distill.monitor;
    let holdout = match mode {
        MonitorMode::KdLossMin => {
            if n < 2 {
                return Err(Error::data(
                    "KD-loss monitoring needs at least two training samples",
                ));
            }
            ((n as f64 * state.distill.monitor_fraction).ceil() as usize).clamp(1, n - 1)
        }
        MonitorMode::ValAucMax => {
            if data.val.is_none_or(|v| v.is_empty()) {
                return Err(Error::data(
                    "validation-AUC monitoring needs a validation set",
                ));
            }
            0
        }
    };
    let mut order = stream(cfg.seed, SHUFFLE_STREAM);
    let mut monitor = EarlyStopMonitor::with_patience(mode, cfg.patience);
    let mut best = state.learner.model().params().clone();
    let mut best_gate = state.gate.as_ref().map(|(g, _)| g.clone());
    let mut best_proj: Vec<HintProjector> =
        state.projectors.iter().map(|(p, _)| p.clone()).collect();
    let mut record = TrainRecord::default();
    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let plan = plan_epoch(n, &mut order, holdout);
        let mut total = 0.0;
        for (step, rows) in plan.train.chunks(cfg.batch_size).enumerate() {
            let batch = train.batch(rows, true);
            let t = source.on_train_batch(&batch, epoch)?;
            let loss = state.step(&batch, &t)?;
            if !loss.is_finite() {
                return Err(diverged(
                    epoch,
                    format!("student loss {loss} at step {step}"),
                ));
            }
            total += loss * rows.len() as f64;
        }
        if !state.learner.model().params().all_finite() {
            return Err(diverged(epoch, "non-finite student parameters"));
        }
        let value = match mode {
            MonitorMode::KdLossMin => {
                let mut sum = 0.0;
                for rows in plan.monitor.chunks(cfg.batch_size) {
                    let batch = train.batch(rows, false);
                    let t = source.outputs(&batch)?;
                    sum += state.kd_value(&batch, &t)? * rows.len() as f64;
                }
                sum / plan.monitor.len() as f64
            }
            MonitorMode::ValAucMax => {
                let val = data.val.expect("checked above");
                let scores = state.learner.model().predict_dataset(val)?;
                auc(&scores, val.labels())?
            }
        };
        let decision = monitor.observe(value);
        if monitor.improved() {
            best = state.learner.model().params().clone();
            best_gate = state.gate.as_ref().map(|(g, _)| g.clone());
            best_proj = state.projectors.iter().map(|(p, _)| p.clone()).collect();
        }
        record.push(EpochRecord {
            epoch,
            loss: total / plan.train.len() as f64,
            monitor_value: value,
            seconds: start.elapsed().as_secs_f64(),
            stopped: decision == Decision::Stop,
        })?;
        if decision == Decision::Stop {
            break;
        }
    }
    state.learner.restore(&best)?;
    let (model, adam) = state.learner.into_parts();
    Ok(StudentOutcome {
        model,
        gate: best_gate,
        projectors: best_proj,
        record,
        best_epoch: monitor.best_epoch(),
        adam,
    })
}

/// Trains a student against frozen, already trained teachers.
pub fn train_student_pretrain(
    student: &ModelSpec,
    teachers: &[Model],
    distill: &DistillConfig,
    data: StudentData,
    cfg: &TrainConfig,
) -> Result<StudentOutcome> {
    distill.validate()?;
    cfg.validate()?;
    if teachers.is_empty() {
        return Err(Error::invalid("distillation needs at least one teacher"));
    }
    let layout = data.train.layout().clone();
    let refs: Vec<&Model> = teachers.iter().collect();
    check_layouts(&layout, &refs, &data)?;
    let model = Model::new(student.clone(), layout, cfg.seed)?;
    let dims: Vec<usize> = teachers.iter().map(Model::hint_dim).collect();
    let state = StudentState::new(model, &dims, distill, cfg);
    let mut source = Frozen {
        teachers: refs,
        hints: distill.method == KdMethod::Hint,
    };
    run_student(state, &mut source, data, cfg)
}

/// Trains one teacher and the student on the same batches. Each step
/// updates the teacher on its own BCE, then the student against the updated
/// teacher's detached outputs. `hook` sees every batch and the teacher right
/// after its update.
pub fn train_student_cotrain(
    student: &ModelSpec,
    teacher: &ModelSpec,
    distill: &DistillConfig,
    data: StudentData,
    teacher_cfg: &TrainConfig,
    student_cfg: &TrainConfig,
    hook: Option<&mut dyn FnMut(&Batch, &Model)>,
) -> Result<CotrainOutcome> {
    distill.validate()?;
    teacher_cfg.validate()?;
    student_cfg.validate()?;
    let layout = data.train.layout().clone();
    check_layouts(&layout, &[], &data)?;
    let teacher_model = Model::new(teacher.clone(), layout.clone(), teacher_cfg.seed)?;
    let student_model = Model::new(student.clone(), layout, student_cfg.seed)?;
    let state = StudentState::new(
        student_model,
        &[teacher_model.hint_dim()],
        distill,
        student_cfg,
    );
    let mut source = CoTeacher {
        learner: Learner::new(teacher_model, teacher_cfg),
        hints: distill.method == KdMethod::Hint,
        hook,
    };
    let student = run_student(state, &mut source, data, student_cfg)?;
    Ok(CotrainOutcome {
        teacher: source.learner.into_parts().0,
        student,
    })
}
