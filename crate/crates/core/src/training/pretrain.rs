use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{digest_f64, ema_update, shuffled, LrScheduler, GRAD_CLIP_NORM};
use crate::error::{Error, Result};
use crate::model::{init_params, Checkpoint, ModelConfig, Network, ParamGroup, Role, TrainingMeta};
use crate::netgraph::{mask_edges, InterferenceGraph, MaskView, NormStats};
use crate::tensor::{adam_step, clip_grad_norm, AdamConfig, AdamState, Bound, ParameterSet, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of off-diagonal edges masked per graph.
    pub rho: f64,
    /// EMA decay of the teacher.
    pub tau: f64,
    /// Weight of the consistency loss.
    pub lambda: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    /// Fraction of graphs held out for scheduling.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            rho: 0.3,
            tau: 0.996,
            lambda: 0.1,
            scheduler_factor: 0.5,
            scheduler_patience: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("pretrain: {m}")));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor <= 1.0) {
            return bad("scheduler_factor must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Batch means of the edge, consistency and combined losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainLosses {
    pub edge: f64,
    pub cl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub losses: PretrainLosses,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    /// Largest absolute gradient that reached any teacher parameter.
    pub teacher_grad_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub train: PretrainLosses,
    pub val: PretrainLosses,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub teacher: ParameterSet,
    /// Validation losses of the untrained model.
    pub initial_val: PretrainLosses,
    pub history: Vec<PretrainEpoch>,
}

struct GraphTerms {
    edge: Option<Var>,
    cl: Var,
}

fn graph_terms(
    tape: &mut Tape,
    cfg: &ModelConfig,
    student: &Bound,
    teacher: &Bound,
    graph: &InterferenceGraph,
    mask: &MaskView,
) -> Result<GraphTerms> {
    let s_net = Network::new(cfg, student);
    let z_s = s_net.backbone(tape, graph, mask)?;
    let pairs = mask.pairs();
    let edge = if pairs.is_empty() {
        None
    } else {
        let pred = s_net.edge_decode(tape, z_s, &pairs)?;
        let mut target = Vec::with_capacity(pairs.len() * cfg.edge_features);
        for &(r, c) in &pairs {
            target.extend_from_slice(graph.edge(r, c));
        }
        let target = tape.constant(Tensor::matrix(pairs.len(), cfg.edge_features, target)?);
        let mse = tape.mse(pred, target)?;
        Some(tape.scale(mse, cfg.edge_features as f64))
    };
    let u_s = s_net.project(tape, z_s, Role::Student)?;

    let t_net = Network::new(cfg, teacher);
    let z_t = t_net.backbone(tape, graph, &MaskView::none(graph.k))?;
    let y_t = t_net.project(tape, z_t, Role::Teacher)?;
    let cos = tape.cosine_rows(u_s, y_t)?;
    let mean_cos = tape.mean(cos)?;
    Ok(GraphTerms {
        edge,
        cl: tape.scale(mean_cos, -1.0),
    })
}

/// Records the batch loss `mean(L_edge) + lambda * mean(L_cl)` on `tape`.
/// The edge term averages over graphs that have at least one masked edge.
/// Returns the total and the two component means.
pub fn pretrain_loss_on_tape(
    tape: &mut Tape,
    cfg: &ModelConfig,
    student: &Bound,
    teacher: &Bound,
    graphs: &[&InterferenceGraph],
    masks: &[MaskView],
    lambda: f64,
) -> Result<(Var, Option<Var>, Var)> {
    if graphs.is_empty() || graphs.len() != masks.len() {
        return Err(Error::invalid("one mask per graph is required and the batch must be non-empty"));
    }
    let mut edges = Vec::new();
    let mut cls = Vec::new();
    for (g, m) in graphs.iter().zip(masks) {
        let t = graph_terms(tape, cfg, student, teacher, g, m)?;
        edges.extend(t.edge);
        cls.push(t.cl);
    }
    if edges.is_empty() && lambda == 0.0 {
        return Err(Error::DegenerateLoss(
            "no edges are masked and the consistency weight is zero".into(),
        ));
    }
    let cl_all = tape.concat_rows(&cls)?;
    let cl = tape.mean(cl_all)?;
    let edge = if edges.is_empty() {
        None
    } else {
        let all = tape.concat_rows(&edges)?;
        Some(tape.mean(all)?)
    };
    let weighted = tape.scale(cl, lambda);
    let total = match edge {
        Some(e) => tape.add(e, weighted)?,
        None => weighted,
    };
    Ok((total, edge, cl))
}

fn sample_masks(graphs: &[&InterferenceGraph], rho: f64, rng: &mut ChaCha8Rng) -> Result<Vec<MaskView>> {
    graphs
        .iter()
        .map(|g| mask_edges(g.k, rho, rng.random::<u64>()))
        .collect()
}

fn losses_from(tape: &Tape, total: Var, edge: Option<Var>, cl: Var) -> PretrainLosses {
    PretrainLosses {
        edge: edge.map_or(0.0, |e| tape.value(e).item()),
        cl: tape.value(cl).item(),
        total: tape.value(total).item(),
    }
}

/// One optimization step of the student on `graphs` with freshly sampled
/// masks, followed by one EMA update of the teacher.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_step(
    model: &ModelConfig,
    cfg: &PretrainConfig,
    graphs: &[&InterferenceGraph],
    student: &mut ParameterSet,
    teacher: &mut ParameterSet,
    adam: &mut AdamState,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<StepReport> {
    let masks = sample_masks(graphs, cfg.rho, rng)?;
    let mut tape = Tape::new();
    let s_vars = tape.bind(student, |_| true);
    let t_vars = tape.bind(teacher, |_| false);
    let (total, edge, cl) =
        pretrain_loss_on_tape(&mut tape, model, &s_vars, &t_vars, graphs, &masks, cfg.lambda)?;
    let losses = losses_from(&tape, total, edge, cl);
    if !losses.total.is_finite() {
        return Err(Error::numerical(0, "pre-training loss is not finite"));
    }
    let grads = tape.backward(total)?;
    s_vars.store_grads(&tape, &grads, student);
    t_vars.store_grads(&tape, &grads, teacher);
    let teacher_grad_max = teacher
        .grads()
        .flat_map(|(_, g)| g.data().iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    let grad_norm = clip_grad_norm(student, GRAD_CLIP_NORM, |_| true);
    adam_step(student, adam, &AdamConfig::default(), |_| Some(lr));
    ema_update(teacher, student, cfg.tau)?;
    Ok(StepReport {
        losses,
        grad_norm,
        teacher_grad_max,
    })
}

/// Losses of `student` against `teacher` on `graphs` under fixed `masks`,
/// without updating anything.
pub fn pretrain_losses(
    model: &ModelConfig,
    student: &ParameterSet,
    teacher: &ParameterSet,
    graphs: &[&InterferenceGraph],
    masks: &[MaskView],
    lambda: f64,
) -> Result<PretrainLosses> {
    let mut tape = Tape::new();
    let s_vars = tape.bind(student, |_| false);
    let t_vars = tape.bind(teacher, |_| false);
    let (total, edge, cl) = pretrain_loss_on_tape(&mut tape, model, &s_vars, &t_vars, graphs, masks, lambda)?;
    Ok(losses_from(&tape, total, edge, cl))
}

/// Splits `n` graph indices into (train, validation).
fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let order = shuffled(n, seed, 1);
    let n_val = if n < 2 { 0 } else { ((fraction * n as f64) as usize).min(n - 1) };
    let n_val = if fraction > 0.0 && n >= 2 { n_val.max(1) } else { n_val };
    let (val, train) = order.split_at(n_val);
    (train.to_vec(), val.to_vec())
}

/// Trains a student (backbone, projector, predictor, edge decoder) and an EMA
/// teacher from scratch. `observer` sees every step and every epoch.
pub fn pretrain(
    graphs: &[InterferenceGraph],
    stats: NormStats,
    model: &ModelConfig,
    cfg: &PretrainConfig,
    mut observer: impl FnMut(&PretrainEvent),
) -> Result<PretrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    stats.validate()?;
    if graphs.is_empty() {
        return Err(Error::DatasetTooSmall { needed: 1, available: 0 });
    }
    let mut student = init_params(model, cfg.seed, &ParamGroup::PRETRAIN)?;
    let mut teacher = student.subset(|n| ParamGroup::TEACHER.contains(&ParamGroup::of(n)));
    let (train_idx, val_idx) = split(graphs.len(), cfg.val_fraction, cfg.seed);
    let val_set: Vec<&InterferenceGraph> = if val_idx.is_empty() {
        train_idx.iter().map(|&i| &graphs[i]).collect()
    } else {
        val_idx.iter().map(|&i| &graphs[i]).collect()
    };
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    val_rng.set_stream(2);
    let val_masks = sample_masks(&val_set, cfg.rho, &mut val_rng)?;
    let initial_val = pretrain_losses(model, &student, &teacher, &val_set, &val_masks, cfg.lambda)?;

    let mut adam = AdamState::new(&student);
    let mut sched = LrScheduler::new(cfg.lr, cfg.scheduler_factor, cfg.scheduler_patience);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    mask_rng.set_stream(4);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut trace = Vec::with_capacity(cfg.epochs * 4);
    for epoch in 1..=cfg.epochs {
        let lr = sched.lr();
        let order = shuffled(train_idx.len(), cfg.seed.wrapping_add(epoch as u64), 3);
        let mut sum = PretrainLosses { edge: 0.0, cl: 0.0, total: 0.0 };
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&InterferenceGraph> = chunk.iter().map(|&i| &graphs[train_idx[i]]).collect();
            let report = pretrain_step(model, cfg, &batch, &mut student, &mut teacher, &mut adam, lr, &mut mask_rng)?;
            observer(&PretrainEvent::Step { epoch, step, report });
            sum.edge += report.losses.edge;
            sum.cl += report.losses.cl;
            sum.total += report.losses.total;
            steps += 1;
        }
        let n = steps.max(1) as f64;
        let train = PretrainLosses {
            edge: sum.edge / n,
            cl: sum.cl / n,
            total: sum.total / n,
        };
        let val = pretrain_losses(model, &student, &teacher, &val_set, &val_masks, cfg.lambda)?;
        if !val.total.is_finite() {
            return Err(Error::numerical(epoch, "validation loss is not finite"));
        }
        sched.step(val.total);
        let record = PretrainEpoch { epoch, lr, train, val };
        observer(&PretrainEvent::Epoch(record.clone()));
        trace.extend([train.edge, train.cl, train.total, val.total]);
        history.push(record);
    }

    student.zero_grads();
    let checkpoint = Checkpoint {
        model: model.clone(),
        stats,
        params: student,
        meta: TrainingMeta {
            stage: if cfg.epochs == 0 { "init".into() } else { String::from("pretrain") },
            epochs: cfg.epochs,
            seed: cfg.seed,
            loss_digest: digest_f64(&trace),
            objective: None,
        },
    };
    Ok(PretrainOutcome {
        checkpoint,
        teacher,
        initial_val,
        history,
    })
}

#[derive(Debug, Clone)]
pub enum PretrainEvent {
    Step { epoch: usize, step: usize, report: StepReport },
    Epoch(PretrainEpoch),
}
