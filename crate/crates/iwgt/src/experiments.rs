//! Evaluation protocols and sweeps over datasets and checkpoints.

use std::time::Instant;

use iwgt_core::eval::{evaluate_against, reference, EvalReport, Method, ModelPolicy, PowerPolicy, Reference};
use iwgt_core::model::{init_params, Checkpoint, ModelConfig, Network, ParamGroup};
use iwgt_core::netgraph::{compute_norm_stats, mask_edges, InterferenceGraph, MaskView, NormStats};
use iwgt_core::objectives::{rates, utility, GainMatrix, Objective};
use iwgt_core::scenarios::strong_interference_snapshot;
use iwgt_core::solvers::{brute_force, full_reuse, wmmse_best, WmmseConfig};
use iwgt_core::tensor::{grad_check, GradCheckReport, ParameterSet};
use iwgt_core::training::{
    finetune, finetune_loss_on_tape, pretrain, pretrain_loss_on_tape, FinetuneConfig, FinetuneEpoch, FinetuneInit,
    PretrainConfig, PretrainEvent, PretrainOutcome,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{GradCheckConfig, OracleConfig};
use crate::dataset::{Dataset, Encoding, Source};
use crate::error::{Error, Result};
use crate::parallel;
use crate::report::{ResultRow, RowContext};

/// Offset separating evaluation mask seeds from WMMSE start seeds.
const MASK_SEED_SALT: u64 = 0x6d61_736b;

/// Seed of snapshot `index`'s WMMSE starts.
pub fn wmmse_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Evaluation mask of snapshot `index`.
pub fn eval_mask(k: usize, ratio: f64, seed: u64, index: usize) -> Result<MaskView> {
    if ratio == 0.0 {
        return Ok(MaskView::none(k));
    }
    Ok(mask_edges(k, ratio, (seed ^ MASK_SEED_SALT).wrapping_add(index as u64))?)
}

/// `cfg` with the power ceiling of the data it will solve.
pub fn wmmse_for(cfg: &WmmseConfig, p_max: f64) -> WmmseConfig {
    WmmseConfig { p_max, ..cfg.clone() }
}

/// WMMSE-Best and full-reuse baselines of every graph, in parallel.
pub fn references(graphs: &[InterferenceGraph], objective: &Objective, wmmse: &WmmseConfig, seed: u64) -> Result<Vec<Reference>> {
    parallel::install(|| {
        graphs
            .par_iter()
            .enumerate()
            .map(|(i, g)| Ok(reference(g, objective, wmmse, wmmse_seed(seed, i))?))
            .collect()
    })
}

/// Scores `policy` on every graph against precomputed baselines. Records are
/// assembled in snapshot order whatever the parallel schedule.
pub fn evaluate_policy(
    graphs: &[InterferenceGraph],
    refs: &[Reference],
    objective: &Objective,
    p_max: f64,
    mask_ratio: f64,
    seed: u64,
    policy: &(dyn PowerPolicy + Sync),
) -> Result<EvalReport> {
    if !(0.0..=0.5).contains(&mask_ratio) {
        return Err(Error::Config("mask_ratio must lie in [0, 0.5]".into()));
    }
    if graphs.len() != refs.len() {
        return Err(Error::Config("one reference per graph is required".into()));
    }
    let records = parallel::install(|| {
        graphs
            .par_iter()
            .zip(refs)
            .enumerate()
            .map(|(i, (g, r))| {
                let mask = eval_mask(g.k, mask_ratio, seed, i)?;
                Ok(evaluate_against(i, g, &mask, objective, p_max, r, policy)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(EvalReport::from_records(*objective, records)?)
}

pub struct EvalSpec<'a> {
    pub objective: Objective,
    pub wmmse: &'a WmmseConfig,
    pub mask_ratio: f64,
    pub seed: u64,
}

/// Evaluates a fine-tuned checkpoint on `data`, normalizing features with the
/// checkpoint's statistics.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, spec: &EvalSpec<'_>) -> Result<EvalReport> {
    if !ckpt.has_decision_head() {
        return Err(Error::Config("checkpoint has no decision head; fine-tune it before evaluating".into()));
    }
    let graphs = data.graphs(&ckpt.stats)?;
    let p_max = data.p_max();
    let refs = references(&graphs, &spec.objective, &wmmse_for(spec.wmmse, p_max), spec.seed)?;
    let policy = ModelPolicy {
        model: &ckpt.model,
        params: &ckpt.params,
        p_max,
    };
    evaluate_policy(&graphs, &refs, &spec.objective, p_max, spec.mask_ratio, spec.seed, &policy)
}

/// Pre-trains on the union of `datasets`, with statistics of that union.
pub fn pretrain_on(
    datasets: &[Dataset],
    model: &ModelConfig,
    cfg: &PretrainConfig,
    observer: impl FnMut(&PretrainEvent),
) -> Result<PretrainOutcome> {
    if datasets.is_empty() {
        return Err(Error::Config("pre-training needs at least one dataset".into()));
    }
    let stats = compute_norm_stats(datasets.iter().flat_map(|d| d.snapshots.iter()))?;
    let mut graphs = Vec::new();
    for d in datasets {
        graphs.extend(d.graphs(&stats)?);
    }
    Ok(pretrain(&graphs, stats, model, cfg, observer)?)
}

/// Where fine-tuning starts from.
#[derive(Clone, Copy)]
pub enum Init<'a> {
    Pretrained(&'a Checkpoint),
    Scratch { model: &'a ModelConfig, stats: NormStats },
}

impl Init<'_> {
    pub fn stats(&self) -> NormStats {
        match self {
            Init::Pretrained(c) => c.stats,
            Init::Scratch { stats, .. } => *stats,
        }
    }
}

/// Fine-tunes on the first `cfg.n_shot` snapshots of `data`, with `p_max`
/// taken from the dataset.
pub fn finetune_on(
    init: Init<'_>,
    data: &Dataset,
    cfg: &FinetuneConfig,
    observer: impl FnMut(&FinetuneEpoch),
) -> Result<Checkpoint> {
    if data.len() < cfg.n_shot {
        return Err(iwgt_core::Error::DatasetTooSmall {
            needed: cfg.n_shot,
            available: data.len(),
        }
        .into());
    }
    let graphs = data.head(cfg.n_shot).graphs(&init.stats())?;
    let cfg = FinetuneConfig {
        p_max: data.p_max(),
        ..cfg.clone()
    };
    let core_init = match init {
        Init::Pretrained(c) => FinetuneInit::Pretrained(c),
        Init::Scratch { model, stats } => FinetuneInit::Scratch { model, stats },
    };
    Ok(finetune(core_init, &graphs, &cfg, observer)?.checkpoint)
}

pub struct FewshotSpec<'a> {
    pub pretrained: Option<&'a Checkpoint>,
    /// Architecture for scratch runs when no checkpoint is given.
    pub model: &'a ModelConfig,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub finetune: &'a FinetuneConfig,
    pub shots: &'a [usize],
    pub wmmse: &'a WmmseConfig,
    pub eval_seed: u64,
}

/// For every shot count: fine-tunes from the pre-trained checkpoint (if any)
/// and from scratch, and scores both on the held-out set. Both inits share
/// the normalization statistics, so they see identical input features.
pub fn fewshot_sweep(spec: &FewshotSpec<'_>) -> Result<Vec<ResultRow>> {
    if let Some(&n) = spec.shots.iter().find(|&&n| n > spec.train.len() || n == 0) {
        return Err(Error::Config(format!(
            "shot count {n} is not within the {} available training snapshots",
            spec.train.len()
        )));
    }
    let (model, stats) = match spec.pretrained {
        Some(c) => (&c.model, c.stats),
        None => (spec.model, spec.train.norm_stats()?),
    };
    let objective = spec.finetune.objective;
    let p_max = spec.test.p_max();
    let graphs = spec.test.graphs(&stats)?;
    let refs = references(&graphs, &objective, &wmmse_for(spec.wmmse, p_max), spec.eval_seed)?;
    let scenario = spec.test.header.source.id();
    let mut rows = Vec::new();
    for &n in spec.shots {
        let cfg = FinetuneConfig { n_shot: n, ..spec.finetune.clone() };
        let mut inits: Vec<(&str, Init<'_>)> = Vec::new();
        if let Some(c) = spec.pretrained {
            inits.push(("pretrained", Init::Pretrained(c)));
        }
        inits.push(("scratch", Init::Scratch { model, stats }));
        for (label, init) in inits {
            let ckpt = finetune_on(init, spec.train, &cfg, |_| {})?;
            let policy = ModelPolicy {
                model: &ckpt.model,
                params: &ckpt.params,
                p_max,
            };
            let report = evaluate_policy(&graphs, &refs, &objective, p_max, 0.0, spec.eval_seed, &policy)?;
            let ctx = RowContext {
                experiment: "fewshot",
                scenario: &scenario,
                n_shot: Some(n),
                mask_ratio: 0.0,
                param_count: model.param_count(),
                seed: cfg.seed,
            };
            rows.push(ctx.row(&report, Method::Model, label));
        }
    }
    Ok(rows)
}

pub struct ScalingSpec<'a> {
    pub models: &'a [ModelConfig],
    pub pretrain_data: &'a [Dataset],
    pub pretrain: &'a PretrainConfig,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub finetune: &'a FinetuneConfig,
    pub wmmse: &'a WmmseConfig,
    pub eval_seed: u64,
}

/// Pre-trains and fine-tunes every architecture at the same budget; rows are
/// sorted by parameter count.
pub fn scaling_sweep(spec: &ScalingSpec<'_>) -> Result<Vec<ResultRow>> {
    let objective = spec.finetune.objective;
    let p_max = spec.test.p_max();
    let scenario = spec.test.header.source.id();
    let mut rows = Vec::with_capacity(spec.models.len());
    let mut refs_cache: Option<(NormStats, Vec<InterferenceGraph>, Vec<Reference>)> = None;
    for model in spec.models {
        let pre = pretrain_on(spec.pretrain_data, model, spec.pretrain, |_| {})?;
        let stats = pre.checkpoint.stats;
        if refs_cache.as_ref().is_none_or(|(s, _, _)| *s != stats) {
            let graphs = spec.test.graphs(&stats)?;
            let refs = references(&graphs, &objective, &wmmse_for(spec.wmmse, p_max), spec.eval_seed)?;
            refs_cache = Some((stats, graphs, refs));
        }
        let (_, graphs, refs) = refs_cache.as_ref().expect("cached");
        let ckpt = finetune_on(Init::Pretrained(&pre.checkpoint), spec.train, spec.finetune, |_| {})?;
        let policy = ModelPolicy {
            model: &ckpt.model,
            params: &ckpt.params,
            p_max,
        };
        let report = evaluate_policy(graphs, refs, &objective, p_max, 0.0, spec.eval_seed, &policy)?;
        let ctx = RowContext {
            experiment: "scaling",
            scenario: &scenario,
            n_shot: Some(spec.finetune.n_shot),
            mask_ratio: 0.0,
            param_count: model.param_count(),
            seed: spec.finetune.seed,
        };
        rows.push(ctx.row(&report, Method::Model, "model"));
    }
    rows.sort_by_key(|r| r.param_count);
    Ok(rows)
}

/// Scores a fine-tuned checkpoint at each inference mask ratio; the reference
/// always sees full CSI.
pub fn mask_sweep(ckpt: &Checkpoint, data: &Dataset, objective: Objective, ratios: &[f64], wmmse: &WmmseConfig, seed: u64) -> Result<Vec<ResultRow>> {
    if !ckpt.has_decision_head() {
        return Err(Error::Config("checkpoint has no decision head; fine-tune it before evaluating".into()));
    }
    let graphs = data.graphs(&ckpt.stats)?;
    let p_max = data.p_max();
    let refs = references(&graphs, &objective, &wmmse_for(wmmse, p_max), seed)?;
    let policy = ModelPolicy {
        model: &ckpt.model,
        params: &ckpt.params,
        p_max,
    };
    let scenario = data.header.source.id();
    ratios
        .iter()
        .map(|&ratio| {
            let report = evaluate_policy(&graphs, &refs, &objective, p_max, ratio, seed, &policy)?;
            let ctx = RowContext {
                experiment: "mask",
                scenario: &scenario,
                n_shot: None,
                mask_ratio: ratio,
                param_count: ckpt.model.param_count(),
                seed,
            };
            Ok(ctx.row(&report, Method::Model, "model"))
        })
        .collect()
}

/// Adds independent uniform noise in `[-half_width, half_width]` to every
/// parameter.
pub fn jitter(params: &mut ParameterSet, half_width: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in params.names().to_vec() {
        for v in params.get_mut(&name).expect("listed name").data_mut() {
            *v += half_width * rng.random_range(-1.0..1.0);
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub pretrain: GradCheckReport,
    pub finetune: GradCheckReport,
    pub k: usize,
    pub seconds: f64,
}

impl GradCheckOutcome {
    pub fn max_rel_error(&self) -> f64 {
        self.pretrain.max_rel_error.max(self.finetune.max_rel_error)
    }
}

/// Central-difference check of the pre-training loss and the fine-tuning
/// loss at a jittered initialization, on `cfg.graphs` snapshots of
/// `cfg.scenario`.
pub fn gradcheck(
    model: &ModelConfig,
    pre: &PretrainConfig,
    objective: &Objective,
    cfg: &GradCheckConfig,
) -> Result<GradCheckOutcome> {
    let start = Instant::now();
    let data = Dataset::generate(Source::named(&cfg.scenario)?, cfg.graphs, cfg.seed, Encoding::Binary)?;
    let stats = data.norm_stats()?;
    let graphs = data.graphs(&stats)?;
    let refs: Vec<&InterferenceGraph> = graphs.iter().collect();
    let k = data.header.source.k();
    let coords = (cfg.coords > 0).then_some((cfg.coords, cfg.seed));

    let mut student = init_params(model, cfg.seed, &ParamGroup::PRETRAIN)?;
    let teacher = student.subset(|n| ParamGroup::TEACHER.contains(&ParamGroup::of(n)));
    jitter(&mut student, cfg.jitter, cfg.seed.wrapping_add(1));
    let masks = (0..graphs.len())
        .map(|i| mask_edges(k, pre.rho, cfg.seed.wrapping_add(i as u64)))
        .collect::<iwgt_core::Result<Vec<_>>>()?;
    let pretrain_report = grad_check(&student, cfg.eps, coords, |tape, s| {
        let t = tape.bind(&teacher, |_| false);
        Ok(pretrain_loss_on_tape(tape, model, s, &t, &refs, &masks, pre.lambda)?.0)
    })?;

    let mut deployed = init_params(model, cfg.seed, &ParamGroup::DEPLOYED)?;
    jitter(&mut deployed, cfg.jitter, cfg.seed.wrapping_add(2));
    let open: Vec<MaskView> = graphs.iter().map(|g| MaskView::none(g.k)).collect();
    let p_max = data.p_max();
    let finetune_report = grad_check(&deployed, cfg.eps, coords, |tape, b| {
        let net = Network::new(model, b);
        finetune_loss_on_tape(tape, &net, &refs, &open, objective, p_max)
    })?;
    Ok(GradCheckOutcome {
        pretrain: pretrain_report,
        finetune: finetune_report,
        k,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Mean WMMSE-Best sum rate over mean brute-force sum rate.
    pub ratio_of_means: f64,
    pub worst_ratio: f64,
    pub oracle_snapshots: usize,
    /// Snapshots where WMMSE-Best fell below full reuse.
    pub dominance_violations: usize,
    pub dominance_snapshots: usize,
}

fn sum_rate(g: &GainMatrix, p: &[f64], sigma2: f64) -> Result<f64> {
    Ok(utility(&rates(g, p, sigma2)?, &Objective::SumRate))
}

/// WMMSE-Best against the grid oracle on small strong-interference
/// snapshots, and against full reuse on `K = 4` ones, all under sum rate.
pub fn oracle(cfg: &OracleConfig, wmmse: &WmmseConfig) -> Result<OracleOutcome> {
    if cfg.k_values.is_empty() {
        return Err(Error::Config("oracle.k_values must not be empty".into()));
    }
    let w = WmmseConfig {
        n_starts: cfg.n_starts,
        ..wmmse_for(wmmse, 1.0)
    };
    let sigma2 = iwgt_core::scenarios::STRONG_SIGMA2;
    let pairs: Vec<(f64, f64)> = parallel::install(|| {
        (0..cfg.snapshots)
            .into_par_iter()
            .map(|i| {
                let k = cfg.k_values[i % cfg.k_values.len()];
                let s = strong_interference_snapshot(k, cfg.seed.wrapping_add(i as u64))?;
                let g = GainMatrix::new(k, s.power_gains())?;
                let best = wmmse_best(&g, sigma2, &w, &Objective::SumRate, cfg.seed.wrapping_add(i as u64))?;
                let grid = brute_force(&g, sigma2, 1.0, cfg.grid_points, &Objective::SumRate)?;
                Ok((sum_rate(&g, &best, sigma2)?, sum_rate(&g, &grid, sigma2)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = pairs.len().max(1) as f64;
    let (sw, sb): (f64, f64) = pairs.iter().fold((0.0, 0.0), |(a, b), (w, g)| (a + w, b + g));
    let worst_ratio = pairs.iter().map(|(w, g)| w / g).fold(f64::INFINITY, f64::min);
    let violations: usize = parallel::install(|| {
        (0..cfg.dominance_snapshots)
            .into_par_iter()
            .map(|i| {
                let seed = cfg.seed.wrapping_add(1_000_000 + i as u64);
                let s = strong_interference_snapshot(4, seed)?;
                let g = GainMatrix::new(4, s.power_gains())?;
                let best = wmmse_best(&g, sigma2, &w, &Objective::SumRate, seed)?;
                let full = full_reuse(4, 1.0);
                Ok(usize::from(sum_rate(&g, &best, sigma2)? < sum_rate(&g, &full, sigma2)?))
            })
            .collect::<Result<Vec<usize>>>()
    })?
    .into_iter()
    .sum();
    Ok(OracleOutcome {
        ratio_of_means: (sw / n) / (sb / n),
        worst_ratio,
        oracle_snapshots: pairs.len(),
        dominance_violations: violations,
        dominance_snapshots: cfg.dominance_snapshots,
    })
}
