use alloc::format;
use alloc::vec::Vec;

use super::{digest_f64, shuffled, GRAD_CLIP_NORM};
use crate::error::{Error, Result};
use crate::model::{
    check_params, init_params, utility_on_tape, Checkpoint, ModelConfig, Network, ParamGroup,
    TrainingMeta,
};
use crate::netgraph::{mask_edges, InterferenceGraph, MaskView, NormStats};
use crate::objectives::{GainMatrix, Objective};
use crate::tensor::{adam_step, clip_grad_norm, AdamConfig, AdamState, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FinetuneConfig {
    /// Head-only epochs with the backbone frozen.
    pub warmup_epochs: usize,
    /// Joint epochs after warmup.
    pub full_epochs: usize,
    pub backbone_lr: f64,
    pub head_lr: f64,
    pub objective: Objective,
    /// Number of training snapshots taken from the front of the dataset.
    pub n_shot: usize,
    pub batch_size: usize,
    /// Transmit power ceiling in watts.
    pub p_max: f64,
    /// Edge mask ratio applied to training graphs; 0 trains on full CSI.
    pub mask_ratio: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 10,
            full_epochs: 100,
            backbone_lr: 1e-4,
            head_lr: 1e-3,
            objective: Objective::SumRate,
            n_shot: 64,
            batch_size: 16,
            p_max: 1.0,
            mask_ratio: 0.0,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        let bad = |m: &str| Err(Error::invalid(format!("finetune: {m}")));
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.backbone_lr) || !pos(self.head_lr) {
            return bad("learning rates must be positive");
        }
        if !pos(self.p_max) {
            return bad("p_max must be positive");
        }
        if self.batch_size == 0 || self.n_shot == 0 {
            return bad("batch_size and n_shot must be positive");
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad("mask_ratio must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Where the backbone of a fine-tuned model comes from.
#[derive(Debug, Clone, Copy)]
pub enum FinetuneInit<'a> {
    Pretrained(&'a Checkpoint),
    Scratch { model: &'a ModelConfig, stats: NormStats },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    /// `true` while the backbone is frozen.
    pub warmup: bool,
    /// Mean training utility over the epoch's batches.
    pub utility: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<FinetuneEpoch>,
}

/// `-mean_g utility(graph_g)` recorded on `tape`.
pub fn finetune_loss_on_tape(
    tape: &mut Tape,
    net: &Network<'_>,
    graphs: &[&InterferenceGraph],
    masks: &[MaskView],
    objective: &Objective,
    p_max: f64,
) -> Result<Var> {
    let mut utils = Vec::with_capacity(graphs.len());
    for (g, m) in graphs.iter().zip(masks) {
        let z = net.backbone(tape, g, m)?;
        let p = net.decision_head(tape, z, p_max)?;
        let gains = GainMatrix::new(g.k, g.power_gains())?;
        let u = utility_on_tape(tape, p, &gains, g.sigma2, objective)?;
        utils.push(tape.reshape(u, &[1, 1])?);
    }
    if utils.is_empty() {
        return Err(Error::invalid("empty fine-tuning batch"));
    }
    let all = tape.concat_rows(&utils)?;
    let mean = tape.mean(all)?;
    Ok(tape.scale(mean, -1.0))
}

/// Two-stage fine-tuning of backbone plus decision head on the first
/// `cfg.n_shot` graphs.
pub fn finetune(
    init: FinetuneInit<'_>,
    graphs: &[InterferenceGraph],
    cfg: &FinetuneConfig,
    mut observer: impl FnMut(&FinetuneEpoch),
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if graphs.len() < cfg.n_shot {
        return Err(Error::DatasetTooSmall {
            needed: cfg.n_shot,
            available: graphs.len(),
        });
    }
    let (model, stats) = match init {
        FinetuneInit::Pretrained(ck) => (ck.model.clone(), ck.stats),
        FinetuneInit::Scratch { model, stats } => (model.clone(), stats),
    };
    model.validate()?;
    stats.validate()?;
    let mut params = init_params(&model, cfg.seed, &ParamGroup::DEPLOYED)?;
    if let FinetuneInit::Pretrained(ck) = init {
        let backbone = ck.params.subset(|n| ParamGroup::of(n) == ParamGroup::Backbone);
        check_params(&model, &backbone, &[ParamGroup::Backbone])?;
        params.copy_shared_from(&backbone)?;
    }

    let train = &graphs[..cfg.n_shot];
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.warmup_epochs + cfg.full_epochs);
    let total_epochs = cfg.warmup_epochs + cfg.full_epochs;
    for epoch in 1..=total_epochs {
        let warmup = epoch <= cfg.warmup_epochs;
        let order = shuffled(train.len(), cfg.seed.wrapping_add(epoch as u64), 5);
        let mut util_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&InterferenceGraph> = chunk.iter().map(|&i| &train[i]).collect();
            let masks = batch
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    if cfg.mask_ratio == 0.0 {
                        Ok(MaskView::none(g.k))
                    } else {
                        let s = cfg.seed ^ ((epoch as u64) << 40) ^ ((b as u64) << 20) ^ i as u64;
                        mask_edges(g.k, cfg.mask_ratio, s)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let mut tape = Tape::new();
            let vars = tape.bind(&params, |n| !warmup || ParamGroup::of(n) != ParamGroup::Backbone);
            let net = Network::new(&model, &vars);
            let loss = finetune_loss_on_tape(&mut tape, &net, &batch, &masks, &cfg.objective, cfg.p_max)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::numerical(epoch, "fine-tuning loss is not finite"));
            }
            let grads = tape.backward(loss)?;
            vars.store_grads(&tape, &grads, &mut params);
            clip_grad_norm(&mut params, GRAD_CLIP_NORM, |n| {
                !warmup || ParamGroup::of(n) != ParamGroup::Backbone
            });
            adam_step(&mut params, &mut adam, &AdamConfig::default(), |n| {
                match (ParamGroup::of(n) == ParamGroup::Backbone, warmup) {
                    (true, true) => None,
                    (true, false) => Some(cfg.backbone_lr),
                    (false, _) => Some(cfg.head_lr),
                }
            });
            util_sum -= value;
            batches += 1;
        }
        let record = FinetuneEpoch {
            epoch,
            warmup,
            utility: util_sum / batches.max(1) as f64,
        };
        observer(&record);
        history.push(record);
    }

    params.zero_grads();
    let trace: Vec<f64> = history.iter().map(|h| h.utility).collect();
    Ok(FinetuneOutcome {
        checkpoint: Checkpoint {
            model,
            stats,
            params,
            meta: TrainingMeta {
                stage: "finetune".into(),
                epochs: total_epochs,
                seed: cfg.seed,
                loss_digest: digest_f64(&trace),
                objective: Some(cfg.objective),
            },
        },
        history,
    })
}

