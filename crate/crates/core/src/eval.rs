//! Per-snapshot comparison of a power policy with WMMSE-Best and full reuse.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{infer_powers, ModelConfig};
use crate::netgraph::{InterferenceGraph, MaskView};
use crate::objectives::{dataset_ratio, rates, utility, GainMatrix, Objective};
use crate::solvers::{full_reuse, wmmse_best, WmmseConfig};
use crate::tensor::ParameterSet;

/// Anything that maps a (possibly masked) graph to transmit powers.
pub trait PowerPolicy {
    fn powers(&self, graph: &InterferenceGraph, mask: &MaskView) -> Result<Vec<f64>>;
}

/// A deployed model: backbone plus decision head.
pub struct ModelPolicy<'a> {
    pub model: &'a ModelConfig,
    pub params: &'a ParameterSet,
    pub p_max: f64,
}

impl PowerPolicy for ModelPolicy<'_> {
    fn powers(&self, graph: &InterferenceGraph, mask: &MaskView) -> Result<Vec<f64>> {
        infer_powers(self.model, self.params, graph, mask, self.p_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Model,
    WmmseBest,
    FullReuse,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Model, Method::WmmseBest, Method::FullReuse];

    pub fn name(self) -> &'static str {
        match self {
            Method::Model => "model",
            Method::WmmseBest => "wmmse_best",
            Method::FullReuse => "full_reuse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub utility: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord {
    pub index: usize,
    /// Indexed like [`Method::ALL`].
    pub outcomes: [MethodOutcome; 3],
}

impl SnapshotRecord {
    pub fn outcome(&self, m: Method) -> &MethodOutcome {
        &self.outcomes[m as usize]
    }

    /// `None` when the WMMSE-Best utility is zero.
    pub fn ratio(&self, m: Method) -> Option<f64> {
        let r = self.outcome(Method::WmmseBest).utility;
        (r != 0.0).then(|| self.outcome(m).utility / r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_utility: f64,
    /// Ratio of mean utilities; `None` when the reference mean is zero.
    pub ratio_vs_wmmse_best: Option<f64>,
    /// Mean rate of users below the reporting threshold, pooled over all
    /// snapshots; `None` when no user falls below it.
    pub violated_user_rate: Option<f64>,
    pub violated_users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub objective: Objective,
    pub records: Vec<SnapshotRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl EvalReport {
    /// Aggregates computed from `records`; `records` are sorted by index.
    pub fn from_records(objective: Objective, mut records: Vec<SnapshotRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot summarize an empty evaluation"));
        }
        records.sort_by_key(|r| r.index);
        let r_min = objective.report_r_min();
        let reference: Vec<f64> = records.iter().map(|r| r.outcome(Method::WmmseBest).utility).collect();
        let summaries = Method::ALL
            .iter()
            .map(|&method| {
                let utils: Vec<f64> = records.iter().map(|r| r.outcome(method).utility).collect();
                let mean_utility = utils.iter().sum::<f64>() / utils.len() as f64;
                let ratio_vs_wmmse_best = match dataset_ratio(&utils, &reference) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedRatio) => None,
                    Err(e) => return Err(e),
                };
                let violated: Vec<f64> = records
                    .iter()
                    .flat_map(|r| r.outcome(method).rates.iter().copied())
                    .filter(|&x| x < r_min)
                    .collect();
                Ok(MethodSummary {
                    method,
                    mean_utility,
                    ratio_vs_wmmse_best,
                    violated_user_rate: (!violated.is_empty())
                        .then(|| violated.iter().sum::<f64>() / violated.len() as f64),
                    violated_users: violated.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            objective,
            records,
            summaries,
        })
    }

    pub fn summary(&self, m: Method) -> &MethodSummary {
        &self.summaries[m as usize]
    }
}

/// WMMSE-Best and full-reuse outcomes of one graph on full CSI.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub wmmse_best: MethodOutcome,
    pub full_reuse: MethodOutcome,
}

fn score(gains: &GainMatrix, p: &[f64], sigma2: f64, objective: &Objective) -> Result<MethodOutcome> {
    let r = rates(gains, p, sigma2)?;
    Ok(MethodOutcome {
        utility: utility(&r, objective),
        rates: r,
    })
}

/// Baselines of one graph. WMMSE-Best starts are drawn from `seed`.
pub fn reference(graph: &InterferenceGraph, objective: &Objective, wmmse: &WmmseConfig, seed: u64) -> Result<Reference> {
    let gains = GainMatrix::new(graph.k, graph.power_gains())?;
    let best = wmmse_best(&gains, graph.sigma2, wmmse, objective, seed)?;
    let full = full_reuse(graph.k, wmmse.p_max);
    Ok(Reference {
        wmmse_best: score(&gains, &best, graph.sigma2, objective)?,
        full_reuse: score(&gains, &full, graph.sigma2, objective)?,
    })
}

/// Scores `policy` (on `mask`) against precomputed baselines of `graph`.
pub fn evaluate_against(
    index: usize,
    graph: &InterferenceGraph,
    mask: &MaskView,
    objective: &Objective,
    p_max: f64,
    reference: &Reference,
    policy: &dyn PowerPolicy,
) -> Result<SnapshotRecord> {
    let gains = GainMatrix::new(graph.k, graph.power_gains())?;
    let model = policy.powers(graph, mask)?;
    if model.len() != graph.k || model.iter().any(|p| !(0.0..=p_max).contains(p)) {
        return Err(Error::invalid("policy returned an infeasible power vector"));
    }
    Ok(SnapshotRecord {
        index,
        outcomes: [
            score(&gains, &model, graph.sigma2, objective)?,
            reference.wmmse_best.clone(),
            reference.full_reuse.clone(),
        ],
    })
}

/// Scores `policy` (on `mask`) against WMMSE-Best and full reuse (both on
/// full CSI) for one graph. WMMSE-Best starts are drawn from `seed`.
pub fn evaluate_snapshot(
    index: usize,
    graph: &InterferenceGraph,
    mask: &MaskView,
    objective: &Objective,
    wmmse: &WmmseConfig,
    seed: u64,
    policy: &dyn PowerPolicy,
) -> Result<SnapshotRecord> {
    let base = reference(graph, objective, wmmse, seed)?;
    evaluate_against(index, graph, mask, objective, wmmse.p_max, &base, policy)
}
