use alloc::string::String;

use super::{check_params, ModelConfig, ParamGroup};
use crate::error::Result;
use crate::netgraph::NormStats;
use crate::objectives::Objective;
use crate::tensor::ParameterSet;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingMeta {
    /// `"init"`, `"pretrain"` or `"finetune"`.
    pub stage: String,
    pub epochs: usize,
    pub seed: u64,
    /// Hex SHA-256 of the per-epoch loss history.
    pub loss_digest: String,
    pub objective: Option<Objective>,
}

/// A trained model: architecture, the statistics its inputs were normalized
/// with, and named parameters.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub stats: NormStats,
    pub params: ParameterSet,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    /// Checks that the parameters hold at least the backbone with the shapes
    /// `model` requires, plus either a decision head or the pre-training heads.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.stats.validate()?;
        check_params(&self.model, &self.params, self.groups())
    }

    /// Parameter groups this checkpoint carries.
    pub fn groups(&self) -> &'static [ParamGroup] {
        if self.params.contains("head.w1") {
            &ParamGroup::DEPLOYED
        } else {
            &ParamGroup::PRETRAIN
        }
    }

    pub fn has_decision_head(&self) -> bool {
        self.params.contains("head.w1")
    }
}
