//! Interference-aware graph transformer and its heads.
//!
//! Parameter names are grouped by prefix: `enc.`, `bias.` and `layer{l}.`
//! form the backbone; `proj.`, `pred.`, `dec.` and `head.` are the projector,
//! predictor, edge decoder and decision head.

mod checkpoint;
mod network;

pub use checkpoint::{Checkpoint, TrainingMeta};
pub use network::{infer_powers, utility_on_tape, Network, Role};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::netgraph::{EDGE_FEATURES, NODE_FEATURES};
use crate::tensor::{ParameterSet, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ffn: usize,
    pub d_proj: usize,
    pub d_pred_hidden: usize,
    pub node_features: usize,
    pub edge_features: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_width(2, 32, 4, 64)
    }
}

impl ModelConfig {
    /// Projector and predictor widths default to `d_model / 2`.
    pub fn with_width(layers: usize, d_model: usize, heads: usize, d_ffn: usize) -> Self {
        Self {
            layers,
            d_model,
            heads,
            d_ffn,
            d_proj: (d_model / 2).max(1),
            d_pred_hidden: (d_model / 2).max(1),
            node_features: NODE_FEATURES,
            edge_features: EDGE_FEATURES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::invalid("d_model must be a positive multiple of heads"));
        }
        if self.d_ffn == 0 || self.d_proj == 0 || self.d_pred_hidden == 0 {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if self.node_features != NODE_FEATURES || self.edge_features != EDGE_FEATURES {
            return Err(Error::invalid(format!(
                "feature widths must be {NODE_FEATURES} (node) and {EDGE_FEATURES} (edge)"
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn bias_hidden(&self) -> usize {
        2 * self.heads
    }

    pub fn decision_hidden(&self) -> usize {
        (self.d_model / 4).max(1)
    }

    /// Names and shapes of every parameter in `group`, in creation order.
    pub fn shapes(&self, group: ParamGroup) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |n: String, s: &[usize]| out.push((n, s.to_vec()));
        match group {
            ParamGroup::Backbone => {
                push("enc.w1".into(), &[self.node_features, d]);
                push("enc.b1".into(), &[d]);
                push("enc.w2".into(), &[d, d]);
                push("enc.b2".into(), &[d]);
                if self.layers > 0 {
                    let h = self.bias_hidden();
                    push("bias.w1".into(), &[self.edge_features, h]);
                    push("bias.b1".into(), &[h]);
                    push("bias.w2".into(), &[h, self.heads]);
                    push("bias.b2".into(), &[self.heads]);
                    push("bias.mask_token".into(), &[1, self.edge_features]);
                    push("bias.self".into(), &[1, self.heads]);
                }
                let dm = self.head_dim();
                for l in 0..self.layers {
                    for m in 0..self.heads {
                        push(format!("layer{l}.wq{m}"), &[d, dm]);
                        push(format!("layer{l}.wk{m}"), &[d, dm]);
                        push(format!("layer{l}.wv{m}"), &[d, dm]);
                    }
                    push(format!("layer{l}.wo"), &[d, d]);
                    push(format!("layer{l}.ln1.gamma"), &[d]);
                    push(format!("layer{l}.ln1.beta"), &[d]);
                    push(format!("layer{l}.ffn.w1"), &[d, self.d_ffn]);
                    push(format!("layer{l}.ffn.b1"), &[self.d_ffn]);
                    push(format!("layer{l}.ffn.w2"), &[self.d_ffn, d]);
                    push(format!("layer{l}.ffn.b2"), &[d]);
                    push(format!("layer{l}.ln2.gamma"), &[d]);
                    push(format!("layer{l}.ln2.beta"), &[d]);
                }
            }
            ParamGroup::Projector => {
                push("proj.w".into(), &[d, self.d_proj]);
                push("proj.b".into(), &[self.d_proj]);
            }
            ParamGroup::Predictor => {
                push("pred.w1".into(), &[self.d_proj, self.d_pred_hidden]);
                push("pred.b1".into(), &[self.d_pred_hidden]);
                push("pred.w2".into(), &[self.d_pred_hidden, self.d_proj]);
                push("pred.b2".into(), &[self.d_proj]);
            }
            ParamGroup::Decoder => {
                push("dec.w1".into(), &[2 * d, d]);
                push("dec.b1".into(), &[d]);
                push("dec.w2".into(), &[d, self.edge_features]);
                push("dec.b2".into(), &[self.edge_features]);
            }
            ParamGroup::DecisionHead => {
                let h = self.decision_hidden();
                push("head.w1".into(), &[d, h]);
                push("head.b1".into(), &[h]);
                push("head.w2".into(), &[h, 1]);
                push("head.b2".into(), &[1]);
            }
        }
        out
    }

    /// Scalar parameter count of the deployed model (backbone plus decision head).
    pub fn param_count(&self) -> usize {
        [ParamGroup::Backbone, ParamGroup::DecisionHead]
            .iter()
            .flat_map(|g| self.shapes(*g))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamGroup {
    Backbone,
    Projector,
    Predictor,
    Decoder,
    DecisionHead,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Backbone,
        ParamGroup::Projector,
        ParamGroup::Predictor,
        ParamGroup::Decoder,
        ParamGroup::DecisionHead,
    ];
    /// Student parameters during pre-training.
    pub const PRETRAIN: [ParamGroup; 4] = [
        ParamGroup::Backbone,
        ParamGroup::Projector,
        ParamGroup::Predictor,
        ParamGroup::Decoder,
    ];
    /// Parameters mirrored by the EMA teacher.
    pub const TEACHER: [ParamGroup; 2] = [ParamGroup::Backbone, ParamGroup::Projector];
    /// Parameters of a fine-tuned model.
    pub const DEPLOYED: [ParamGroup; 2] = [ParamGroup::Backbone, ParamGroup::DecisionHead];

    pub fn of(name: &str) -> ParamGroup {
        let prefix = name.split('.').next().unwrap_or("");
        match prefix {
            "proj" => ParamGroup::Projector,
            "pred" => ParamGroup::Predictor,
            "dec" => ParamGroup::Decoder,
            "head" => ParamGroup::DecisionHead,
            _ => ParamGroup::Backbone,
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

fn init_value(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    if leaf == "gamma" {
        return Tensor::full(shape, 1.0);
    }
    let is_weight = shape.len() == 2 && leaf != "mask_token" && leaf != "self";
    if !is_weight {
        return Tensor::zeros(shape);
    }
    let (fan_in, fan_out) = (shape[0], shape[1]);
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..fan_in * fan_out)
        .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

/// Xavier-uniform weights, zero biases, unit layer-norm gains, zero mask token
/// and self bias. Each group draws from its own stream of `seed`, so a group's
/// initial values do not depend on which other groups are requested.
pub fn init_params(cfg: &ModelConfig, seed: u64, groups: &[ParamGroup]) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut params = ParameterSet::new();
    for group in ParamGroup::ALL.iter().filter(|g| groups.contains(g)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(group.stream());
        for (name, shape) in cfg.shapes(*group) {
            let value = init_value(&name, &shape, &mut rng);
            params.insert(name, value)?;
        }
    }
    Ok(params)
}

/// Shapes every parameter of `groups` must have.
pub fn expected_shapes(cfg: &ModelConfig, groups: &[ParamGroup]) -> Vec<(String, Vec<usize>)> {
    ParamGroup::ALL
        .iter()
        .filter(|g| groups.contains(g))
        .flat_map(|g| cfg.shapes(*g))
        .collect()
}

/// Checks that `params` holds exactly the parameters of `groups` for `cfg`.
pub fn check_params(cfg: &ModelConfig, params: &ParameterSet, groups: &[ParamGroup]) -> Result<()> {
    let expected = expected_shapes(cfg, groups);
    if expected.len() != params.len() {
        return Err(Error::invalid(format!(
            "expected {} parameters, found {}",
            expected.len(),
            params.len()
        )));
    }
    for (name, shape) in expected {
        match params.get(&name) {
            None => return Err(Error::UnknownParameter(name)),
            Some(t) if t.shape() != shape.as_slice() => {
                return Err(Error::Shape {
                    op: "check_params",
                    lhs: shape,
                    rhs: t.shape().to_vec(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(())
}
