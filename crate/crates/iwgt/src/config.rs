//! TOML run configuration mirroring the core `*Config` types.

use std::path::{Path, PathBuf};

use iwgt_core::model::ModelConfig;
use iwgt_core::objectives::Objective;
use iwgt_core::solvers::WmmseConfig;
use iwgt_core::training::{FinetuneConfig, PretrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOY: &str = include_str!("../../../configs/toy.toml");
const PAPER: &str = include_str!("../../../configs/paper.toml");

/// Built-in presets accepted wherever a config path is expected.
pub const PRESETS: [&str; 2] = ["toy", "paper"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub objective: Objective,
    /// Fraction of edges hidden from the model; at most 0.5.
    pub mask_ratio: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            dataset: None,
            objective: Objective::SumRate,
            mask_ratio: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub shots: Vec<usize>,
    pub mask_ratios: Vec<f64>,
    /// Architectures for the scaling sweep; empty means the `[model]` section.
    pub models: Vec<ModelConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            shots: vec![64, 128, 256, 512, 1024, 2048],
            mask_ratios: vec![0.1, 0.3, 0.5],
            models: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub scenario: String,
    pub graphs: usize,
    /// Coordinates sampled per check; 0 checks every coordinate.
    pub coords: usize,
    pub eps: f64,
    /// Half-width of the uniform perturbation applied to the initialization
    /// so that no ReLU sits exactly at its kink.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            scenario: "D1-toy".into(),
            graphs: 2,
            coords: 200,
            eps: 1e-5,
            jitter: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub snapshots: usize,
    pub k_values: Vec<usize>,
    pub grid_points: usize,
    pub n_starts: usize,
    pub dominance_snapshots: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            snapshots: 100,
            k_values: vec![2, 3],
            grid_points: 101,
            n_starts: 100,
            dominance_snapshots: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    /// `p_max` is always taken from the dataset being solved.
    pub wmmse: WmmseConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub gradcheck: GradCheckConfig,
    pub oracle: OracleConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a preset by name or a TOML file by path.
    pub fn load(name: &str) -> Result<Self> {
        match name {
            "toy" => Self::parse(TOY),
            "paper" => Self::parse(PAPER),
            path => {
                let p = Path::new(path);
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::parse(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{path}: {m}")),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.eval.objective.validate()?;
        if !(0.0..=0.5).contains(&self.eval.mask_ratio) {
            return Err(Error::Config("eval.mask_ratio must lie in [0, 0.5]".into()));
        }
        if self.sweep.mask_ratios.iter().any(|r| !(0.0..=0.5).contains(r)) {
            return Err(Error::Config("sweep.mask_ratios must lie in [0, 0.5]".into()));
        }
        for m in &self.sweep.models {
            m.validate()?;
        }
        if !(self.gradcheck.eps > 0.0) || !(self.gradcheck.jitter >= 0.0) || self.gradcheck.graphs == 0 {
            return Err(Error::Config("gradcheck needs eps > 0, jitter >= 0 and graphs >= 1".into()));
        }
        if self.oracle.grid_points < 2 || self.oracle.n_starts == 0 {
            return Err(Error::Config("oracle needs grid_points >= 2 and n_starts >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_preset_equals_defaults() {
        assert_eq!(Config::load("toy").unwrap(), Config::default());
    }

    #[test]
    fn paper_preset_is_valid() {
        let p = Config::load("paper").unwrap();
        assert_eq!((p.model.layers, p.model.d_model, p.model.heads), (6, 768, 32));
        assert_eq!(p.pretrain.epochs, 200);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::parse("[model]\nlayerz = 3\n"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[nonsense]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = Config::default();
        c.eval.objective = Objective::qos();
        c.sweep.models = vec![ModelConfig::with_width(0, 16, 2, 32)];
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn out_of_range_mask_ratio_is_a_config_error() {
        assert!(matches!(Config::parse("[eval]\nmask_ratio = 0.7\n"), Err(Error::Config(_))));
    }
}
