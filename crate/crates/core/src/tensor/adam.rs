use alloc::vec::Vec;

use super::{ParameterSet, Tensor};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments plus a per-parameter step count, laid out in the
/// order of the [`ParameterSet`] it was created for.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: Vec<u64>,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            steps: alloc::vec![0; params.len()],
        }
    }

    pub fn steps(&self, index: usize) -> u64 {
        self.steps[index]
    }
}

/// One bias-corrected Adam update from the gradient slots of `params`.
/// `lr` gives the learning rate per parameter name; `None` leaves that
/// parameter (and its moments) untouched.
pub fn adam_step(
    params: &mut ParameterSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: impl Fn(&str) -> Option<f64>,
) {
    for i in 0..params.len() {
        let Some(rate) = lr(&params.names()[i]) else {
            continue;
        };
        state.steps[i] += 1;
        let t = state.steps[i] as f64;
        let c1 = 1.0 - libm::pow(cfg.beta1, t);
        let c2 = 1.0 - libm::pow(cfg.beta2, t);
        let (value, grad) = params.value_and_grad_mut(i);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (p, g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= rate * m_hat / (math::sqrt(v_hat) + cfg.eps);
        }
    }
}

/// Rescales the gradients selected by `include` so their global L2 norm is at
/// most `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ParameterSet, max_norm: f64, include: impl Fn(&str) -> bool) -> f64 {
    let selected: Vec<usize> = (0..params.len()).filter(|&i| include(&params.names()[i])).collect();
    let total: f64 = selected
        .iter()
        .map(|&i| params.grad_by_index(i).data().iter().map(|g| g * g).sum::<f64>())
        .sum();
    let norm = math::sqrt(total);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for &i in &selected {
            params.grad_by_index_mut(i).data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
