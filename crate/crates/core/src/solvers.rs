//! Classical power-control baselines: WMMSE, multi-start WMMSE, full reuse
//! and an exhaustive grid oracle for small networks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::objectives::{rates, utility, weighted_sum_rate, GainMatrix, Objective, PowerVector};

/// Maximum grid size evaluated by [`brute_force`].
pub const BRUTE_FORCE_BUDGET: f64 = 1e8;
pub const BRUTE_FORCE_MAX_K: usize = 6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct WmmseConfig {
    pub max_iters: usize,
    /// Relative change of the weighted sum rate between sweeps.
    pub tol: f64,
    pub n_starts: usize,
    pub p_max: f64,
    /// Per-link rate weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-5,
            n_starts: 100,
            p_max: 0.01,
            weights: None,
        }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) || self.n_starts == 0 || !(self.p_max > 0.0) {
            return Err(Error::invalid(
                "wmmse requires max_iters >= 1, tol > 0, n_starts >= 1 and p_max > 0",
            ));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::invalid("wmmse weights must be positive"));
            }
        }
        Ok(())
    }

    fn weights_for(&self, k: usize) -> Result<Vec<f64>> {
        match &self.weights {
            Some(w) if w.len() == k => Ok(w.clone()),
            Some(_) => Err(Error::invalid("weights length must equal k")),
            None => Ok(vec![1.0; k]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseRun {
    pub power: PowerVector,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted sum rate at the initial point, then after every sweep.
    pub trace: Vec<f64>,
}

fn wsr(gains: &GainMatrix, p: &[f64], sigma2: f64, weights: &[f64]) -> Result<f64> {
    Ok(weighted_sum_rate(&rates(gains, p, sigma2)?, weights))
}

/// Scalar-channel WMMSE block-coordinate ascent on the weighted sum rate.
///
/// Each sweep updates the receiver gains `u`, then the MSE weights `w`, then
/// the transmit amplitudes `v`, the last clipped to `[0, sqrt(p_max)]`.
pub fn wmmse(gains: &GainMatrix, sigma2: f64, cfg: &WmmseConfig, p_init: &[f64]) -> Result<WmmseRun> {
    cfg.validate()?;
    let k = gains.k();
    PowerVector::new(p_init.to_vec(), cfg.p_max)?;
    if p_init.len() != k {
        return Err(Error::invalid("initial power length must equal k"));
    }
    let alpha = cfg.weights_for(k)?;
    let v_max = math::sqrt(cfg.p_max);
    let amp: Vec<f64> = gains.as_slice().iter().map(|g| math::sqrt(*g)).collect();
    let a = |r: usize, t: usize| amp[r * k + t];

    let mut v: Vec<f64> = p_init.iter().map(|p| math::sqrt(*p)).collect();
    let mut u = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut p: Vec<f64> = p_init.to_vec();
    let mut current = wsr(gains, &p, sigma2, &alpha)?;
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        for r in 0..k {
            let received: f64 = (0..k).map(|t| gains.get(r, t) * v[t] * v[t]).sum::<f64>() + sigma2;
            u[r] = a(r, r) * v[r] / received;
            // 1 / e_r with e_r = 1 - u_r a_rr v_r the MMSE
            w[r] = 1.0 / (1.0 - u[r] * a(r, r) * v[r]);
        }
        for t in 0..k {
            let num = alpha[t] * w[t] * u[t] * a(t, t);
            let den: f64 = (0..k).map(|r| alpha[r] * w[r] * u[r] * u[r] * gains.get(r, t)).sum();
            v[t] = if den > 0.0 { (num / den).clamp(0.0, v_max) } else { v_max };
        }
        if v.iter().chain(&u).chain(&w).any(|x| !x.is_finite()) {
            return Err(Error::numerical(it, "non-finite WMMSE iterate"));
        }
        for (pt, vt) in p.iter_mut().zip(&v) {
            *pt = (vt * vt).min(cfg.p_max);
        }
        let next = wsr(gains, &p, sigma2, &alpha)?;
        trace.push(next);
        let change = (next - current).abs() / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(WmmseRun {
        power: PowerVector::new(p, cfg.p_max)?,
        iterations,
        converged,
        trace,
    })
}

/// Start `i` of the multi-start protocol: full power for `i == 0`, otherwise
/// uniform in `[0, p_max]^k`.
pub fn wmmse_starts(k: usize, p_max: f64, n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_starts)
        .map(|i| {
            if i == 0 {
                vec![p_max; k]
            } else {
                (0..k).map(|_| rng.random::<f64>() * p_max).collect()
            }
        })
        .collect()
}

/// Best of `n_starts` WMMSE runs measured by the target `objective`; ties go
/// to the lowest start index.
pub fn wmmse_best(
    gains: &GainMatrix,
    sigma2: f64,
    cfg: &WmmseConfig,
    objective: &Objective,
    seed: u64,
) -> Result<PowerVector> {
    cfg.validate()?;
    objective.validate()?;
    let mut best: Option<(f64, PowerVector)> = None;
    for start in wmmse_starts(gains.k(), cfg.p_max, cfg.n_starts, seed) {
        let run = wmmse(gains, sigma2, cfg, &start)?;
        let u = utility(&rates(gains, &run.power, sigma2)?, objective);
        if best.as_ref().is_none_or(|(b, _)| u > *b) {
            best = Some((u, run.power));
        }
    }
    Ok(best.expect("n_starts >= 1").1)
}

pub fn full_reuse(k: usize, p_max: f64) -> PowerVector {
    PowerVector(vec![p_max; k])
}

/// Exhaustive search over the uniform grid `{0, .., p_max}^k`. Ties resolve
/// to the lexicographically smallest power vector.
pub fn brute_force(
    gains: &GainMatrix,
    sigma2: f64,
    p_max: f64,
    grid_points: usize,
    objective: &Objective,
) -> Result<PowerVector> {
    let k = gains.k();
    if grid_points < 2 {
        return Err(Error::invalid("grid_points must be at least 2"));
    }
    let cost = libm::pow(grid_points as f64, k as f64);
    if k > BRUTE_FORCE_MAX_K || cost > BRUTE_FORCE_BUDGET {
        return Err(Error::ResourceLimit(format!(
            "brute force over {grid_points}^{k} points exceeds the budget"
        )));
    }
    let levels: Vec<f64> = (0..grid_points)
        .map(|i| p_max * i as f64 / (grid_points - 1) as f64)
        .collect();
    let mut idx = vec![0usize; k];
    let mut p = vec![0.0; k];
    let mut best_u = f64::NEG_INFINITY;
    let mut best = p.clone();
    loop {
        for (pi, &ii) in p.iter_mut().zip(&idx) {
            *pi = levels[ii];
        }
        let u = utility(&rates(gains, &p, sigma2)?, objective);
        if u > best_u {
            best_u = u;
            best.copy_from_slice(&p);
        }
        // odometer with the last coordinate fastest
        let mut d = k;
        loop {
            if d == 0 {
                return PowerVector::new(best, p_max);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < grid_points {
                break;
            }
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::rates;

    fn sym2(direct: f64, cross: f64) -> GainMatrix {
        GainMatrix::new(2, vec![direct, cross, cross, direct]).unwrap()
    }

    fn cfg(p_max: f64) -> WmmseConfig {
        WmmseConfig {
            p_max,
            ..WmmseConfig::default()
        }
    }

    fn sum_rate(g: &GainMatrix, p: &[f64], s2: f64) -> f64 {
        utility(&rates(g, p, s2).unwrap(), &Objective::SumRate)
    }

    #[test]
    fn single_link_goes_to_full_power() {
        let g = GainMatrix::new(1, vec![0.7]).unwrap();
        for init in [0.0, 0.3, 1.0] {
            let run = wmmse(&g, 1.0, &cfg(1.0), &[init]).unwrap();
            assert_eq!(run.power.as_slice(), &[1.0]);
        }
    }

    #[test]
    fn strong_interference_matches_grid() {
        let g = sym2(1.0, 10.0);
        let oracle = brute_force(&g, 1.0, 1.0, 101, &Objective::SumRate).unwrap();
        let u_oracle = sum_rate(&g, &oracle, 1.0);
        let p = wmmse_best(&g, 1.0, &cfg(1.0), &Objective::SumRate, 3).unwrap();
        assert!(sum_rate(&g, &p, 1.0) >= 0.98 * u_oracle);
        // binary: one link on, the other off
        let (hi, lo) = (p[0].max(p[1]), p[0].min(p[1]));
        assert!(hi > 0.99 && lo < 0.01, "{p:?}");
    }

    #[test]
    fn weak_interference_uses_full_power() {
        let g = sym2(1.0, 0.01);
        let run = wmmse(&g, 1.0, &cfg(1.0), &[0.2, 0.7]).unwrap();
        assert!(run.power.iter().all(|p| *p >= 0.99), "{:?}", run.power);
        let oracle = brute_force(&g, 1.0, 1.0, 101, &Objective::SumRate).unwrap();
        assert_eq!(oracle.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn surrogate_is_monotone() {
        let g = GainMatrix::new(3, vec![1.0, 0.8, 0.3, 0.5, 2.0, 0.9, 0.4, 0.6, 1.5]).unwrap();
        let run = wmmse(&g, 0.1, &cfg(1.0), &[0.5, 0.5, 0.5]).unwrap();
        for pair in run.trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "{:?}", run.trace);
        }
        assert!(run.trace.last().unwrap() >= &(run.trace[0] - 1e-9));
    }

    #[test]
    fn single_start_equals_full_power_run() {
        let g = GainMatrix::new(3, vec![1.0, 0.8, 0.3, 0.5, 2.0, 0.9, 0.4, 0.6, 1.5]).unwrap();
        let c = WmmseConfig { n_starts: 1, ..cfg(1.0) };
        let best = wmmse_best(&g, 0.1, &c, &Objective::SumRate, 99).unwrap();
        let single = wmmse(&g, 0.1, &c, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(best, single.power);
    }

    #[test]
    fn full_reuse_examples() {
        assert_eq!(full_reuse(3, 0.01).as_slice(), &[0.01, 0.01, 0.01]);
        assert_eq!(full_reuse(1, 2.5).as_slice(), &[2.5]);
    }

    #[test]
    fn brute_force_examples() {
        let one = GainMatrix::new(1, vec![1.0]).unwrap();
        assert_eq!(brute_force(&one, 1.0, 1.0, 11, &Objective::SumRate).unwrap().as_slice(), &[1.0]);
        let strong = brute_force(&sym2(1.0, 10.0), 1.0, 1.0, 11, &Objective::SumRate).unwrap();
        assert_eq!(strong.as_slice(), &[0.0, 1.0]);
        let big = GainMatrix::new(7, vec![1.0; 49]).unwrap();
        assert!(matches!(
            brute_force(&big, 1.0, 1.0, 2, &Objective::SumRate),
            Err(Error::ResourceLimit(_))
        ));
        let k4 = GainMatrix::new(4, vec![1.0; 16]).unwrap();
        assert!(brute_force(&k4, 1.0, 1.0, 101, &Objective::SumRate).is_err());
        assert!(brute_force(&one, 1.0, 1.0, 1, &Objective::SumRate).is_err());
    }

    #[test]
    fn outputs_are_feasible() {
        let g = GainMatrix::new(3, vec![1.0, 0.8, 0.3, 0.5, 2.0, 0.9, 0.4, 0.6, 1.5]).unwrap();
        for obj in [Objective::SumRate, Objective::proportional_fairness(), Objective::qos()] {
            let p = wmmse_best(&g, 0.1, &WmmseConfig { n_starts: 10, ..cfg(0.5) }, &obj, 1).unwrap();
            assert!(p.iter().all(|x| (0.0..=0.5).contains(x)));
        }
    }

    #[test]
    fn multi_start_is_deterministic() {
        let g = GainMatrix::new(3, vec![1.0, 0.8, 0.3, 0.5, 2.0, 0.9, 0.4, 0.6, 1.5]).unwrap();
        let c = WmmseConfig { n_starts: 20, ..cfg(1.0) };
        let a = wmmse_best(&g, 0.1, &c, &Objective::qos(), 5).unwrap();
        let b = wmmse_best(&g, 0.1, &c, &Objective::qos(), 5).unwrap();
        assert_eq!(a, b);
    }
}
