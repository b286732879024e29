//! SINR, spectral efficiency and the system utilities.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Rate floor used by the proportional-fairness utility, bps/Hz.
pub const PF_EPSILON: f64 = 1e-6;
/// Minimum rate for the QoS utility, bps/Hz.
pub const QOS_R_MIN: f64 = 0.3;
/// Penalty weight for the QoS utility.
pub const QOS_ALPHA: f64 = 15.0;

/// Power gains `|h_kj|^2`, row-major `k x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    k: usize,
    g: Vec<f64>,
}

impl GainMatrix {
    pub fn new(k: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != k * k {
            return Err(Error::invalid("gain matrix must be k x k"));
        }
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("gain matrix entries must be finite and non-negative"));
        }
        Ok(Self { k, g })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.g[k * self.k + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }
}

/// Transmit powers in watts, each within `[0, p_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(pub(crate) Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>, p_max: f64) -> Result<Self> {
        if p.iter().any(|x| !(0.0..=p_max).contains(x)) {
            return Err(Error::invalid("powers must lie in [0, p_max]"));
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl core::ops::Deref for PowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Objective {
    SumRate,
    ProportionalFairness { epsilon: f64 },
    Qos { r_min: f64, alpha: f64 },
}

impl Objective {
    pub fn proportional_fairness() -> Self {
        Objective::ProportionalFairness { epsilon: PF_EPSILON }
    }

    pub fn qos() -> Self {
        Objective::Qos {
            r_min: QOS_R_MIN,
            alpha: QOS_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Objective::SumRate => Ok(()),
            Objective::ProportionalFairness { epsilon } if epsilon > 0.0 => Ok(()),
            Objective::Qos { r_min, alpha } if r_min > 0.0 && alpha > 1.0 => Ok(()),
            _ => Err(Error::invalid("objective parameters out of range")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::SumRate => "sum_rate",
            Objective::ProportionalFairness { .. } => "proportional_fairness",
            Objective::Qos { .. } => "qos",
        }
    }

    /// Minimum rate used for violated-user reporting; QoS uses its own `r_min`.
    pub fn report_r_min(&self) -> f64 {
        match *self {
            Objective::Qos { r_min, .. } => r_min,
            _ => QOS_R_MIN,
        }
    }
}

fn check_inputs(gains: &GainMatrix, p: &[f64], sigma2: f64) -> Result<()> {
    if p.len() != gains.k() {
        return Err(Error::invalid("power vector length must equal k"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("noise power must be positive and finite"));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("powers must be finite and non-negative"));
    }
    Ok(())
}

/// `SINR_k = |h_kk|^2 p_k / (sum_{j != k} |h_kj|^2 p_j + sigma2)`.
pub fn sinr(gains: &GainMatrix, p: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    check_inputs(gains, p, sigma2)?;
    let k = gains.k();
    Ok((0..k)
        .map(|r| {
            let interference: f64 = (0..k).filter(|&j| j != r).map(|j| gains.get(r, j) * p[j]).sum();
            gains.get(r, r) * p[r] / (interference + sigma2)
        })
        .collect())
}

/// `R_k = log2(1 + SINR_k)` in bps/Hz.
pub fn rates(gains: &GainMatrix, p: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    Ok(sinr(gains, p, sigma2)?
        .into_iter()
        .map(|s| math::log2(1.0 + s))
        .collect())
}

pub fn utility(rates: &[f64], objective: &Objective) -> f64 {
    match *objective {
        Objective::SumRate => rates.iter().sum(),
        Objective::ProportionalFairness { epsilon } => {
            rates.iter().map(|r| math::ln(r.max(epsilon))).sum()
        }
        Objective::Qos { r_min, alpha } => rates
            .iter()
            .map(|r| r - alpha * (r_min - r).max(0.0))
            .sum(),
    }
}

/// Weighted sum rate, the quantity WMMSE ascends.
pub fn weighted_sum_rate(rates: &[f64], weights: &[f64]) -> f64 {
    rates.iter().zip(weights).map(|(r, w)| r * w).sum()
}

pub fn normalized_ratio(u_model: f64, u_ref: f64) -> Result<f64> {
    if u_ref == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(u_model / u_ref)
}

/// Ratio of dataset means.
pub fn dataset_ratio(u_model: &[f64], u_ref: &[f64]) -> Result<f64> {
    if u_model.is_empty() || u_model.len() != u_ref.len() {
        return Err(Error::invalid("utility lists must be non-empty and of equal length"));
    }
    let n = u_model.len() as f64;
    normalized_ratio(u_model.iter().sum::<f64>() / n, u_ref.iter().sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn sym2(direct: f64, cross: f64) -> GainMatrix {
        GainMatrix::new(2, vec![direct, cross, cross, direct]).unwrap()
    }

    #[test]
    fn sinr_examples() {
        let one = GainMatrix::new(1, vec![1.0]).unwrap();
        assert_eq!(sinr(&one, &[1.0], 1.0).unwrap(), vec![1.0]);
        let s = sinr(&sym2(1.0, 0.5), &[1.0, 1.0], 1.0).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15 && (s[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(sinr(&sym2(1.0, 0.5), &[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert!(GainMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(sinr(&one, &[1.0], 0.0).is_err());
    }

    #[test]
    fn rate_examples() {
        let one = GainMatrix::new(1, vec![1.0]).unwrap();
        assert_eq!(rates(&one, &[1.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(rates(&one, &[0.0], 1.0).unwrap(), vec![0.0]);
        let r = rates(&sym2(1.0, 0.5), &[1.0, 1.0], 1.0).unwrap();
        let want = (5.0f64 / 3.0).log2();
        assert!((r[0] - want).abs() < 1e-12 && (r[0] - 0.73697).abs() < 1e-5);
    }

    #[test]
    fn utility_examples() {
        assert_eq!(utility(&[1.0, 2.0, 3.0], &Objective::SumRate), 6.0);
        let q = Objective::Qos { r_min: 0.3, alpha: 15.0 };
        assert!((utility(&[0.5], &q) - 0.5).abs() < 1e-12);
        assert!((utility(&[0.1], &q) - (-2.9)).abs() < 1e-12);
        assert_eq!(utility(&[1.0, 1.0], &Objective::ProportionalFairness { epsilon: 1e-6 }), 0.0);
        assert!((utility(&[0.0], &Objective::proportional_fairness()) - 1e-6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(normalized_ratio(6.0, 6.0).unwrap(), 1.0);
        assert_eq!(normalized_ratio(3.0, 6.0).unwrap(), 0.5);
        assert!(normalized_ratio(-3.0, -1.0).unwrap() > 1.0);
        assert_eq!(normalized_ratio(1.0, 0.0), Err(Error::UndefinedRatio));
        assert_eq!(dataset_ratio(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn objective_validation() {
        assert!(Objective::qos().validate().is_ok());
        assert!(Objective::Qos { r_min: 0.3, alpha: 1.0 }.validate().is_err());
        assert!(Objective::ProportionalFairness { epsilon: 0.0 }.validate().is_err());
    }

    fn gains_and_powers() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        (2usize..6).prop_flat_map(|k| {
            (
                Just(k),
                proptest::collection::vec(1e-3f64..10.0, k * k),
                proptest::collection::vec(0.01f64..1.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn raising_own_power_helps_self_hurts_others((k, g, p) in gains_and_powers(), who in 0usize..6, bump in 0.01f64..1.0) {
            let who = who % k;
            let gm = GainMatrix::new(k, g).unwrap();
            let before = sinr(&gm, &p, 0.5).unwrap();
            let mut q = p.clone();
            q[who] += bump;
            let after = sinr(&gm, &q, 0.5).unwrap();
            prop_assert!(after[who] > before[who]);
            for j in (0..k).filter(|&j| j != who) {
                prop_assert!(after[j] <= before[j]);
            }
        }

        #[test]
        fn sinr_scale_invariant((k, g, p) in gains_and_powers(), c in 0.1f64..10.0) {
            let a = sinr(&GainMatrix::new(k, g.clone()).unwrap(), &p, 0.3).unwrap();
            // amplitudes scaled by c => power gains and noise scaled by c^2
            let scaled: Vec<f64> = g.iter().map(|x| x * c * c).collect();
            let b = sinr(&GainMatrix::new(k, scaled).unwrap(), &p, 0.3 * c * c).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn utilities_non_decreasing_in_each_rate(r in proptest::collection::vec(0.0f64..5.0, 1..8), who in 0usize..8, d in 1e-6f64..1.0) {
            let who = who % r.len();
            let mut up = r.clone();
            up[who] += d;
            for obj in [Objective::SumRate, Objective::proportional_fairness(), Objective::qos()] {
                prop_assert!(utility(&up, &obj) >= utility(&r, &obj));
            }
        }
    }
}
