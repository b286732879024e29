use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Bound, ParameterSet, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<WorstCoordinate>,
    /// Largest relative error among coordinates whose discrepancy exceeds
    /// the float64 resolution of the central difference: [`RESOLUTION_ULPS`]
    /// ulps of the loss magnitude (floored at one, since a loss near zero may
    /// be a cancelling sum of larger terms) divided by `2 eps`. Coordinates
    /// below that bound cannot be judged by finite differences at this `eps`.
    pub max_rel_error_resolvable: f64,
    /// Coordinates whose discrepancy is within that resolution but whose
    /// relative error is still at least `1e-4`.
    pub unresolvable: usize,
    pub checked: usize,
}

/// Rounding slack, in units of machine epsilon times the loss magnitude,
/// allowed on each side of a central difference.
pub const RESOLUTION_ULPS: f64 = 8.0;

/// The coordinate with the largest relative error.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCoordinate {
    pub name: String,
    /// Flat index into the parameter.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares reverse-mode gradients of `loss` with central differences.
///
/// The relative error of one coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
/// The report gives the maximum over all checked coordinates and, separately,
/// over coordinates where the difference quotient is numerically meaningful.
/// When `max_coords` is `Some((n, seed))` and the model has more than `n`
/// scalars, a seeded uniform subsample of `n` coordinates is checked.
pub fn grad_check<F>(
    params: &ParameterSet,
    eps: f64,
    max_coords: Option<(usize, u64)>,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut analytic = params.clone();
    let mut tape = Tape::new();
    let bound = tape.bind(params, |_| true);
    let out = loss(&mut tape, &bound)?;
    let base = tape.value(out).item();
    if !base.is_finite() {
        return Err(Error::numerical(0, "loss is not finite"));
    }
    let grads = tape.backward(out)?;
    bound.store_grads(&tape, &grads, &mut analytic);

    let eval = |p: &ParameterSet| -> Result<f64> {
        let mut t = Tape::new();
        let b = t.bind(p, |_| false);
        let v = loss(&mut t, &b)?;
        let x = t.value(v).item();
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::numerical(0, "perturbed loss is not finite"))
        }
    };

    let mut coords: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|i| (0..params.value_by_index(i).numel()).map(move |j| (i, j)))
        .collect();
    if let Some((n, seed)) = max_coords {
        if coords.len() > n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, coords.len(), n).into_vec();
            picked.sort_unstable();
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        max_rel_error_resolvable: 0.0,
        unresolvable: 0,
        checked: 0,
    };
    let mut probe = params.clone();
    for (i, j) in coords {
        let orig = probe.value_by_index(i).data()[j];
        probe.value_by_index_mut(i).data_mut()[j] = orig + eps;
        let plus = eval(&probe)?;
        probe.value_by_index_mut(i).data_mut()[j] = orig - eps;
        let minus = eval(&probe)?;
        probe.value_by_index_mut(i).data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.grad_by_index(i).data()[j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.checked += 1;
        let resolution = RESOLUTION_ULPS * f64::EPSILON * (plus.abs() + minus.abs()).max(1.0) / (2.0 * eps);
        if (a - numeric).abs() > resolution {
            report.max_rel_error_resolvable = report.max_rel_error_resolvable.max(rel);
        } else if rel >= 1e-4 {
            report.unresolvable += 1;
        }
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = Some(WorstCoordinate {
                name: params.names()[i].clone(),
                index: j,
                analytic: a,
                numeric,
            });
        }
    }
    Ok(report)
}
