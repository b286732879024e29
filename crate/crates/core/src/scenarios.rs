//! Named scenario library.
//!
//! `D1`..`D15` cross five link densities with three distance ranges and are
//! used for pre-training; `D16`..`D20` use the wide `[1, 100]` m range for
//! few-shot adaptation. Every entry has a `-toy` twin with `K` in `{4, 6, 8}`
//! and the region shrunk so link density per square metre is unchanged.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channelsim::{snapshot_seed, ChannelSnapshot, PathLossConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::math;

pub const DENSITIES: [usize; 5] = [20, 35, 50, 65, 80];
pub const PRETRAIN_RANGES: [(f64, f64); 3] = [(2.0, 65.0), (10.0, 50.0), (30.0, 70.0)];
pub const ADAPTATION_RANGE: (f64, f64) = (1.0, 100.0);
pub const REGION_SIDE_M: f64 = 1000.0;

fn toy_k(k: usize) -> usize {
    match k {
        0..=35 => 4,
        36..=50 => 6,
        _ => 8,
    }
}

fn base(id: String, k: usize, side: f64, range: (f64, f64)) -> ScenarioConfig {
    ScenarioConfig {
        scenario_id: id,
        region_side_m: side,
        k,
        d_min_m: range.0,
        d_max_m: range.1,
        pathloss: PathLossConfig::default(),
        bandwidth_hz: 10e6,
        p_max_dbm: 10.0,
        noise_psd_dbm_hz: -174.0,
    }
}

/// Density and distance range of `D{index}` (1-based).
fn layout(index: usize) -> Option<(usize, (f64, f64))> {
    match index {
        1..=15 => {
            let i = index - 1;
            Some((DENSITIES[i / 3], PRETRAIN_RANGES[i % 3]))
        }
        16..=20 => Some((DENSITIES[index - 16], ADAPTATION_RANGE)),
        _ => None,
    }
}

/// Looks up `D1`..`D20` or `D1-toy`..`D20-toy`.
pub fn scenario(name: &str) -> Option<ScenarioConfig> {
    let (stem, toy) = match name.strip_suffix("-toy") {
        Some(stem) => (stem, true),
        None => (name, false),
    };
    let index: usize = stem.strip_prefix('D')?.parse().ok()?;
    let (k, range) = layout(index)?;
    if toy {
        let kt = toy_k(k);
        let side = REGION_SIDE_M * math::sqrt(kt as f64 / k as f64);
        Some(base(String::from(name), kt, libm::round(side), range))
    } else {
        Some(base(String::from(name), k, REGION_SIDE_M, range))
    }
}

pub fn names() -> Vec<String> {
    (1..=20)
        .flat_map(|i| [format!("D{i}"), format!("D{i}-toy")])
        .collect()
}

pub fn is_pretraining(name: &str) -> bool {
    let stem = name.strip_suffix("-toy").unwrap_or(name);
    matches!(stem.strip_prefix('D').and_then(|s| s.parse::<usize>().ok()), Some(1..=15))
}

/// Noise power of the synthetic strong-interference sets, with unit `p_max`.
pub const STRONG_SIGMA2: f64 = 0.01;

/// One synthetic `k`-link snapshot where cross gains are comparable to
/// direct gains: direct `|h_kk|^2` is uniform in `[0, 10]` dB and cross
/// `|h_kj|^2` uniform in `[-3, 3]` dB, against a noise floor of
/// [`STRONG_SIGMA2`]. Turning some links off is usually optimal.
pub fn strong_interference_snapshot(k: usize, seed: u64) -> Result<ChannelSnapshot> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..k * k)
        .map(|i| {
            let db = if i % (k + 1) == 0 {
                rng.random_range(0.0..10.0)
            } else {
                rng.random_range(-3.0..3.0)
            };
            math::pow10(db / 10.0)
        })
        .collect();
    let mut snap = ChannelSnapshot::from_power_gains(&g, &strong_id(k))?;
    snap.seed = seed;
    Ok(snap)
}

/// `n` strong-interference snapshots; snapshot `i` uses seed `base_seed + i`.
pub fn strong_interference(k: usize, n: usize, base_seed: u64) -> Result<Vec<ChannelSnapshot>> {
    (0..n)
        .map(|i| strong_interference_snapshot(k, snapshot_seed(base_seed, i)))
        .collect()
}

/// Identifier of the strong-interference family with `k` links.
pub fn strong_id(k: usize) -> String {
    format!("strong-k{k}")
}

/// Parses an identifier produced by [`strong_id`].
pub fn parse_strong_id(name: &str) -> Option<usize> {
    name.strip_prefix("strong-k")?.parse().ok().filter(|k| *k > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_is_complete_and_valid() {
        let all = names();
        assert_eq!(all.len(), 40);
        for n in &all {
            let s = scenario(n).unwrap();
            s.validate().unwrap();
            assert_eq!(&s.scenario_id, n);
        }
        assert!(scenario("D0").is_none());
        assert!(scenario("D21-toy").is_none());
        assert!(scenario("X3").is_none());
    }

    #[test]
    fn paper_layout() {
        let d1 = scenario("D1").unwrap();
        assert_eq!((d1.k, d1.d_min_m, d1.d_max_m), (20, 2.0, 65.0));
        let d15 = scenario("D15").unwrap();
        assert_eq!((d15.k, d15.d_min_m, d15.d_max_m), (80, 30.0, 70.0));
        let d18 = scenario("D18").unwrap();
        assert_eq!((d18.k, d18.d_min_m, d18.d_max_m), (50, 1.0, 100.0));
        assert!(is_pretraining("D9-toy"));
        assert!(!is_pretraining("D16"));
    }

    #[test]
    fn strong_interference_ranges() {
        let set = strong_interference(3, 50, 4).unwrap();
        assert_eq!(set.len(), 50);
        for s in &set {
            for r in 0..3 {
                for t in 0..3 {
                    let db = 10.0 * s.gain(r, t).norm_sqr().log10();
                    let (lo, hi) = if r == t { (0.0, 10.0) } else { (-3.0, 3.0) };
                    assert!(db >= lo - 1e-9 && db <= hi + 1e-9);
                }
            }
        }
        assert_eq!(strong_interference(3, 5, 4).unwrap()[2].gains, set[2].gains);
        assert_eq!(set[7], strong_interference_snapshot(3, 11).unwrap());
        assert_eq!(parse_strong_id(&strong_id(5)), Some(5));
        assert_eq!(parse_strong_id("strong-k0"), None);
    }

    #[test]
    fn toy_keeps_density() {
        for n in names().iter().filter(|n| n.ends_with("-toy")) {
            let toy = scenario(n).unwrap();
            let full = scenario(n.strip_suffix("-toy").unwrap()).unwrap();
            assert!([4, 6, 8].contains(&toy.k));
            let dt = toy.k as f64 / (toy.region_side_m * toy.region_side_m);
            let df = full.k as f64 / (full.region_side_m * full.region_side_m);
            assert!((dt / df - 1.0).abs() < 0.01);
        }
    }
}
