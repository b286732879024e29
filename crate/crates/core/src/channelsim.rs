//! Network topology and channel generation.
//!
//! A snapshot is a pure function of `(ScenarioConfig, seed)`. Each snapshot
//! draws from three independent ChaCha streams of the same seed: topology,
//! shadowing and small-scale fading.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;

const TOPOLOGY_STREAM: u64 = 0;
const SHADOWING_STREAM: u64 = 1;
const FADING_STREAM: u64 = 2;

/// Resample budget per receiver before generation gives up.
pub const MAX_RECEIVER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathLossConfig {
    pub exponent_near: f64,
    pub exponent_far: f64,
    pub breakpoint_m: f64,
    /// Loss at 1 m.
    pub ref_loss_db: f64,
    pub shadowing_std_db: f64,
}

impl Default for PathLossConfig {
    fn default() -> Self {
        Self {
            exponent_near: 2.0,
            exponent_far: 4.0,
            breakpoint_m: 50.0,
            ref_loss_db: 38.46,
            shadowing_std_db: 7.0,
        }
    }
}

impl PathLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.breakpoint_m > 0.0) {
            return Err(Error::invalid("breakpoint_m must be positive"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(Error::invalid("shadowing_std_db must be non-negative"));
        }
        if !(self.exponent_near >= 0.0 && self.exponent_far >= self.exponent_near) {
            return Err(Error::invalid(
                "path-loss exponents must satisfy exponent_far >= exponent_near >= 0",
            ));
        }
        if !self.ref_loss_db.is_finite() {
            return Err(Error::invalid("ref_loss_db must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub region_side_m: f64,
    /// Number of transmitter-receiver links.
    pub k: usize,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub pathloss: PathLossConfig,
    pub bandwidth_hz: f64,
    pub p_max_dbm: f64,
    pub noise_psd_dbm_hz: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.d_min_m > 0.0 && self.d_min_m < self.d_max_m && self.d_max_m <= self.region_side_m)
        {
            return Err(Error::invalid(
                "distances must satisfy 0 < d_min_m < d_max_m <= region_side_m",
            ));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth_hz must be positive"));
        }
        if !self.p_max_dbm.is_finite() || !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::invalid("power levels must be finite"));
        }
        self.pathloss.validate()
    }

    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn noise_watts(&self) -> Result<f64> {
        noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        math::hypot(self.x - other.x, self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub tx_pos: Vec<Point>,
    pub rx_pos: Vec<Point>,
}

impl Topology {
    pub fn k(&self) -> usize {
        self.tx_pos.len()
    }

    /// Distance from transmitter `j` to receiver `k`.
    pub fn distance(&self, k: usize, j: usize) -> f64 {
        self.rx_pos[k].distance(&self.tx_pos[j])
    }

    /// Every receiver is strictly closer to its own transmitter than to any other.
    pub fn satisfies_nearest_neighbor(&self) -> bool {
        let k = self.k();
        (0..k).all(|r| {
            let own = self.distance(r, r);
            (0..k).filter(|&j| j != r).all(|j| own < self.distance(r, j))
        })
    }

    /// Checks the full set of placement invariants for `cfg`.
    pub fn is_valid_for(&self, cfg: &ScenarioConfig) -> bool {
        let inside = |p: &Point| {
            (0.0..=cfg.region_side_m).contains(&p.x) && (0.0..=cfg.region_side_m).contains(&p.y)
        };
        self.tx_pos.len() == cfg.k
            && self.rx_pos.len() == cfg.k
            && self.tx_pos.iter().chain(&self.rx_pos).all(inside)
            && (0..cfg.k).all(|k| {
                let d = self.distance(k, k);
                d >= cfg.d_min_m && d <= cfg.d_max_m
            })
            && self.satisfies_nearest_neighbor()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub topology: Topology,
    /// Row-major `k x k`; entry `(k, j)` is the amplitude gain from transmitter
    /// `j` to receiver `k`.
    pub gains: Vec<Complex64>,
    pub seed: u64,
    pub scenario_id: String,
}

impl ChannelSnapshot {
    pub fn k(&self) -> usize {
        self.topology.k()
    }

    pub fn gain(&self, k: usize, j: usize) -> Complex64 {
        self.gains[k * self.k() + j]
    }

    /// `|h_kj|^2`, row-major.
    pub fn power_gains(&self) -> Vec<f64> {
        self.gains.iter().map(|h| h.norm_sqr()).collect()
    }

    /// Builds a snapshot directly from a row-major `k x k` matrix of power
    /// gains, with real positive amplitudes. Links are placed 1 km apart with
    /// 1 m pairs so the topology is trivially valid; the positions carry no
    /// meaning.
    pub fn from_power_gains(power_gains: &[f64], scenario_id: &str) -> Result<Self> {
        let k = libm::sqrt(power_gains.len() as f64) as usize;
        if k == 0 || k * k != power_gains.len() {
            return Err(Error::invalid("power gain matrix must be square and non-empty"));
        }
        if power_gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::invalid("power gains must be finite and non-negative"));
        }
        let tx_pos = (0..k).map(|i| Point::new(1000.0 * i as f64, 0.0)).collect();
        let rx_pos = (0..k).map(|i| Point::new(1000.0 * i as f64, 1.0)).collect();
        Ok(ChannelSnapshot {
            topology: Topology { tx_pos, rx_pos },
            gains: power_gains
                .iter()
                .map(|p| Complex64::new(math::sqrt(*p), 0.0))
                .collect(),
            seed: 0,
            scenario_id: String::from(scenario_id),
        })
    }
}

/// Small-scale fading model used by [`sample_channel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    #[default]
    Rayleigh,
    /// Unit gain on every link; isolates the large-scale terms.
    Unit,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    math::pow10((dbm - 30.0) / 10.0)
}

/// Thermal noise power in watts for a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power(psd_dbm_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::invalid("bandwidth_hz must be positive"));
    }
    Ok(math::pow10(
        (psd_dbm_hz + 10.0 * math::log10(bandwidth_hz) - 30.0) / 10.0,
    ))
}

/// Deterministic dual-slope path loss in dB (no shadowing).
pub fn path_loss_db(d_m: f64, pl: &PathLossConfig) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::invalid("distance must be positive"));
    }
    let loss = if d_m <= pl.breakpoint_m {
        pl.ref_loss_db + 10.0 * pl.exponent_near * math::log10(d_m)
    } else {
        pl.ref_loss_db
            + 10.0 * pl.exponent_near * math::log10(pl.breakpoint_m)
            + 10.0 * pl.exponent_far * math::log10(d_m / pl.breakpoint_m)
    };
    Ok(loss)
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Places transmitters uniformly over the region, then draws each receiver
/// uniformly (by area) from the annulus around its transmitter, resampling
/// until it lies inside the region and is nearer its own transmitter than any
/// other.
pub fn sample_topology(cfg: &ScenarioConfig, seed: u64) -> Result<Topology> {
    cfg.validate()?;
    let mut rng = stream(seed, TOPOLOGY_STREAM);
    let side = cfg.region_side_m;
    let tx_pos: Vec<Point> = (0..cfg.k)
        .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect();

    let r2_lo = cfg.d_min_m * cfg.d_min_m;
    let r2_hi = cfg.d_max_m * cfg.d_max_m;
    let mut rx_pos = Vec::with_capacity(cfg.k);
    for (k, tx) in tx_pos.iter().enumerate() {
        let mut placed = None;
        for _ in 0..MAX_RECEIVER_ATTEMPTS {
            let r = math::sqrt(r2_lo + rng.random::<f64>() * (r2_hi - r2_lo));
            let theta = 2.0 * PI * rng.random::<f64>();
            let rx = Point::new(tx.x + r * math::cos(theta), tx.y + r * math::sin(theta));
            if !(0.0..=side).contains(&rx.x) || !(0.0..=side).contains(&rx.y) {
                continue;
            }
            let own = rx.distance(tx);
            if own < cfg.d_min_m || own > cfg.d_max_m {
                continue;
            }
            let nearest = tx_pos
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .all(|(_, other)| own < rx.distance(other));
            if nearest {
                placed = Some(rx);
                break;
            }
        }
        match placed {
            Some(rx) => rx_pos.push(rx),
            None => {
                return Err(Error::GenerationFailure {
                    link: k,
                    attempts: MAX_RECEIVER_ATTEMPTS,
                })
            }
        }
    }
    Ok(Topology { tx_pos, rx_pos })
}

/// Draws the complex gain matrix for `topology`: dual-slope path loss,
/// log-normal shadowing and Rayleigh fading, independently per link.
pub fn sample_channel(
    topology: &Topology,
    cfg: &ScenarioConfig,
    seed: u64,
    fading: Fading,
) -> Result<ChannelSnapshot> {
    cfg.pathloss.validate()?;
    let k = topology.k();
    if k == 0 || topology.rx_pos.len() != k {
        return Err(Error::invalid("topology must have matching, non-empty tx/rx lists"));
    }
    let mut shadow_rng = stream(seed, SHADOWING_STREAM);
    let mut fading_rng = stream(seed, FADING_STREAM);
    let mut gains = Vec::with_capacity(k * k);
    for r in 0..k {
        for t in 0..k {
            let pl = path_loss_db(topology.distance(r, t), &cfg.pathloss)?;
            let z: f64 = StandardNormal.sample(&mut shadow_rng);
            let shadow = cfg.pathloss.shadowing_std_db * z;
            let large_scale = math::sqrt(math::pow10(-(pl + shadow) / 10.0));
            let small_scale = match fading {
                Fading::Rayleigh => {
                    let re: f64 = StandardNormal.sample(&mut fading_rng);
                    let im: f64 = StandardNormal.sample(&mut fading_rng);
                    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
                }
                Fading::Unit => Complex64::new(1.0, 0.0),
            };
            gains.push(small_scale * large_scale);
        }
    }
    if gains.iter().any(|h| !h.re.is_finite() || !h.im.is_finite() || h.norm_sqr() == 0.0) {
        return Err(Error::numerical(0, "channel gain underflowed or is non-finite"));
    }
    Ok(ChannelSnapshot {
        topology: topology.clone(),
        gains,
        seed,
        scenario_id: cfg.scenario_id.clone(),
    })
}

/// One full snapshot for `seed`.
pub fn generate_snapshot(cfg: &ScenarioConfig, seed: u64) -> Result<ChannelSnapshot> {
    let topology = sample_topology(cfg, seed)?;
    sample_channel(&topology, cfg, seed, Fading::Rayleigh)
}

/// Snapshot `i` of a dataset uses seed `base_seed + i`.
pub fn snapshot_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Snapshots `0..n` of a dataset, generated in order.
pub fn generate_snapshots(cfg: &ScenarioConfig, n: usize, base_seed: u64) -> Result<Vec<ChannelSnapshot>> {
    (0..n)
        .map(|i| generate_snapshot(cfg, snapshot_seed(base_seed, i)))
        .collect()
}
