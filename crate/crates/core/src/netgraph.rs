//! Interference graph construction, feature standardization and edge masks.
//!
//! Node `k` carries the standardized dB gain of its direct link. The directed
//! edge `j -> k` carries the standardized dB gains `(|h_kj|^2, |h_jk|^2)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channelsim::ChannelSnapshot;
use crate::error::{Error, Result};
use crate::math;

pub const NODE_FEATURES: usize = 1;
pub const EDGE_FEATURES: usize = 2;
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormStats {
    pub node_mean_db: f64,
    pub node_std_db: f64,
    pub edge_mean_db: f64,
    pub edge_std_db: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        node_mean_db: 0.0,
        node_std_db: 1.0,
        edge_mean_db: 0.0,
        edge_std_db: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = [self.node_mean_db, self.node_std_db, self.edge_mean_db, self.edge_std_db]
            .iter()
            .all(|v| v.is_finite())
            && self.node_std_db > 0.0
            && self.edge_std_db > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("normalization statistics must be finite with positive stds"))
        }
    }
}

/// Welford accumulator.
#[derive(Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            STD_FLOOR
        } else {
            math::sqrt(self.m2 / self.n as f64).max(STD_FLOOR)
        }
    }
}

pub fn gain_db(power_gain: f64) -> f64 {
    10.0 * math::log10(power_gain)
}

/// Population mean and standard deviation of dB direct and cross gains over
/// every snapshot. Standard deviations are floored at `1e-6`.
pub fn compute_norm_stats<'a, I>(snapshots: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a ChannelSnapshot>,
{
    let mut node = Moments::default();
    let mut edge = Moments::default();
    for snap in snapshots {
        let k = snap.k();
        for r in 0..k {
            for t in 0..k {
                let db = gain_db(snap.gain(r, t).norm_sqr());
                if r == t {
                    node.push(db);
                } else {
                    edge.push(db);
                }
            }
        }
    }
    if node.n == 0 {
        return Err(Error::invalid("cannot compute statistics of an empty dataset"));
    }
    Ok(NormStats {
        node_mean_db: node.mean,
        node_std_db: node.std(),
        edge_mean_db: if edge.n == 0 { 0.0 } else { edge.mean },
        edge_std_db: edge.std(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph {
    pub k: usize,
    /// `k x NODE_FEATURES`.
    pub node_feat: Vec<f64>,
    /// `k x k x EDGE_FEATURES`; diagonal entries are absent and stored as zero.
    pub edge_feat: Vec<f64>,
    /// Complex amplitude gains, row-major `k x k`.
    pub gains: Vec<Complex64>,
    /// Noise power in watts.
    pub sigma2: f64,
}

impl InterferenceGraph {
    pub fn has_edge(&self, k: usize, j: usize) -> bool {
        k != j && k < self.k && j < self.k
    }

    pub fn edge(&self, k: usize, j: usize) -> &[f64] {
        let at = (k * self.k + j) * EDGE_FEATURES;
        &self.edge_feat[at..at + EDGE_FEATURES]
    }

    /// `|h_kj|^2`, row-major.
    pub fn power_gains(&self) -> Vec<f64> {
        self.gains.iter().map(|h| h.norm_sqr()).collect()
    }

    /// Off-diagonal pairs `(k, j)` in row-major order.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        off_diagonal_pairs(self.k)
    }

    /// Relabels links: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<InterferenceGraph> {
        let k = self.k;
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("permutation must be a bijection on 0..k"));
        }
        let mut out = self.clone();
        for a in 0..k {
            out.node_feat[a] = self.node_feat[perm[a]];
            for b in 0..k {
                out.gains[a * k + b] = self.gains[perm[a] * k + perm[b]];
                let dst = (a * k + b) * EDGE_FEATURES;
                let src = (perm[a] * k + perm[b]) * EDGE_FEATURES;
                out.edge_feat[dst..dst + EDGE_FEATURES]
                    .copy_from_slice(&self.edge_feat[src..src + EDGE_FEATURES]);
            }
        }
        Ok(out)
    }

    /// Inverts the standardization: `(direct dB gains, k x k cross dB gains)`.
    /// Diagonal cross entries are zero.
    pub fn recover_db(&self, stats: &NormStats) -> (Vec<f64>, Vec<f64>) {
        let direct = self
            .node_feat
            .iter()
            .map(|f| f * stats.node_std_db + stats.node_mean_db)
            .collect();
        let mut cross = vec![0.0; self.k * self.k];
        for (k, j) in self.edge_pairs() {
            cross[k * self.k + j] = self.edge(k, j)[0] * stats.edge_std_db + stats.edge_mean_db;
        }
        (direct, cross)
    }
}

pub fn off_diagonal_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|r| (0..k).filter(move |&c| c != r).map(move |c| (r, c)))
        .collect()
}

pub fn build_graph(
    snapshot: &ChannelSnapshot,
    stats: &NormStats,
    sigma2: f64,
) -> Result<InterferenceGraph> {
    stats.validate()?;
    let k = snapshot.k();
    if snapshot.gains.len() != k * k {
        return Err(Error::invalid("gain matrix must be k x k"));
    }
    let mut db = vec![0.0; k * k];
    for r in 0..k {
        for t in 0..k {
            let g = snapshot.gain(r, t).norm_sqr();
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!("gain h[{r}][{t}] is zero or non-finite")));
            }
            db[r * k + t] = gain_db(g);
        }
    }
    let node_feat = (0..k)
        .map(|r| (db[r * k + r] - stats.node_mean_db) / stats.node_std_db)
        .collect();
    let mut edge_feat = vec![0.0; k * k * EDGE_FEATURES];
    let std_edge = |v: f64| (v - stats.edge_mean_db) / stats.edge_std_db;
    for (r, t) in off_diagonal_pairs(k) {
        let at = (r * k + t) * EDGE_FEATURES;
        edge_feat[at] = std_edge(db[r * k + t]);
        edge_feat[at + 1] = std_edge(db[t * k + r]);
    }
    Ok(InterferenceGraph {
        k,
        node_feat,
        edge_feat,
        gains: snapshot.gains.clone(),
        sigma2,
    })
}

/// Off-diagonal edges whose features are withheld.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskView {
    pub k: usize,
    /// Row-major `k x k`.
    pub masked: Vec<bool>,
    pub ratio: f64,
    pub seed: u64,
}

impl MaskView {
    pub fn none(k: usize) -> Self {
        MaskView {
            k,
            masked: vec![false; k * k],
            ratio: 0.0,
            seed: 0,
        }
    }

    pub fn is_masked(&self, k: usize, j: usize) -> bool {
        self.masked[k * self.k + j]
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }

    /// Masked pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        off_diagonal_pairs(self.k)
            .into_iter()
            .filter(|&(k, j)| self.is_masked(k, j))
            .collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> MaskView {
        let k = self.k;
        let mut out = self.clone();
        for a in 0..k {
            for b in 0..k {
                out.masked[a * k + b] = self.masked[perm[a] * k + perm[b]];
            }
        }
        out
    }
}

/// `round(rho * k * (k - 1))`, halves rounded up.
pub fn mask_count(k: usize, rho: f64) -> usize {
    let n = (k * k.saturating_sub(1)) as f64;
    libm::floor(rho * n + 0.5) as usize
}

/// Uniformly samples exactly [`mask_count`] distinct off-diagonal positions.
pub fn mask_edges(k: usize, rho: f64, seed: u64) -> Result<MaskView> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("mask ratio must lie in [0, 1]"));
    }
    let pairs = off_diagonal_pairs(k);
    let m = mask_count(k, rho).min(pairs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = vec![false; k * k];
    for i in rand::seq::index::sample(&mut rng, pairs.len(), m).into_iter() {
        let (r, c) = pairs[i];
        masked[r * k + c] = true;
    }
    Ok(MaskView {
        k,
        masked,
        ratio: rho,
        seed,
    })
}
