//! Hybrid self-supervised pre-training and utility-driven fine-tuning.

mod finetune;
mod pretrain;

pub use finetune::{finetune, finetune_loss_on_tape, FinetuneConfig, FinetuneEpoch, FinetuneInit, FinetuneOutcome};
pub use pretrain::{
    pretrain, pretrain_losses, pretrain_loss_on_tape, pretrain_step, PretrainConfig,
    PretrainEpoch, PretrainEvent, PretrainLosses, PretrainOutcome, StepReport,
};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

/// Global gradient-norm ceiling applied before every optimizer step.
pub const GRAD_CLIP_NORM: f64 = 5.0;

/// Smallest decrease of the validation loss that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-8;

/// `teacher <- tau * teacher + (1 - tau) * student` for every teacher
/// parameter. Student-only parameters are ignored.
pub fn ema_update(teacher: &mut ParameterSet, student: &ParameterSet, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("tau must lie in [0, 1]"));
    }
    for i in 0..teacher.len() {
        let name = &teacher.names()[i];
        let src = student
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
        let dst = teacher.value_by_index(i);
        if src.shape() != dst.shape() {
            return Err(Error::Shape {
                op: "ema_update",
                lhs: dst.shape().to_vec(),
                rhs: src.shape().to_vec(),
            });
        }
        if tau == 1.0 {
            continue;
        }
        let src = src.data().to_vec();
        for (t, s) in teacher.value_by_index_mut(i).data_mut().iter_mut().zip(src) {
            *t = tau * *t + (1.0 - tau) * s;
        }
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a validation improvement of at least [`MIN_IMPROVEMENT`].
#[derive(Debug, Clone, PartialEq)]
pub struct LrScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: f64,
    stale: usize,
}

impl LrScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's validation loss and returns the rate for the next.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - MIN_IMPROVEMENT || (self.best.is_infinite() && val_loss.is_finite()) {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.patience > 0 && self.stale >= self.patience {
                self.lr *= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Hex SHA-256 over the little-endian bytes of `values`.
pub fn digest_f64(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    let mut out = String::with_capacity(64);
    for b in h.finalize().iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use alloc::vec;

    fn single(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::new(vec![1], vec![v]).unwrap()).unwrap();
        p
    }

    #[test]
    fn ema_examples() {
        let s = single(0.5);
        let mut t = single(1.0);
        ema_update(&mut t, &s, 0.996).unwrap();
        assert!((t.get("w").unwrap().data()[0] - 0.998).abs() < 1e-15);

        let mut t = single(1.0);
        ema_update(&mut t, &s, 1.0).unwrap();
        assert_eq!(t.get("w").unwrap().data()[0], 1.0);

        let mut t = single(1.0);
        ema_update(&mut t, &s, 0.0).unwrap();
        assert_eq!(t.get("w").unwrap().data()[0], 0.5);
    }

    #[test]
    fn ema_rejects_mismatch() {
        let mut t = single(1.0);
        let mut s = ParameterSet::new();
        s.insert("w", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(ema_update(&mut t, &s, 0.5), Err(Error::Shape { .. })));
        assert!(matches!(
            ema_update(&mut t, &ParameterSet::new(), 0.5),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn scheduler_decays_after_patience() {
        let mut s = LrScheduler::new(1e-4, 0.5, 10);
        s.step(1.0);
        for _ in 0..9 {
            assert_eq!(s.step(1.0), 1e-4);
        }
        assert_eq!(s.step(1.0), 5e-5);
        for _ in 0..10 {
            s.step(1.0);
        }
        assert_eq!(s.lr(), 2.5e-5);
    }

    #[test]
    fn scheduler_resets_on_improvement() {
        let mut s = LrScheduler::new(1e-4, 0.5, 10);
        s.step(1.0);
        for _ in 0..8 {
            s.step(1.0);
        }
        s.step(0.5);
        for _ in 0..9 {
            s.step(0.5);
        }
        assert_eq!(s.lr(), 1e-4);
        // a gain below the threshold is not an improvement
        s.step(0.5 - 1e-9);
        assert_eq!(s.lr(), 5e-5);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest_f64(&[]).len(), 64);
        assert_eq!(digest_f64(&[1.0, 2.0]), digest_f64(&[1.0, 2.0]));
        assert_ne!(digest_f64(&[1.0, 2.0]), digest_f64(&[2.0, 1.0]));
    }
}
