//! Training schedule: linear warm-up to the maximum learning rate, then a
//! single cosine decay to zero, no restarts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub n_epochs: usize,
    pub warmup_epochs: usize,
    pub max_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_epochs == 0 {
            return Err(Error::Config("n_epochs must be positive".into()));
        }
        if self.warmup_epochs >= self.n_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs {} must be smaller than n_epochs {}",
                self.warmup_epochs, self.n_epochs
            )));
        }
        if self.max_lr <= 0.0 {
            return Err(Error::Config("max_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.seq_len < 2 {
            return Err(Error::Config(
                "batch_size must be positive and seq_len at least 2".into(),
            ));
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 {
                return Err(Error::Config("grad_clip must be positive when set".into()));
            }
        }
        Ok(())
    }
}

/// Learning rate at a global step: linear ramp 0 -> max_lr over the warm-up
/// steps, then cosine decay max_lr -> 0 over the remaining steps. The two
/// pieces agree at the boundary, and the rate is exactly zero at
/// `n_epochs * steps_per_epoch`.
pub fn lr_at(schedule: &TrainSchedule, global_step: usize, steps_per_epoch: usize) -> f64 {
    let warmup_steps = schedule.warmup_epochs * steps_per_epoch;
    let total_steps = schedule.n_epochs * steps_per_epoch;
    if global_step >= total_steps {
        return 0.0;
    }
    if global_step < warmup_steps {
        return schedule.max_lr * global_step as f64 / warmup_steps as f64;
    }
    let progress = (global_step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    schedule.max_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule() -> TrainSchedule {
        TrainSchedule {
            n_epochs: 50,
            warmup_epochs: 1,
            max_lr: 0.02,
            momentum: 0.9,
            batch_size: 64,
            seq_len: 100,
            grad_clip: Some(0.25),
            seed: 0,
        }
    }

    #[test]
    fn ramp_starts_at_zero() {
        assert_eq!(lr_at(&schedule(), 0, 100), 0.0);
    }

    #[test]
    fn warmup_end_reaches_max_lr() {
        let s = schedule();
        assert_eq!(lr_at(&s, 100, 100), s.max_lr);
    }

    #[test]
    fn final_step_is_zero() {
        let s = schedule();
        let lr = lr_at(&s, 50 * 100, 100);
        assert!(lr.abs() < 1e-9 * s.max_lr);
    }

    #[test]
    fn continuous_at_warmup_boundary() {
        let s = schedule();
        let spe = 100;
        let before = lr_at(&s, s.warmup_epochs * spe - 1, spe);
        let at = lr_at(&s, s.warmup_epochs * spe, spe);
        assert!(at == s.max_lr);
        assert!((at - before) < s.max_lr / (s.warmup_epochs * spe) as f64 + 1e-12);
    }

    #[test]
    fn cosine_is_monotone_decreasing() {
        let s = schedule();
        let spe = 20;
        let mut prev = f64::INFINITY;
        for step in s.warmup_epochs * spe..=s.n_epochs * spe {
            let lr = lr_at(&s, step, spe);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut s = schedule();
        s.warmup_epochs = 50;
        assert!(s.validate().is_err());
        let mut s = schedule();
        s.max_lr = 0.0;
        assert!(s.validate().is_err());
    }
}
