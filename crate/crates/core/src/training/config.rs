use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Optimizer and schedule settings shared by every training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Learning rate of the reconstruction sub-model.
    pub submodel_lr: f64,
    /// Joint tuning rate of the first `k_p` (exported) layers.
    pub prefix_lr: f64,
    /// Rate of every other layer, and of all layers when training from scratch.
    pub tail_lr: f64,
    /// Learning rates are divided by `decay` every `decay_interval` iterations.
    pub decay: f64,
    pub decay_interval: usize,
    pub momentum: f64,
    pub batch_size: usize,
    pub pretrain_iterations: usize,
    pub tune_iterations: usize,
    pub seed: u64,
    /// Worker threads for per-sample gradients; results do not depend on it.
    pub threads: usize,
    /// Record a metrics line every this many iterations (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            submodel_lr: 1e-4,
            prefix_lr: 1e-3,
            tail_lr: 1e-2,
            decay: 10.0,
            decay_interval: 5000,
            momentum: 0.9,
            batch_size: 64,
            pretrain_iterations: 5000,
            tune_iterations: 10000,
            seed: 0,
            threads: 1,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("submodel_lr", self.submodel_lr),
            ("prefix_lr", self.prefix_lr),
            ("tail_lr", self.tail_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.decay >= 1.0) {
            return Err(Error::Config(format!("decay must be at least 1, got {}", self.decay)));
        }
        if self.decay_interval == 0 {
            return Err(Error::Config("decay_interval must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn lr(&self, base: f64, iteration: usize) -> f64 {
        lr_at_with(iteration, base, self.decay, self.decay_interval)
    }
}

/// Step schedule dividing `base` by 10 every `decay_interval` iterations.
pub fn lr_at(iteration: usize, base: f64, decay_interval: usize) -> f64 {
    lr_at_with(iteration, base, 10.0, decay_interval)
}

pub fn lr_at_with(iteration: usize, base: f64, decay: f64, decay_interval: usize) -> f64 {
    let steps = (iteration / decay_interval.max(1)) as i32;
    base / decay.powi(steps)
}

/// Momentum SGD: `v <- momentum * v - lr * g; w <- w + v`.
pub fn sgd_step<R: Real>(weights: &mut [R], grads: &[R], velocity: &mut [R], lr: R, momentum: R) {
    debug_assert!(weights.len() == grads.len() && grads.len() == velocity.len());
    for ((w, &g), v) in weights.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_at(0, 0.01, 5000), 0.01);
        assert_eq!(lr_at(4999, 0.01, 5000), 0.01);
        assert_eq!(lr_at(5000, 0.01, 5000), 0.01 / 10.0);
        assert_eq!(lr_at(12000, 0.01, 5000), 0.01 / 100.0);
        let mut prev = f64::INFINITY;
        for it in (0..40000).step_by(250) {
            let lr = lr_at(it, 1e-3, 5000);
            assert!(lr <= prev);
            let expect = 1e-3 * 10f64.powi(-((it / 5000) as i32));
            assert!((lr - expect).abs() <= 1e-15 * expect.abs().max(1e-30) + f64::EPSILON * expect);
            prev = lr;
        }
    }

    #[test]
    fn sgd_trivial_cases() {
        let mut w = [1.0, -2.0];
        let mut v = [0.0, 0.0];
        sgd_step(&mut w, &[0.0, 0.0], &mut v, 0.1, 0.9);
        assert_eq!(w, [1.0, -2.0]);
        let mut w = [1.0f64];
        let mut v = [0.0];
        sgd_step(&mut w, &[1.0], &mut v, 0.1, 0.0);
        assert!((w[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_steps_closed_form() {
        // v1 = -lr g1, w1 = w0 - lr g1; v2 = -m lr g1 - lr g2, w2 = w1 + v2
        let (lr, m, w0, g1, g2) = (0.05f64, 0.9, 0.7, 0.3, -1.2);
        let mut w = [w0];
        let mut v = [0.0];
        sgd_step(&mut w, &[g1], &mut v, lr, m);
        sgd_step(&mut w, &[g2], &mut v, lr, m);
        let expect = w0 - lr * g1 + (-m * lr * g1 - lr * g2);
        assert!((w[0] - expect).abs() < 1e-14);
        assert!((v[0] - (-m * lr * g1 - lr * g2)).abs() < 1e-14);
    }

    #[test]
    fn config_validation_and_toml() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            decay_interval: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg: TrainConfig = toml::from_str("tail_lr = 0.05\nbatch_size = 16\n").unwrap();
        assert_eq!((cfg.tail_lr, cfg.batch_size, cfg.momentum), (0.05, 16, 0.9));
        assert!(toml::from_str::<TrainConfig>("learning_rate = 1").is_err());
    }

    proptest::proptest! {
        #[test]
        fn schedule_is_stepwise_and_nonincreasing(
            base in 1e-6f64..1.0,
            interval in 1usize..20_000,
            a in 0usize..100_000,
            b in 0usize..100_000,
        ) {
            let (lo, hi) = (a.min(b), a.max(b));
            proptest::prop_assert!(lr_at(hi, base, interval) <= lr_at(lo, base, interval));
            let expect = base * 10f64.powi(-((lo / interval) as i32));
            proptest::prop_assert!((lr_at(lo, base, interval) - expect).abs() <= 1e-12 * expect);
            let start = lo / interval * interval;
            proptest::prop_assert_eq!(lr_at(lo, base, interval), lr_at(start, base, interval));
        }
    }
}
