//! Adam optimizer and the cosine-annealing schedule with linear warmup.

use super::Param;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("learning rate must be positive, got {0}")]
    NonPositiveLr(f32),
    #[error("schedule needs total steps >= warmup steps, got total {total} < warmup {warmup}")]
    BadSchedule { total: usize, warmup: usize },
}

/// Per-parameter first/second moment state.
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

/// Adam with optional L2 weight decay folded into the gradient.
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    states: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(beta1: f32, beta2: f32, eps: f32, weight_decay: f32) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            weight_decay,
            states: HashMap::new(),
        }
    }

    /// One update over `params` at learning rate `lr`. Gradients are read
    /// from each param's accumulated grad buffer and left untouched.
    pub fn step(&mut self, params: &[Param], lr: f32) -> Result<(), OptimError> {
        if lr <= 0.0 {
            return Err(OptimError::NonPositiveLr(lr));
        }
        for p in params {
            if !p.trainable() {
                continue;
            }
            let name = p.name();
            let n = p.value().numel();
            let state = self.states.entry(name).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            });
            state.t += 1;
            let bc1 = 1.0 - self.beta1.powi(state.t as i32);
            let bc2 = 1.0 - self.beta2.powi(state.t as i32);
            let grad = p.grad();
            let wd = self.weight_decay;
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            p.update(|theta| {
                for i in 0..theta.len() {
                    let g = grad.data[i] + wd * theta[i];
                    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
                    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
                    let mhat = state.m[i] / bc1;
                    let vhat = state.v[i] / bc2;
                    theta[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }

    /// Serializes the moment state for the given params, in their order.
    pub fn export_state(&self, params: &[Param]) -> Vec<(String, Vec<f32>, Vec<f32>, u64)> {
        params
            .iter()
            .filter(|p| p.trainable())
            .filter_map(|p| {
                self.states
                    .get(&p.name())
                    .map(|s| (p.name(), s.m.clone(), s.v.clone(), s.t))
            })
            .collect()
    }

    pub fn import_state(&mut self, entries: Vec<(String, Vec<f32>, Vec<f32>, u64)>) {
        for (name, m, v, t) in entries {
            self.states.insert(name, Moments { m, v, t });
        }
    }
}

/// `lr(t) = base * (t+1)/warmup` while warming up, then cosine annealing
/// `base * 0.5 * (1 + cos(pi * (t - warmup) / (total - warmup)))`.
///
/// The first step runs at `base / warmup` rather than zero.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub base: f32,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    pub fn new(base: f32, warmup: usize, total: usize) -> Result<Self, OptimError> {
        if base <= 0.0 {
            return Err(OptimError::NonPositiveLr(base));
        }
        if total < warmup {
            return Err(OptimError::BadSchedule { total, warmup });
        }
        Ok(LrSchedule {
            base,
            warmup,
            total,
        })
    }

    pub fn at(&self, t: usize) -> f32 {
        if self.warmup > 0 && t < self.warmup {
            return self.base * (t + 1) as f32 / self.warmup as f32;
        }
        if t >= self.total {
            return 0.0;
        }
        let denom = (self.total - self.warmup).max(1) as f32;
        let phase = std::f32::consts::PI * (t - self.warmup) as f32 / denom;
        self.base * 0.5 * (1.0 + phase.cos())
    }
}

#[cfg(test)]
mod tests {
    use super::super::TensorData;
    use super::*;

    #[test]
    fn schedule_warmup_peak_and_end() {
        let s = LrSchedule::new(1e-3, 5, 100).unwrap();
        assert!((s.at(0) - 2e-4).abs() < 1e-9);
        assert!((s.at(4) - 1e-3).abs() < 1e-9);
        assert!((s.at(5) - 1e-3).abs() < 1e-9);
        assert_eq!(s.at(100), 0.0);
        assert!(s.at(99) > 0.0);
    }

    #[test]
    fn schedule_rejects_bad_base() {
        assert!(LrSchedule::new(0.0, 5, 100).is_err());
        assert!(LrSchedule::new(-1.0, 5, 100).is_err());
        assert!(LrSchedule::new(1e-3, 10, 5).is_err());
    }

    #[test]
    fn adam_rejects_non_positive_lr() {
        let mut adam = Adam::new(0.9, 0.999, 1e-8, 0.0);
        let p = Param::new("w", TensorData::scalar(1.0));
        assert!(adam.step(&[p], 0.0).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with a constant unit gradient the very first Adam step is ~lr
        let mut adam = Adam::new(0.9, 0.999, 1e-8, 0.0);
        let p = Param::new("w", TensorData::scalar(1.0));
        let tape = super::super::Tape::new();
        let w = tape.load(&p);
        let loss = w.sum();
        tape.backward(&loss);
        adam.step(&[p.clone()], 0.01).unwrap();
        let v = p.value().data[0];
        assert!((v - 0.99).abs() < 1e-4, "got {v}");
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut adam = Adam::new(0.9, 0.999, 1e-8, 0.1);
        let p = Param::new("w", TensorData::scalar(5.0));
        // zero gradient; only the decay term drives the update
        adam.step(&[p.clone()], 0.01).unwrap();
        assert!(p.value().data[0] < 5.0);
    }
}
