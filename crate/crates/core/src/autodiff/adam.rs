//! Adam optimizer with bias correction, operating on plain [`Tensor`]
//! parameters and externally supplied gradients.

use super::{GradError, Tensor};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam state over a fixed set of parameter tensors.  Moment buffers are
/// allocated up front and always shape-match their parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamParams,
    step: u64,
    slots: Vec<Slot>,
    sizes: Vec<usize>,
}

impl Adam {
    pub fn new(cfg: AdamParams, param_sizes: &[usize]) -> Result<Self, GradError> {
        if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
            return Err(GradError::BadStepSize(cfg.lr));
        }
        let slots = param_sizes
            .iter()
            .map(|&n| Slot {
                m: vec![0.0; n],
                v: vec![0.0; n],
            })
            .collect();
        Ok(Adam {
            cfg,
            step: 0,
            slots,
            sizes: param_sizes.to_vec(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Resets moments and the step counter, e.g. after loading a checkpoint.
    pub fn reset(&mut self) {
        self.step = 0;
        for slot in &mut self.slots {
            slot.m.iter_mut().for_each(|v| *v = 0.0);
            slot.v.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Applies one update.  `grads[i]` pairs with `params[i]`; a gradient of
    /// `None` or all zeros leaves that parameter and its moments untouched,
    /// so a step with no gradient signal is a no-op for any optimizer state.
    /// Any non-finite gradient value rejects the whole call without mutating
    /// anything.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Option<&[f64]>],
    ) -> Result<(), GradError> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(GradError::ParamCount {
                state: self.slots.len(),
                given: params.len().max(grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != self.sizes[i] {
                return Err(GradError::ShapeMismatch {
                    op: "adam",
                    left: format!("[{}]", self.sizes[i]),
                    right: format!("[{}]", p.numel()),
                });
            }
            if let Some(g) = g {
                if g.len() != self.sizes[i] {
                    return Err(GradError::ShapeMismatch {
                        op: "adam",
                        left: format!("[{}]", self.sizes[i]),
                        right: format!("[{}]", g.len()),
                    });
                }
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(GradError::NonFinite {
                        what: format!("gradient for parameter {i}"),
                    });
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let g = match grad {
                Some(g) if g.iter().any(|&v| v != 0.0) => g,
                _ => continue,
            };
            let data = param.data_mut();
            for j in 0..g.len() {
                slot.m[j] = self.cfg.beta1 * slot.m[j] + (1.0 - self.cfg.beta1) * g[j];
                slot.v[j] = self.cfg.beta2 * slot.v[j] + (1.0 - self.cfg.beta2) * g[j] * g[j];
                let mhat = slot.m[j] / bc1;
                let vhat = slot.v[j] / bc2;
                data[j] -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_hand_computation() {
        // Scalar parameter 0, gradient 1, lr 1e-3: bias-corrected mhat = 1,
        // vhat = 1, so the parameter moves to -lr / (1 + eps).
        let mut p = Tensor::scalar(0.0);
        let mut adam = Adam::new(AdamParams::with_lr(1e-3), &[1]).unwrap();
        adam.step(&mut [&mut p], &[Some(&[1.0])]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-9, "{}", p.data()[0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op_for_any_state() {
        let mut p = Tensor::scalar(0.5);
        let mut adam = Adam::new(AdamParams::with_lr(1e-2), &[1]).unwrap();
        // Build up non-trivial moment state first.
        adam.step(&mut [&mut p], &[Some(&[2.0])]).unwrap();
        let after_real = p.data()[0];
        adam.step(&mut [&mut p], &[Some(&[0.0])]).unwrap();
        assert_eq!(p.data()[0], after_real);
        adam.step(&mut [&mut p], &[None]).unwrap();
        assert_eq!(p.data()[0], after_real);
    }

    #[test]
    fn non_finite_gradient_rejects_whole_call() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let mut adam = Adam::new(AdamParams::with_lr(1e-3), &[1, 1]).unwrap();
        let err = adam.step(&mut [&mut a, &mut b], &[Some(&[1.0]), Some(&[f64::NAN])]);
        assert!(err.is_err());
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(b.data()[0], 2.0);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn descends_a_quadratic() {
        // Minimize (x - 3)^2 with gradient 2(x - 3).
        let mut p = Tensor::scalar(0.0);
        let mut adam = Adam::new(AdamParams::with_lr(0.05), &[1]).unwrap();
        for _ in 0..2000 {
            let g = 2.0 * (p.data()[0] - 3.0);
            adam.step(&mut [&mut p], &[Some(&[g])]).unwrap();
        }
        assert!((p.data()[0] - 3.0).abs() < 1e-2, "{}", p.data()[0]);
    }

    #[test]
    fn rejects_mismatched_gradient_length() {
        let mut p = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let mut adam = Adam::new(AdamParams::with_lr(1e-3), &[2]).unwrap();
        assert!(adam.step(&mut [&mut p], &[Some(&[1.0])]).is_err());
    }
}
