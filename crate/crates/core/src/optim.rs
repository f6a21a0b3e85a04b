//! Adam with bias correction, an ℓ2 penalty applied as a gradient addition
//! on weight tensors, and the step-decay learning-rate schedule.

use thiserror::Error;

use crate::net::{AutoencoderParams, GradientBuffer, TensorId};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient in {tensor:?}[{index}]")]
    NonFiniteGradient { tensor: TensorId, index: usize },
}

/// Step-decay learning-rate schedule:
/// `lr(epoch) = initial_lr * decay_factor^(epoch / decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { initial_lr: 0.01, decay_factor: 0.3, decay_every: 30 }
    }
}

impl Schedule {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        debug_assert!(self.initial_lr > 0.0);
        debug_assert!(self.decay_factor > 0.0 && self.decay_factor < 1.0);
        self.initial_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Add the ℓ2 penalty gradient `lambda * theta` to every weight tensor;
/// bias gradients are untouched.
pub fn apply_l2(grads: &mut GradientBuffer, params: &AutoencoderParams, lambda: f64) {
    assert!(lambda >= 0.0, "l2 weight must be nonnegative");
    if lambda == 0.0 {
        return;
    }
    for id in TensorId::ALL {
        if !id.is_weights() {
            continue;
        }
        for (g, w) in grads.tensor_mut(id).iter_mut().zip(params.tensor(id)) {
            *g += lambda * w;
        }
    }
}

/// Adam moment buffers and step counter for one branch.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradientBuffer,
    v: GradientBuffer,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &AutoencoderParams) -> Self {
        Self {
            m: GradientBuffer::zeros_like(params),
            v: GradientBuffer::zeros_like(params),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update:
    /// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g²`,
    /// `theta <- theta - lr * m̂ / (sqrt(v̂) + eps)` with the usual bias
    /// corrections. Rejects non-finite gradients before touching anything.
    pub fn step(
        &mut self,
        params: &mut AutoencoderParams,
        grads: &GradientBuffer,
        lr: f64,
    ) -> Result<(), OptimError> {
        self.step_with_l2(params, grads, lr, 0.0)
    }

    /// Equivalent to [`apply_l2`] followed by [`AdamState::step`], computing
    /// bitwise-identical parameters without materializing the regularized
    /// gradient. These buffers are memory-bound, so the saved pass matters
    /// in the training loop.
    pub fn step_with_l2(
        &mut self,
        params: &mut AutoencoderParams,
        grads: &GradientBuffer,
        lr: f64,
        lambda: f64,
    ) -> Result<(), OptimError> {
        for id in TensorId::ALL {
            if let Some(index) = grads.tensor(id).iter().position(|g| !g.is_finite()) {
                return Err(OptimError::NonFiniteGradient { tensor: id, index });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for id in TensorId::ALL {
            let g = grads.tensor(id);
            let m = self.m.tensor_mut(id);
            let v = self.v.tensor_mut(id);
            let theta = params.tensor_mut(id);
            let reg = if id.is_weights() { lambda } else { 0.0 };
            if reg == 0.0 {
                for (((theta, &g), m), v) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *theta -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                }
            } else {
                for (((theta, &g), m), v) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v) {
                    let g = g + reg * *theta;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *theta -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
