//! Adam with bias correction, over flat parameter vectors.
//!
//! Shared by the schedule optimizer and the network updates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdamError {
    #[error("length mismatch: state {state}, params {params}, grads {grads}")]
    LengthMismatch { state: usize, params: usize, grads: usize },
    #[error("betas must lie in [0, 1), got ({0}, {1})")]
    InvalidBeta(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step_count: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn with_params(n: usize, beta1: f64, beta2: f64, eps: f64) -> Result<Self, AdamError> {
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(AdamError::InvalidBeta(beta1, beta2));
        }
        Ok(Self { beta1, beta2, eps, ..Self::new(n) })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// In-place update `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), AdamError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(AdamError::LengthMismatch { state: self.m.len(), params: params.len(), grads: grads.len() });
        }
        self.step_count += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.step_count.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - b2.powi(self.step_count.min(i32::MAX as u64) as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    params: &[f64],
    grads: &[f64],
    lr: f64,
) -> Result<(AdamState, Vec<f64>), AdamError> {
    let mut next = state.clone();
    let mut out = params.to_vec();
    next.step(&mut out, grads, lr)?;
    Ok((next, out))
}
