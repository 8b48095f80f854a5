//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { learning_rate: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

/// One Adam update. Returns the parameter delta (to be added) and the new state.
pub fn adam_step(state: &AdamState, grad: &[f64], params: &AdamParams) -> (Vec<f64>, AdamState) {
    assert_eq!(state.m.len(), grad.len(), "Adam state and gradient dimensions differ");
    let t = state.t + 1;
    let bc1 = 1.0 - params.beta1.powi(t as i32);
    let bc2 = 1.0 - params.beta2.powi(t as i32);
    let mut next = AdamState { m: Vec::with_capacity(grad.len()), v: Vec::with_capacity(grad.len()), t };
    let mut delta = Vec::with_capacity(grad.len());
    for ((&m, &v), &g) in state.m.iter().zip(&state.v).zip(grad) {
        let m = params.beta1 * m + (1.0 - params.beta1) * g;
        let v = params.beta2 * v + (1.0 - params.beta2) * g * g;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        delta.push(-params.learning_rate * m_hat / (v_hat.sqrt() + params.eps));
        next.m.push(m);
        next.v.push(v);
    }
    (delta, next)
}
