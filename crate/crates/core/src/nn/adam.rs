//! Adam with bias correction.

use super::model::Params;
use super::scalar::Scalar;
use crate::error::{invalid, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_params(params: &Params<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One update of `params` in place:
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `w ← w − lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
pub fn adam_step<T: Scalar>(params: &mut Params<T>, grads: &Params<T>, state: &mut AdamState<T>, lr: f64) -> Result<()> {
    let n = params.tensors.len();
    if grads.tensors.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(invalid("optimizer state does not match parameters"));
    }
    for i in 0..n {
        let len = params.tensors[i].len();
        if grads.tensors[i].len() != len || state.m[i].len() != len || state.v[i].len() != len {
            return Err(invalid(format!("tensor {i}: shape mismatch between parameters, gradients and moments")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let (b1, b2) = (T::of(BETA1), T::of(BETA2));
    let (nb1, nb2) = (T::of(1.0 - BETA1), T::of(1.0 - BETA2));
    for i in 0..n {
        let w = &mut params.tensors[i];
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..w.len() {
            let g = grads.tensors[i][j];
            m[j] = b1 * m[j] + nb1 * g;
            v[j] = b2 * v[j] + nb2 * g * g;
            let m_hat = m[j].as_f64() / c1;
            let v_hat = v[j].as_f64() / c2;
            w[j] -= T::of(lr * m_hat / (v_hat.sqrt() + EPSILON));
        }
    }
    Ok(())
}
