use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam with L2 weight decay folded into the gradient as `2 * wd * theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One optimizer update. Entries where `mask` is `false` are left untouched,
/// including their moment estimates.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, mask: Option<&[bool]>) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::invalid(format!(
            "shape mismatch: params {n}, grads {}, m {}, v {}",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(mask) = mask {
        if mask.len() != n {
            return Err(Error::invalid("mask length differs from parameter count"));
        }
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::invalid(format!("gradient entry {i} is not finite")));
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let g = grads[i] + 2.0 * state.weight_decay * params[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Scale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_identity() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, 1e-4, 0.0);
        adam_step(&mut p, &[0.5], &mut st, None).unwrap();
        let want = -1e-4 * (0.5 / (0.5 + 1e-8));
        assert!((p[0] - want).abs() < 1e-18, "{} vs {want}", p[0]);
        // -1e-4 * (1 - 2e-8)
        assert!((p[0] - -9.9999998e-5).abs() < 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_no_decay_leaves_params() {
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut st = AdamState::new(3, 1e-3, 0.0);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0; 3], &mut st, None).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_descent() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(1, 0.1, 0.0);
        for _ in 0..100 {
            let g = 2.0 * p[0];
            adam_step(&mut p, &[g], &mut st, None).unwrap();
        }
        assert!(p[0].abs() < 0.1, "theta = {}", p[0]);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2, 1e-3, 0.0);
        assert!(adam_step(&mut p, &[f64::INFINITY, 0.0], &mut st, None).is_err());
        assert!(adam_step(&mut p, &[0.0], &mut st, None).is_err());
        assert_eq!(st.t, 0);
    }

    #[test]
    fn masked_entries_untouched() {
        let mut p = vec![1.0, 1.0];
        let mut st = AdamState::new(2, 1e-2, 1e-3);
        adam_step(&mut p, &[1.0, 1.0], &mut st, Some(&[true, false])).unwrap();
        assert!(p[0] < 1.0);
        assert_eq!(p[1], 1.0);
        assert_eq!(st.m[1], 0.0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 5.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
