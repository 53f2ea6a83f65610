//! Adam parameter updates and global-norm gradient clipping.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::graph::Grads;
use crate::params::{Leaves, ParamStore};
use crate::scalar::Scalar;
use crate::Result;

/// Adam moment-decay and stability constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, parallel to a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let m = store.iter().map(|(_, p)| alloc::vec![T::zero(); p.data.len()]).collect::<Vec<_>>();
        let v = m.clone();
        AdamState { step: 0, m, v }
    }
}

/// Pull per-parameter gradients out of a backward pass. Parameters the loss
/// never touched get `None`.
pub fn take_param_grads<T: Scalar>(
    grads: &mut Grads<T>,
    leaves: &Leaves,
    n_params: usize,
) -> Vec<Option<Vec<T>>> {
    let mut out = Vec::with_capacity(n_params);
    for (i, var) in leaves.iter().enumerate() {
        debug_assert!(i < n_params);
        out.push(grads.take(var));
    }
    out
}

/// Scale all gradients so their joint L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Option<Vec<T>>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.iter().flatten() {
        for &v in g {
            sq += v.to_f64() * v.to_f64();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::from_f64(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v = *v * scale;
            }
        }
    }
    norm
}

/// One Adam step with bias correction over every parameter in the store.
/// Gradients that are `None` count as zero (moments still decay). A
/// non-finite gradient aborts the step naming the parameter.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &[Option<Vec<T>>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = store.len();
    if grads.len() != n || state.m.len() != n {
        return Err(crate::error::invalid("adam", "gradient/state arity mismatch"));
    }
    for (idx, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.iter().any(|v| !v.is_finite()) {
                let name: String = store.iter().nth(idx).map(|(_, p)| p.name.clone()).unwrap_or_default();
                return Err(CoreError::InvalidArg {
                    op: "adam",
                    msg: alloc::format!("non-finite gradient for parameter {name}"),
                });
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_m_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = T::from_f64(1.0 - cfg.beta2);
    let corr1 = T::from_f64(1.0 / (1.0 - cfg.beta1.powi(t)));
    let corr2 = T::from_f64(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr_t = T::from_f64(lr);
    let eps = T::from_f64(cfg.eps);
    for idx in 0..n {
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let data = &mut store.get_mut(crate::params::ParamId(idx)).data;
        match &grads[idx] {
            Some(g) => {
                for i in 0..data.len() {
                    m[i] = b1 * m[i] + one_m_b1 * g[i];
                    v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
                    let m_hat = m[i] * corr1;
                    let v_hat = v[i] * corr2;
                    data[i] = data[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
                }
            }
            None => {
                for i in 0..data.len() {
                    m[i] = b1 * m[i];
                    v[i] = b2 * v[i];
                    let m_hat = m[i] * corr1;
                    let v_hat = v[i] * corr2;
                    data[i] = data[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: Vec<f64>) -> (ParamStore<f64>, AdamState<f64>) {
        let mut store: ParamStore<f64> = ParamStore::new();
        let n = values.len();
        store.add("w", alloc::vec![n], values).unwrap();
        let state = AdamState::new(&store);
        (store, state)
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let (mut store, mut state) = store_with(alloc::vec![1.0, -2.0, 3.0]);
        let grads = alloc::vec![Some(alloc::vec![0.0, 0.0, 0.0])];
        adam_step(&mut store, &grads, &mut state, 0.001, &AdamConfig::default()).unwrap();
        assert_eq!(store.get(crate::params::ParamId(0)).data, alloc::vec![1.0, -2.0, 3.0]);
        // Moments decay toward zero (they started at zero and stay there).
        assert!(state.m[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        let (mut store, mut state) = store_with(alloc::vec![1.0, 1.0]);
        let grads = alloc::vec![Some(alloc::vec![0.5, -2.0])];
        let cfg = AdamConfig::default();
        adam_step(&mut store, &grads, &mut state, 0.001, &cfg).unwrap();
        // First-step bias-corrected update is g/|g| up to eps.
        let data = &store.get(crate::params::ParamId(0)).data;
        assert!((data[0] - (1.0 - 0.001)).abs() < 1e-6);
        assert!((data[1] - (1.0 + 0.001)).abs() < 1e-6);
    }

    #[test]
    fn five_steps_match_hand_rolled_oracle() {
        // Minimize f(w) = w^2 from w = 1.
        let (mut store, mut state) = store_with(alloc::vec![1.0]);
        let cfg = AdamConfig::default();
        let lr = 0.1;
        let mut w_oracle = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=5 {
            let g = 2.0 * store.get(crate::params::ParamId(0)).data[0];
            let grads = alloc::vec![Some(alloc::vec![g])];
            adam_step(&mut store, &grads, &mut state, lr, &cfg).unwrap();

            let g_o = 2.0 * w_oracle;
            m = 0.9 * m + 0.1 * g_o;
            v = 0.999 * v + 0.001 * g_o * g_o;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            w_oracle -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            assert!(
                (store.get(crate::params::ParamId(0)).data[0] - w_oracle).abs() < 1e-12,
                "step {t}"
            );
        }
    }

    #[test]
    fn non_finite_gradient_aborts_with_parameter_name() {
        let (mut store, mut state) = store_with(alloc::vec![1.0]);
        let grads = alloc::vec![Some(alloc::vec![f64::NAN])];
        let err = adam_step(&mut store, &grads, &mut state, 0.001, &AdamConfig::default());
        match err {
            Err(CoreError::InvalidArg { msg, .. }) => assert!(msg.contains('w'), "{msg}"),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = alloc::vec![Some(alloc::vec![3.0f64, 4.0])]; // norm 5
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let g = grads[0].as_ref().unwrap();
        let new_norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((new_norm - 1.0).abs() < 1e-12);

        let mut small = alloc::vec![Some(alloc::vec![0.1f64, 0.1])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].as_ref().unwrap(), &alloc::vec![0.1, 0.1]);
    }
}
