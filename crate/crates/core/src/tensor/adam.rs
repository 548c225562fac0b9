use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of the `λ·w` term added to the gradient of decayed parameters.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    moments: Option<(Vec<Vec<T>>, Vec<Vec<T>>)>,
}

impl<T: Scalar> AdamState<T> {
    /// Uninitialised state; call [`AdamState::init`] before stepping.
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: None,
        }
    }

    /// Allocate zeroed moment buffers matching every parameter in `store`.
    pub fn init(&mut self, store: &ParamStore<T>) {
        let zeros = || -> Vec<Vec<T>> { store.ids().map(|id| vec![T::zero(); store.value(id).len()]).collect() };
        self.moments = Some((zeros(), zeros()));
        self.step = 0;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_initialized(&self) -> bool {
        self.moments.is_some()
    }

    pub fn first_moment(&self, id: ParamId) -> Option<&[T]> {
        self.moments.as_ref().map(|(m, _)| m[id.index()].as_slice())
    }

    pub fn second_moment(&self, id: ParamId) -> Option<&[T]> {
        self.moments.as_ref().map(|(_, v)| v[id.index()].as_slice())
    }

    /// Restore buffers (e.g. from a checkpoint).
    pub fn restore(&mut self, step: u64, first: Vec<Vec<T>>, second: Vec<Vec<T>>) {
        self.step = step;
        self.moments = Some((first, second));
    }

    /// One update of every parameter from its accumulated gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        let Some((ms, vs)) = self.moments.as_mut() else {
            return Err(Error::Usage("adam state used before init".into()));
        };
        if ms.len() != store.len() {
            return Err(Error::Usage("adam state does not match the parameter store".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - Float::powi(c.beta1, t);
        let bc2 = 1.0 - Float::powi(c.beta2, t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / bc1);
        let inv_bc2_sqrt = T::of(1.0 / Float::sqrt(bc2));
        let eps = T::of(c.eps);
        let wd = T::of(c.weight_decay);
        for id in store.ids().collect::<Vec<_>>() {
            let decay = store.decays(id) && c.weight_decay != 0.0;
            let grad = store.grad(id).to_vec();
            let (m, v) = (&mut ms[id.index()], &mut vs[id.index()]);
            if m.len() != grad.len() {
                return Err(Error::Usage("adam moment shape mismatch".into()));
            }
            let w = store.value_mut(id).data_mut();
            for i in 0..w.len() {
                let g = if decay { grad[i] + wd * w[i] } else { grad[i] };
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let denom = v[i].sqrt() * inv_bc2_sqrt + eps;
                w[i] = w[i] - step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}
