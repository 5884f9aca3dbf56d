//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![T::zero(); p.numel()]).collect();
        Self {
            config,
            t: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// One update of every parameter from its accumulated gradient.
    /// Parameters without a gradient buffer are treated as having zero
    /// gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        if params.len() != self.first.len()
            || params
                .iter()
                .zip(&self.first)
                .any(|((_, p), m)| p.numel() != m.len())
        {
            return Err(Error::contract("Adam state does not match parameter shapes"));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.t as i32;
        let step = T::of(lr / (1.0 - beta1.powi(t)));
        let corr2 = T::of(1.0 / (1.0 - beta2.powi(t)));
        let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(epsilon));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (((_, p), m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Some(grad) = p.grad.take() else { continue };
            for (((w, g), m), v) in p.data_mut().iter_mut().zip(&grad).zip(m).zip(v) {
                *m = b1 * *m + one_b1 * *g;
                *v = b2 * *v + one_b2 * *g * *g;
                *w = *w - step * *m / ((*v * corr2).sqrt() + eps);
            }
            p.grad = Some(grad);
        }
        Ok(())
    }
}
