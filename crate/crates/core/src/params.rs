//! Named, ordered parameter storage shared by every model.

use indexmap::IndexMap;
use rand::Rng;

use crate::autograd::Gradients;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    params: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.params.insert(name.into(), tensor.with_grad());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::contract(format!("missing parameter {name:?}")))
    }

    pub fn require_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.get_mut(name)
            .ok_or_else(|| Error::contract(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub(crate) fn index_of(&self, name: &str) -> Option<usize> {
        self.params.get_index_of(name)
    }

    pub(crate) fn get_index(&self, index: usize) -> &Tensor<T> {
        &self.params[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(Tensor::zero_grad);
    }

    /// Adds the gradients recorded for this store's parameters into their
    /// `grad` buffers.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (i, t) in self.params.values_mut().enumerate() {
            if let Some(g) = grads.param(i) {
                t.accumulate_grad(g);
            }
        }
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let sq: f64 = self
            .params
            .values()
            .filter_map(|t| t.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|x| {
                let x = x.to_f64().unwrap_or(0.0);
                x * x
            })
            .sum();
        let norm = sq.sqrt();
        if norm > max_norm {
            let k = T::of(max_norm / norm);
            for g in self.params.values_mut().filter_map(|t| t.grad.as_mut()) {
                g.iter_mut().for_each(|x| *x = *x * k);
            }
        }
        norm
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast::<U>()))
                .collect(),
        }
    }
}

/// Uniform(−bound, bound) tensor.
pub fn uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

/// Normal(0, std) tensor via Box-Muller.
pub fn normal<T: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            T::of(std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
        })
        .collect();
    Tensor::new(shape, data).expect("shape and data agree")
}
