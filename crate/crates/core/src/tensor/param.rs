use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Param<T> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
    decay: bool,
}

/// Named learnable tensors together with their accumulated gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Register a tensor. `decay` marks it for weight decay (matrices, not biases).
    pub fn add(&mut self, name: &str, value: Tensor<T>, decay: bool) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter name {name}");
        let grad = vec![T::zero(); value.len()];
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
            decay,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform Xavier init: `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_xavier(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut SplitMix64,
    ) -> ParamId {
        let limit = Float::sqrt(6.0 / (fan_in + fan_out) as f64);
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.symmetric(limit))).collect();
        self.add(name, Tensor { shape: shape.to_vec(), data }, true)
    }

    pub fn add_const(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, T::of(value)), false)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].grad
    }

    pub fn decays(&self, id: ParamId) -> bool {
        self.params[id.0].decay
    }

    /// Reset every accumulated gradient to zero.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn scale_grads(&mut self, factor: T) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copy of the store in another element type (gradients reset).
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: vec![U::zero(); p.value.len()],
                    decay: p.decay,
                })
                .collect(),
        }
    }

    /// Replace the value of `name`, checking the shape.
    pub fn assign(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Config(alloc::format!("unknown parameter {name}")))?;
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::Config(alloc::format!(
                "parameter {name}: shape {:?} does not match {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p.name.as_str(), &p.value))
    }
}
