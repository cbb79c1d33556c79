use std::collections::HashMap;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// A trainable tensor together with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Param { value, grad }
    }
}

/// Named parameters in insertion order. The order is part of the contract:
/// optimizer state and the model file are aligned by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    names: Vec<String>,
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        let idx = self.params.len();
        self.index.insert(name.clone(), idx);
        self.names.push(name);
        self.params.push(Param::new(value));
        idx
    }

    /// Adds a `rows x cols` parameter drawn from uniform(-r, r), r = 1/sqrt(fan_in).
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> usize {
        let r = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-r..r)).collect();
        self.insert(name, Tensor::from_vec(rows, cols, data).expect("consistent shape"))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Result<&Param> {
        Ok(&self.params[self.index_of(name)?])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Result<&mut Param> {
        let idx = self.index_of(name)?;
        Ok(&mut self.params[idx])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.names.iter().map(String::as_str).zip(self.params.iter_mut())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Rescales gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn insertion_order_is_stable() {
        let mut ps = ParameterSet::new();
        ps.insert("b", Tensor::zeros(1, 1));
        ps.insert("a", Tensor::zeros(2, 2));
        let names: Vec<_> = ps.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["b", "a"]);
        assert_eq!(ps.index_of("a").unwrap(), 1);
        assert!(matches!(ps.index_of("zz"), Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn uniform_init_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParameterSet::new();
        let i = ps.insert_uniform("w", 10, 10, 16, &mut rng);
        assert!(ps.get(i).value.data().iter().all(|v| v.abs() < 0.25));
    }

    #[test]
    fn clipping_caps_norm() {
        let mut ps = ParameterSet::new();
        ps.insert("w", Tensor::zeros(1, 2));
        ps.get_mut(0).grad = Tensor::row_vector(vec![3.0, 4.0]);
        assert_eq!(ps.clip_grad_norm(1.0), 5.0);
        assert!((ps.grad_norm() - 1.0).abs() < 1e-12);
        let before = ps.get(0).grad.clone();
        ps.clip_grad_norm(10.0);
        assert_eq!(ps.get(0).grad, before);
    }
}
