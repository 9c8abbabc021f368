//! Named parameter tensors, their binding onto a [`Graph`], and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// All learnable tensors of one model, keyed by dotted path (`enc.cell.w`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
    /// Seed the set was initialized from.
    pub seed: u64,
}

impl ParameterSet {
    pub fn new(seed: u64) -> Self {
        Self {
            tensors: BTreeMap::new(),
            seed,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(!self.tensors.contains_key(&name), "duplicate parameter {name}");
        self.tensors.insert(name, t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let t = Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound));
        self.insert(name, t);
    }

    pub fn init_zeros(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    /// Sets every tensor to zero.
    pub fn zero_all(&mut self) {
        for t in self.tensors.values_mut() {
            t.data_mut().fill(0.0);
        }
    }

    /// Records every tensor as a differentiable leaf on `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self.tensors.iter().map(|(k, t)| (k.clone(), graph.param(t.clone()))).collect(),
        }
    }

    /// Records every tensor as a constant (no gradients).
    pub fn bind_frozen<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self.tensors.iter().map(|(k, t)| (k.clone(), graph.constant(t.clone()))).collect(),
        }
    }
}

/// A [`ParameterSet`] recorded on a graph.
pub struct Bound<'g> {
    vars: BTreeMap<String, Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn var(&self, name: &str) -> Var<'g> {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter {name} not bound"),
        }
    }

    /// Collects the gradient of every bound parameter.
    pub fn grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(k, v)| (k.clone(), grads.get_or_zeros(*v))).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first and second moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn update(&mut self, params: &mut ParameterSet, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = ParameterSet::new(0);
        p.insert("x", Tensor::new(vec![2], vec![3.0, -2.0]));
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() });
        for _ in 0..2000 {
            let g = Graph::new();
            let b = p.bind(&g);
            let loss = b.var("x").offset(-1.0).square().sum();
            let grads = b.grads(&g.backward(loss));
            opt.update(&mut p, &grads);
        }
        for v in p.get("x").unwrap().data() {
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut rng = stream(3, 0);
        let mut p = ParameterSet::new(3);
        p.init_uniform("w", &[4, 4], 4, &mut rng);
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig { lr: 0.0, ..Default::default() });
        let grads = p.iter().map(|(k, t)| (k.clone(), t.map(|_| 1.0))).collect();
        opt.update(&mut p, &grads);
        assert_eq!(p, before);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = stream(1, 0);
        let mut p = ParameterSet::new(1);
        p.init_uniform("w", &[100], 25, &mut rng);
        assert!(p.get("w").unwrap().data().iter().all(|v| v.abs() <= 0.2));
    }
}
