//! Named, ordered parameter collections and their binding into a graph.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::graph::{Gradients, Graph, Var};
use crate::numerics::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Checks that `other` has exactly the same names and shapes, in order.
    pub fn check_layout(&self, other: &ParamSet<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter names differ".into()));
        }
        for (n, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!("parameter {n}: {:?} vs {:?}", a.shape(), b.shape())));
            }
        }
        Ok(())
    }

    /// FNV-1a over names, shapes and the raw bits of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (n, t) in self.iter() {
            eat(n.as_bytes());
            for &d in t.shape() {
                eat(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Records every parameter as a trainable leaf (or a constant when `trainable` is false).
    pub fn bind<'g>(&self, graph: &'g Graph<T>, trainable: bool) -> Bound<'g, '_, T> {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { graph.param(t.clone()) } else { graph.constant(t.clone()) })
            .collect();
        Bound { set: self, graph, vars }
    }
}

/// Parameters recorded into one graph.
pub struct Bound<'g, 'p, T: Real> {
    set: &'p ParamSet<T>,
    graph: &'g Graph<T>,
    vars: Vec<Var<'g, T>>,
}

impl<'g, T: Real> Bound<'g, '_, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn var(&self, name: &str) -> Var<'g, T> {
        match self.set.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("unknown parameter {name}"),
        }
    }

    /// Gradients in parameter order; parameters that did not participate get zeros.
    pub fn grads(&self, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        self.vars.iter().map(|&v| grads.wrt_or_zero(v)).collect()
    }
}

/// Sums per-example gradient lists in list order.
pub fn sum_grads<T: Real>(mut parts: Vec<Vec<Tensor<T>>>) -> Option<Vec<Tensor<T>>> {
    if parts.is_empty() {
        return None;
    }
    let mut acc = parts.remove(0);
    for part in parts {
        for (a, b) in acc.iter_mut().zip(&part) {
            a.add_assign(b).expect("gradient layout");
        }
    }
    Some(acc)
}

/// Uniform in `[-1/√fan_in, 1/√fan_in]`.
pub fn fan_in_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut crate::rng::Rng) -> Tensor<T> {
    use rand::Rng as _;
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of_f64(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
