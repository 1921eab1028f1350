use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, ParamKey, Var};
use crate::Tensor;

/// An ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
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

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.bit_eq(b))
    }

    /// Places every tensor on the graph. With `group` set the parameters are
    /// trainable under that group id; otherwise they are constants.
    pub fn bind(&self, graph: &mut Graph, group: Option<u32>) -> Bound {
        let vars = self
            .tensors
            .iter()
            .enumerate()
            .map(|(index, t)| match group {
                Some(group) => graph.param(t.clone(), ParamKey { group, index }),
                None => graph.constant(t.clone()),
            })
            .collect();
        Bound { vars }
    }
}

/// Graph handles for a bound [`ParamSet`], in parameter order.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }
}

/// Uniform in `±1/√fan_in`.
pub fn fan_in_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("length matches shape")
}
