//! Named parameter storage.
//!
//! All learnable arrays of a network live in one flat [`ParamStore`]; modules
//! keep [`ParamId`] handles. The store owns initialization, gives the
//! optimizer and checkpointing a stable iteration order, and registers every
//! parameter as a graph leaf at the start of a step.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::invalid;
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};
use crate::Result;

/// Handle to one named parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// One named parameter array.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    entries: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    /// Insert a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(invalid("param_store", alloc::format!("duplicate parameter name {name}")));
        }
        if numel(&shape) != data.len() {
            return Err(invalid("param_store", alloc::format!("shape/data mismatch for {name}")));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(Param { name, shape, data });
        Ok(id)
    }

    /// Insert a parameter drawn uniformly from `[-bound, bound]`.
    pub fn uniform(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        bound: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let n = numel(&shape);
        let b = T::from_f64(bound);
        let data: Vec<T> = (0..n).map(|_| rng.random_range(-b..=b)).collect();
        self.add(name, shape, data)
    }

    /// Insert a constant-valued parameter.
    pub fn full(&mut self, name: impl Into<String>, shape: Vec<usize>, value: f64) -> Result<ParamId> {
        let n = numel(&shape);
        self.add(name, shape, alloc::vec![T::from_f64(value); n])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Register every parameter as a differentiable graph leaf.
    pub fn register_leaves(&self, g: &Graph<T>) -> Leaves {
        let vars = self
            .entries
            .iter()
            .map(|p| g.leaf(Tensor::from_arc_or_copy(p.shape.clone(), &p.data)))
            .collect();
        Leaves { vars }
    }

    /// Register every parameter as a constant (forward-only use).
    pub fn register_constants(&self, g: &Graph<T>) -> Leaves {
        let vars = self
            .entries
            .iter()
            .map(|p| g.constant(Tensor::from_arc_or_copy(p.shape.clone(), &p.data)))
            .collect();
        Leaves { vars }
    }
}

impl<T: Scalar> Tensor<T> {
    fn from_arc_or_copy(shape: Vec<usize>, data: &[T]) -> Tensor<T> {
        Tensor::new(shape, data.to_vec()).expect("param shape/data consistent by construction")
    }
}

/// Graph handles of every parameter in a store, indexed by [`ParamId`].
pub struct Leaves {
    vars: Vec<Var>,
}

impl Leaves {
    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.add("w", alloc::vec![2], alloc::vec![0.0; 2]).unwrap();
        assert!(store.add("w", alloc::vec![2], alloc::vec![0.0; 2]).is_err());
    }

    #[test]
    fn uniform_respects_bound_and_seed() {
        use rand::SeedableRng;
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let id = store.uniform("w", alloc::vec![64], 0.5, &mut rng).unwrap();
        assert!(store.get(id).data.iter().all(|v| v.abs() <= 0.5));

        let mut store2: ParamStore<f64> = ParamStore::new();
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let id2 = store2.uniform("w", alloc::vec![64], 0.5, &mut rng2).unwrap();
        assert_eq!(store.get(id).data, store2.get(id2).data);
    }
}
