//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a Wengert tape: every forward operation appends a node
//! holding its output value and, when any input requires gradients, a
//! backward closure that maps the node's output gradient to contributions on
//! its parents. [`Graph::backward`] replays the closures in reverse
//! topological order (which is simply reverse insertion order) and returns
//! the accumulated gradients of all leaves.
//!
//! Gradients accumulate with `+=` when a node is consumed by several
//! operations. A graph is built per training step and dropped afterwards;
//! the backward pass consumes the tape, so calling it twice is an error.
//!
//! Forward and backward are single-threaded and allocate deterministically:
//! identical inputs produce bit-identical results.

mod movement;
mod ops;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::CoreError;
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};
use crate::Result;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Backward rule: receives the node's output gradient and accumulates into
/// the parents' slots.
type BackFn<T> = Box<dyn FnOnce(&[T], &mut Grads<T>)>;

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    backward: Option<BackFn<T>>,
}

struct GraphInner<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Computation tape recording forward operations for reverse-mode AD.
pub struct Graph<T: Scalar> {
    inner: RefCell<GraphInner<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { inner: RefCell::new(GraphInner { nodes: Vec::new(), consumed: false }) }
    }

    /// Insert a tensor that does not participate in differentiation.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.insert(value, false, None)
    }

    /// Insert a tensor whose gradient will be reported by [`Graph::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.insert(value, true, None)
    }

    /// The value held by a node (cheap: shares the payload).
    pub fn value(&self, v: Var) -> Tensor<T> {
        self.inner.borrow().nodes[v.0].value.clone()
    }

    /// Shape of a node's value.
    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.inner.borrow().nodes[v.0].value.shape().to_vec()
    }

    /// The value of a single-element node.
    pub fn scalar_value(&self, v: Var) -> T {
        let inner = self.inner.borrow();
        debug_assert_eq!(inner.nodes[v.0].value.numel(), 1);
        inner.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.inner.borrow().nodes[v.0].requires_grad
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&self, value: Tensor<T>, requires_grad: bool, backward: Option<BackFn<T>>) -> Var {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { value, requires_grad, backward });
        Var(id)
    }

    /// Append an op result, verifying finiteness. The backward closure is
    /// recorded only when some input requires gradients.
    pub(crate) fn push_op(
        &self,
        op: &'static str,
        value: Tensor<T>,
        requires_grad: bool,
        backward: impl FnOnce() -> BackFn<T>,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(CoreError::NonFinite { op });
        }
        let bf = if requires_grad { Some(backward()) } else { None };
        Ok(self.insert(value, requires_grad, bf))
    }

    /// Reverse pass from a scalar node. Consumes the tape; gradients of all
    /// leaves reachable from `loss` are available in the returned [`Grads`].
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(CoreError::TapeConsumed);
        }
        inner.consumed = true;
        let loss_shape = inner.nodes[loss.0].value.shape().to_vec();
        if numel(&loss_shape) != 1 {
            return Err(CoreError::NotScalar { op: "backward", shape: loss_shape });
        }
        let n = inner.nodes.len();
        let mut grads = Grads { slots: alloc::vec![None; n] };
        grads.slots[loss.0] = Some(alloc::vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(bf) = inner.nodes[id].backward.take() else { continue };
            // Nodes that never received gradient cannot contribute upstream.
            let Some(g) = grads.slots[id].take() else { continue };
            bf(&g, &mut grads);
        }
        Ok(grads)
    }
}

/// Gradients produced by a backward pass, indexed by [`Var`].
pub struct Grads<T> {
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    /// Gradient of a node, if any flowed to it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.slots[v.0].as_deref()
    }

    /// Take ownership of a node's gradient.
    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.slots[v.0].take()
    }

    /// Mutable accumulation slot for a node, zero-initialized on first use.
    pub(crate) fn slot(&mut self, id: usize, len: usize) -> &mut [T] {
        self.slots[id].get_or_insert_with(|| alloc::vec![T::zero(); len])
    }
}
