//! Row-major `f32` tensors with tape-style reverse-mode autodiff.
//!
//! Every op that touches a tensor requiring gradients records a node holding
//! its parents and a one-shot backward closure. [`Tensor::backward`] walks the
//! recorded graph once in reverse topological order, consuming each node as
//! it goes, so the tape is released as soon as gradients are in place.
//! Leaves created with [`Tensor::param`] accumulate their gradient; everything
//! else only sees transient gradients during the pass.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{PuffError, Result};

/// Per-parent gradient produced by a backward closure. `None` means the
/// parent does not need one.
pub(crate) type ParentGrads = Vec<Option<Vec<f32>>>;

/// Receives the output gradient and a `needs_grad` flag per parent.
pub(crate) type BackwardFn = Box<dyn FnOnce(&[f32], &[bool]) -> ParentGrads + Send>;

struct Node {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    is_leaf: bool,
    grad: Mutex<Option<Vec<f32>>>,
    node: Mutex<Option<Node>>,
}

/// Cheaply clonable handle to an immutable tensor.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any autograd graph on this thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f32>, requires_grad: bool, node: Option<Node>) -> Self {
        assert_eq!(
            numel(&shape),
            data.len(),
            "shape {shape:?} expects {} elements, got {}",
            numel(&shape),
            data.len()
        );
        let is_leaf = node.is_none();
        Tensor(Arc::new(Inner {
            shape,
            data,
            requires_grad,
            is_leaf,
            grad: Mutex::new(None),
            node: Mutex::new(node),
        }))
    }

    /// Constant tensor; never receives a gradient.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(PuffError::Invalid {
                op: "tensor",
                msg: format!("shape {shape:?} does not hold {} elements", data.len()),
            });
        }
        Ok(Self::build(shape, data, false, None))
    }

    /// Trainable leaf.
    pub fn param(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Self {
        Self::build(shape.into(), data, true, None)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self::build(shape, vec![0.0; n], false, None)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self::build(shape, vec![value; n], false, None)
    }

    pub fn scalar(value: f32) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// Result of an op. Records a graph node only when grad mode is on and
    /// some parent requires a gradient; `make_backward` is not called otherwise.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f32>,
        parents: Vec<Tensor>,
        make_backward: impl FnOnce() -> BackwardFn,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(Tensor::requires_grad);
        if track {
            let node = Node {
                parents,
                backward: make_backward(),
            };
            Self::build(shape, data, true, Some(node))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.is_leaf
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.0.data.clone()
    }

    /// Accumulated gradient of a leaf, if any.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// Same values, cut from the graph and never trainable.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Same values as a fresh trainable leaf.
    pub fn to_param(&self) -> Tensor {
        Self::param(self.0.shape.clone(), self.0.data.clone())
    }

    pub fn same_storage(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.0.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PuffError::NonFinite(what.to_string()))
        }
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Reverse-mode pass from a scalar loss into every trainable leaf.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(PuffError::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.item().is_finite() {
            return Err(PuffError::NonFinite("loss".into()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        if !self.is_leaf() && self.0.node.lock().expect("node lock").is_none() {
            return Err(PuffError::GraphConsumed);
        }

        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<f32>> = HashMap::new();
        grads.insert(self.key(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.key()) else {
                continue;
            };
            if t.is_leaf() {
                let mut slot = t.0.grad.lock().expect("grad lock");
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g),
                }
                continue;
            }
            let node = t.0.node.lock().expect("node lock").take();
            let Some(node) = node else {
                return Err(PuffError::GraphConsumed);
            };
            let needs: Vec<bool> = node.parents.iter().map(Tensor::requires_grad).collect();
            let parent_grads = (node.backward)(&g, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((parent, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let (Some(pg), true) = (pg, need) else {
                    continue;
                };
                debug_assert_eq!(pg.len(), parent.numel());
                match grads.get_mut(&parent.key()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    None => {
                        grads.insert(parent.key(), pg);
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the tracked subgraph; parents precede children.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.key()) {
                continue;
            }
            let parents: Vec<Tensor> = t
                .0
                .node
                .lock()
                .expect("node lock")
                .as_ref()
                .map(|n| n.parents.iter().filter(|p| p.requires_grad()).cloned().collect())
                .unwrap_or_default();
            stack.push((t, true));
            for p in parents {
                if !seen.contains(&p.key()) {
                    stack.push((p, false));
                }
            }
        }
        order
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.0.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_do_not_track() {
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        assert!(!a.requires_grad());
        assert!(a.is_leaf());
    }

    #[test]
    fn rejects_bad_element_count() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn no_grad_restores_mode() {
        assert!(grad_enabled());
        no_grad(|| assert!(!grad_enabled()));
        assert!(grad_enabled());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let a = Tensor::param(vec![2], vec![1.0, 2.0]);
        assert!(matches!(a.backward(), Err(PuffError::NonScalarLoss(_))));
    }
}
