//! Append-only computation tape with reverse-mode differentiation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of one recorded operation.
///
/// Receives the values of the operation's inputs, its output and the gradient
/// flowing into the output; returns one gradient per input (or `None` for
/// inputs that do not need one, as flagged in `needs`).
pub(crate) trait Backward<T: Scalar> {
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    requires_grad: bool,
    parents: Vec<Var>,
    rule: Option<Box<dyn Backward<T>>>,
}

/// Ordered record of a forward pass.
///
/// Nodes are appended as operations execute; [`Tape::backward`] replays the
/// backward rules in reverse order. A tape is single-threaded and is normally
/// discarded after one forward/backward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            parents: Vec::new(),
            rule: None,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, var: Var) -> Option<&[T]> {
        self.grads[var.0].as_deref()
    }

    pub fn take_grad(&mut self, var: Var) -> Option<Vec<T>> {
        self.grads[var.0].take()
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        parents: &[Var],
        rule: impl Backward<T> + 'static,
    ) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            parents: parents.to_vec(),
            rule: requires_grad.then(|| Box::new(rule) as Box<dyn Backward<T>>),
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Back-propagates from a one-element `root` with seed gradient 1.
    ///
    /// Gradients of intermediate nodes are released once consumed; leaves
    /// that require a gradient keep theirs (zeros when off the loss path).
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward root must hold one element, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        if !self.nodes[root.0].requires_grad {
            return Err(Error::Usage(
                "backward root does not depend on any tensor requiring grad".into(),
            ));
        }
        self.grads[root.0] = Some(vec![T::one()]);

        for i in (0..=root.0).rev() {
            let Some(grad) = self.grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let Some(rule) = node.rule.as_ref() else {
                // leaf: keep its gradient
                self.grads[i] = Some(grad);
                continue;
            };
            let inputs: Vec<&Tensor<T>> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|p| self.nodes[p.0].requires_grad)
                .collect();
            let parent_grads = rule.backward(&inputs, &node.value, &grad, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            let parents = node.parents.clone();
            for (p, g) in parents.into_iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.len(), self.nodes[p.0].value.numel());
                match &mut self.grads[p.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        for (node, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if node.rule.is_none() && node.requires_grad && g.is_none() {
                *g = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        Ok(())
    }
}
