//! Named parameter storage and per-pass binding onto a tape.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// State that is saved but not trained (batch-norm running statistics).
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub tensor: Tensor<T>,
    pub kind: ParamKind,
}

/// Gradients keyed by parameter name, in binding order.
pub type Gradients<T> = IndexMap<String, Vec<T>>;

/// Ordered collection of named model tensors.
///
/// Insertion order is the canonical order: initialization, optimizer state
/// and checkpoints all walk the store front to back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>, kind: ParamKind) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Usage(format!("parameter {name} registered twice")));
        }
        self.entries.insert(name, Param { tensor, kind });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.entries.get(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::Usage(format!("unknown parameter {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.tensor)
            .ok_or_else(|| Error::Usage(format!("unknown parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|p| p.kind == ParamKind::Trainable)
            .map(|p| p.tensor.numel())
            .sum()
    }

    /// Overwrites buffers with values collected during a training pass.
    pub fn apply_updates(&mut self, updates: Vec<(String, Tensor<T>)>) -> Result<()> {
        for (name, value) in updates {
            let slot = self.tensor_mut(&name)?;
            if slot.shape() != value.shape() {
                return Err(Error::Dimension(format!("update of {name} changes its shape")));
            }
            *slot = value;
        }
        Ok(())
    }

    /// Replaces every tensor from `(name, tensor)` pairs that must match this
    /// store's names and shapes exactly.
    pub fn load_from<U: Scalar>(&mut self, entries: &[(String, Tensor<U>)]) -> Result<()> {
        if entries.len() != self.entries.len() {
            return Err(Error::Version(format!(
                "checkpoint holds {} tensors, model expects {}",
                entries.len(),
                self.entries.len()
            )));
        }
        for ((name, tensor), (own_name, own)) in entries.iter().zip(self.entries.iter_mut()) {
            if name != own_name || tensor.shape() != own.tensor.shape() {
                return Err(Error::Version(format!(
                    "checkpoint tensor {name} {:?} does not match model tensor {own_name} {:?}",
                    tensor.shape(),
                    own.tensor.shape()
                )));
            }
            own.tensor = tensor.cast();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            tensor: p.tensor.cast(),
                            kind: p.kind,
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward (and optionally backward) pass over a read-only store.
///
/// Parameters are bound onto the tape on first use. Batch-norm running
/// statistics produced in training mode are queued as updates instead of
/// being written, so the store is never mutated during a pass.
pub struct Session<'a, T: Scalar> {
    pub tape: Tape<T>,
    params: &'a ParamStore<T>,
    bound: HashMap<String, Var>,
    order: Vec<String>,
    mode: Mode,
    track_grads: bool,
    updates: Vec<(String, Tensor<T>)>,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(params: &'a ParamStore<T>, mode: Mode, track_grads: bool) -> Self {
        Self {
            tape: Tape::new(),
            params,
            bound: HashMap::new(),
            order: Vec::new(),
            mode,
            track_grads,
            updates: Vec::new(),
        }
    }

    /// Training pass: batch statistics, gradients for trainable tensors.
    pub fn training(params: &'a ParamStore<T>) -> Self {
        Self::new(params, Mode::Train, true)
    }

    /// Inference pass: running statistics, no gradient bookkeeping.
    pub fn inference(params: &'a ParamStore<T>) -> Self {
        Self::new(params, Mode::Eval, false)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'a ParamStore<T> {
        self.params
    }

    /// Tape handle for a named parameter, bound on first request.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let p = self
            .params
            .get(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter {name}")))?;
        let grad = self.track_grads && p.kind == ParamKind::Trainable;
        let v = self.tape.leaf(p.tensor.clone(), grad);
        self.bound.insert(name.to_owned(), v);
        self.order.push(name.to_owned());
        Ok(v)
    }

    pub fn buffer(&self, name: &str) -> Result<&'a Tensor<T>> {
        self.params.tensor(name)
    }

    pub fn queue_update(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.updates.push((name.into(), value));
    }

    pub fn take_updates(&mut self) -> Vec<(String, Tensor<T>)> {
        std::mem::take(&mut self.updates)
    }

    /// Gradients of every bound trainable parameter after `tape.backward`.
    pub fn gradients(&mut self) -> Gradients<T> {
        let mut out = Gradients::new();
        for name in &self.order {
            let var = self.bound[name];
            if self.tape.requires_grad(var) {
                if let Some(g) = self.tape.take_grad(var) {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}
