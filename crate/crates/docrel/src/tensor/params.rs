//! Named parameter collections and their tape bindings.

use std::collections::BTreeMap;

use super::{NodeId, Tape, Tensor};

/// Named collection of parameter tensors with deterministic iteration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        let prev = self.entries.insert(name.clone(), tensor);
        assert!(prev.is_none(), "duplicate parameter name {name:?}");
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

/// Map from parameter name to the leaf node it was bound to on a tape.
#[derive(Clone, Debug)]
pub struct Bindings {
    ids: BTreeMap<String, NodeId>,
}

impl Bindings {
    /// Registers every parameter of `params` as a leaf on `tape`, in name
    /// order.
    pub fn bind(tape: &mut Tape, params: &ParamSet) -> Self {
        let mut ids = BTreeMap::new();
        for (name, tensor) in params.iter() {
            ids.insert(name.clone(), tape.leaf(tensor.clone()));
        }
        Bindings { ids }
    }

    pub fn id(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} is not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NodeId)> {
        self.ids.iter()
    }
}
