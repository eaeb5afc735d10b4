//! Named parameter tensors with trainable flags and momentum buffers.

use std::collections::HashMap;
use std::ops::Index;

use sha2::{Digest, Sha256};

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub trainable: bool,
    pub momentum: Tensor,
}

/// Insertion-ordered parameter store. Order is forward (layer) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Param)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(name, "duplicate parameter name"));
        }
        let momentum = tensor.zeros_like();
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((
            name,
            Param {
                tensor,
                trainable,
                momentum,
            },
        ));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.get(name).map(|p| &p.tensor)
    }

    /// Replaces a tensor, resetting its momentum. Shapes must agree.
    pub fn replace(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let p = self
            .get_mut(name)
            .ok_or_else(|| Error::NameMismatch {
                missing: vec![],
                extra: vec![name.to_string()],
            })?;
        if p.tensor.dims() != tensor.dims() || p.tensor.dtype() != tensor.dtype() {
            return Err(Error::shape(format!(
                "{name}: expected {} {}, got {} {}",
                p.tensor.dtype().name(),
                p.tensor.shape(),
                tensor.dtype().name(),
                tensor.shape()
            )));
        }
        p.momentum = tensor.zeros_like();
        p.tensor = tensor;
        Ok(())
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let p = self.get_mut(name).ok_or_else(|| Error::NameMismatch {
            missing: vec![],
            extra: vec![name.to_string()],
        })?;
        p.trainable = trainable;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(n, p)| (n.as_str(), p))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|(_, p)| p.trainable).count()
    }

    /// Records every tensor as a tape leaf; trainable entries require grad.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let ids = self
            .entries
            .iter()
            .map(|(_, p)| tape.leaf(p.tensor.clone(), p.trainable))
            .collect();
        Bindings {
            ids,
            index: self.index.clone(),
        }
    }

    /// Records every tensor as a constant leaf.
    pub fn bind_constant(&self, tape: &mut Tape) -> Bindings {
        let ids = self
            .entries
            .iter()
            .map(|(_, p)| tape.constant(p.tensor.clone()))
            .collect();
        Bindings {
            ids,
            index: self.index.clone(),
        }
    }

    /// SHA-256 over the names, shapes, and bytes of the selected tensors.
    pub fn digest(&self, mut select: impl FnMut(&str, &Param) -> bool) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, p) in &self.entries {
            if !select(name, p) {
                continue;
            }
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for &d in p.tensor.dims() {
                h.update((d as u64).to_le_bytes());
            }
            h.update([p.tensor.dtype().code()]);
            h.update(p.tensor.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Digest of all non-trainable tensors.
    pub fn frozen_digest(&self) -> [u8; 32] {
        self.digest(|_, p| !p.trainable)
    }
}

/// Tape node ids of a bound [`ParamSet`], addressable by name.
#[derive(Debug, Clone)]
pub struct Bindings {
    ids: Vec<NodeId>,
    index: HashMap<String, usize>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).map(|&i| self.ids[i])
    }

    /// Node ids in parameter order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

impl Index<&str> for Bindings {
    type Output = NodeId;

    fn index(&self, name: &str) -> &NodeId {
        let i = self.index.get(name).unwrap_or_else(|| panic!("unbound parameter {name}"));
        &self.ids[*i]
    }
}
