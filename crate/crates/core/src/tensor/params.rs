use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Encoder,
    Head,
}

/// Additive offsets are `Bias`; everything multiplicative (including
/// embedding tables and layer-norm scales) is `Weight`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub site: Site,
    pub role: Role,
}

impl Param {
    /// Single-byte encoding used by checkpoints: bit 0 = bias, bit 1 = head.
    pub fn tag_byte(&self) -> u8 {
        let mut tag = 0;
        if self.role == Role::Bias {
            tag |= 1;
        }
        if self.site == Site::Head {
            tag |= 2;
        }
        tag
    }

    pub fn from_tag_byte(tag: u8) -> Option<(Site, Role)> {
        if tag > 3 {
            return None;
        }
        let role = if tag & 1 == 1 { Role::Bias } else { Role::Weight };
        let site = if tag & 2 == 2 { Site::Head } else { Site::Encoder };
        Some((site, role))
    }
}

/// Per-parameter gradients, keyed by parameter name.
pub type GradMap = IndexMap<String, Tensor>;

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, site: Site, role: Role) {
        self.params
            .insert(name.into(), Param { tensor, site, role });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.tensor)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn names_where(&self, pred: impl Fn(&Param) -> bool) -> BTreeSet<String> {
        self.params
            .iter()
            .filter(|(_, p)| pred(p))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn scalar_count(&self, pred: impl Fn(&Param) -> bool) -> usize {
        self.params
            .values()
            .filter(|p| pred(p))
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Places every parameter on `tape`. With `track` the leaves receive
    /// gradients; without it they are constants.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let t = p.tensor.clone();
                let v = if track { tape.param(t) } else { tape.constant(t) };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

/// Parameter name → tape variable for one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Pulls each parameter's gradient out of `grads`; parameters that
    /// received no flow get zeros.
    pub fn collect(&self, mut grads: Gradients) -> GradMap {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = grads.take(v).unwrap_or_else(|| grads.get_or_zeros(v));
                (name.clone(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_byte_round_trips() {
        for site in [Site::Encoder, Site::Head] {
            for role in [Role::Weight, Role::Bias] {
                let p = Param {
                    tensor: Tensor::zeros(1, 1),
                    site,
                    role,
                };
                assert_eq!(Param::from_tag_byte(p.tag_byte()), Some((site, role)));
            }
        }
        assert_eq!(Param::from_tag_byte(7), None);
    }

    #[test]
    fn bind_and_collect() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::full(1, 2, 2.0), Site::Head, Role::Weight);
        store.insert("b", Tensor::full(1, 2, 1.0), Site::Head, Role::Bias);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, true);
        let a = bound.var("a").unwrap();
        let s = tape.sum(a);
        let grads = bound.collect(tape.backward(s).unwrap());
        assert_eq!(grads["a"].data(), &[1.0, 1.0]);
        assert_eq!(grads["b"].data(), &[0.0, 0.0]);
        assert!(bound.var("missing").is_err());
    }
}
