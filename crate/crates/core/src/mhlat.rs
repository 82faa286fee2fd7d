//! Multi-hop label-wise attention.
//!
//! One hop takes the context `H` (n×d) and label representations `E` (C×d):
//!
//! ```text
//! T  = relu(E·W_attᵀ) · relu(H·W_attᵀ)ᵀ      C×n
//! α  = softmax_rows(T)                      each label over tokens
//! Z  = α·H                                  C×d
//! Ẽ  = [Z; E]·W_mapᵀ + b_map                C×d
//! β  = softmax_rows(Tᵀ)                     each token over labels
//! D  = β·E                                  n×d
//! H̃  = [D; H]·W_mapᵀ + b_map                n×d   (same W_map, b_map)
//! ```
//!
//! Shapes are preserved, so hops compose; the final hop's `E` is the output.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Bound, ParamStore, Role, Site, Tape, Tensor, Var};

pub const LABEL_EMBEDDING: &str = "mhlat.label_embedding";

/// Parameter names of hop `index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopNames {
    pub att: String,
    pub map_weight: String,
    pub map_bias: String,
}

impl HopNames {
    pub fn new(index: usize) -> Self {
        HopNames {
            att: format!("mhlat.hop{index}.att.weight"),
            map_weight: format!("mhlat.hop{index}.map.weight"),
            map_bias: format!("mhlat.hop{index}.map.bias"),
        }
    }
}

/// Number of distinct hop parameter sets for `hops` hops.
pub fn hop_param_sets(hops: usize, share: bool) -> usize {
    if share {
        hops.min(1)
    } else {
        hops
    }
}

/// Parameter names used at each of the `hops` applications. With sharing
/// every application refers to set 0.
pub fn hop_schedule(hops: usize, share: bool) -> Vec<HopNames> {
    (0..hops)
        .map(|l| HopNames::new(if share { 0 } else { l }))
        .collect()
}

/// Hop parameters as plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct HopParams {
    pub att: Tensor,
    pub map_weight: Tensor,
    pub map_bias: Tensor,
}

impl HopParams {
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        HopParams {
            att: Tensor::xavier(d, d, rng),
            map_weight: Tensor::xavier(d, 2 * d, rng),
            map_bias: Tensor::zeros(1, d),
        }
    }

    pub fn register(self, store: &mut ParamStore, names: &HopNames) {
        store.insert(&names.att, self.att, Site::Head, Role::Weight);
        store.insert(&names.map_weight, self.map_weight, Site::Head, Role::Weight);
        store.insert(&names.map_bias, self.map_bias, Site::Head, Role::Bias);
    }

    pub fn from_store(store: &ParamStore, names: &HopNames) -> Result<Self> {
        Ok(HopParams {
            att: store.tensor(&names.att)?.clone(),
            map_weight: store.tensor(&names.map_weight)?.clone(),
            map_bias: store.tensor(&names.map_bias)?.clone(),
        })
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> HopVars {
        let mut put = |t: &Tensor| {
            if track {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        HopVars {
            att: put(&self.att),
            map_weight: put(&self.map_weight),
            map_bias: put(&self.map_bias),
        }
    }
}

/// Hop parameters placed on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopVars {
    pub att: Var,
    pub map_weight: Var,
    pub map_bias: Var,
}

impl HopVars {
    pub fn from_bound(bound: &Bound, names: &HopNames) -> Result<Self> {
        Ok(HopVars {
            att: bound.var(&names.att)?,
            map_weight: bound.var(&names.map_weight)?,
            map_bias: bound.var(&names.map_bias)?,
        })
    }
}

/// Registers the label embedding and the hop parameter sets.
pub fn init_attention<R: Rng + ?Sized>(
    store: &mut ParamStore,
    labels: usize,
    d: usize,
    hops: usize,
    share: bool,
    rng: &mut R,
) {
    store.insert(
        LABEL_EMBEDDING,
        Tensor::xavier(labels, d, rng),
        Site::Head,
        Role::Weight,
    );
    for l in 0..hop_param_sets(hops, share) {
        HopParams::init(d, rng).register(store, &HopNames::new(l));
    }
}

fn check_dims(tape: &Tape, h: Var, e: Var, p: &HopVars) -> Result<()> {
    let (hs, es) = (tape.shape(h), tape.shape(e));
    let d = hs.1;
    if es.1 != d {
        return Err(Error::shape("hop", hs, es));
    }
    if tape.shape(p.att) != (d, d) {
        return Err(Error::shape("hop W_att", hs, tape.shape(p.att)));
    }
    if tape.shape(p.map_weight) != (d, 2 * d) {
        return Err(Error::shape("hop W_map", hs, tape.shape(p.map_weight)));
    }
    if tape.shape(p.map_bias) != (1, d) {
        return Err(Error::shape("hop b_map", hs, tape.shape(p.map_bias)));
    }
    Ok(())
}

/// `T = relu(E·W_attᵀ)·relu(H·W_attᵀ)ᵀ`, shape C×n.
fn scores(tape: &mut Tape, h: Var, e: Var, p: &HopVars) -> Result<Var> {
    check_dims(tape, h, e, p)?;
    let pe = tape.matmul_nt(e, p.att)?;
    let pe = tape.relu(pe);
    let ph = tape.matmul_nt(h, p.att)?;
    let ph = tape.relu(ph);
    tape.matmul_nt(pe, ph)
}

/// Intermediates of one hop.
#[derive(Debug, Clone, Copy)]
pub struct HopOutput {
    pub context: Option<Var>,
    pub labels: Var,
    pub alpha: Var,
}

fn hop_inner(tape: &mut Tape, h: Var, e: Var, p: &HopVars, with_context: bool) -> Result<HopOutput> {
    let t = scores(tape, h, e, p)?;
    let alpha = tape.row_softmax(t, None)?;
    let z = tape.matmul(alpha, h)?;
    let ze = tape.concat_cols(z, e)?;
    let labels = tape.affine(ze, p.map_weight, p.map_bias)?;

    let context = if with_context {
        let tt = tape.transpose(t);
        let beta = tape.row_softmax(tt, None)?;
        let dctx = tape.matmul(beta, e)?;
        let dh = tape.concat_cols(dctx, h)?;
        Some(tape.affine(dh, p.map_weight, p.map_bias)?)
    } else {
        None
    };
    Ok(HopOutput {
        context,
        labels,
        alpha,
    })
}

/// One hop: returns `(H̃, Ẽ)`.
pub fn hop(tape: &mut Tape, h: Var, e: Var, p: &HopVars) -> Result<(Var, Var)> {
    let out = hop_inner(tape, h, e, p, true)?;
    Ok((out.context.expect("context requested"), out.labels))
}

/// `(α, β)` for inspection; consistent with the `T` used inside [`hop`].
pub fn attention_maps(tape: &mut Tape, h: Var, e: Var, p: &HopVars) -> Result<(Var, Var)> {
    let t = scores(tape, h, e, p)?;
    let alpha = tape.row_softmax(t, None)?;
    let tt = tape.transpose(t);
    let beta = tape.row_softmax(tt, None)?;
    Ok((alpha, beta))
}

/// Result of [`multi_hop`]: `E^[N]` plus the last hop's `α` (absent for N = 0).
#[derive(Debug, Clone, Copy)]
pub struct MultiHopOutput {
    pub labels: Var,
    pub last_alpha: Option<Var>,
}

/// Iterates the hop `n` times from `(h0, e0)` and returns the final label
/// representations. `hops` holds either one entry per application or a
/// single shared entry. The context update of the final hop is skipped since
/// nothing consumes it.
pub fn multi_hop(
    tape: &mut Tape,
    h0: Var,
    e0: Var,
    hops: &[HopVars],
    n: usize,
) -> Result<MultiHopOutput> {
    if n > 0 && hops.is_empty() {
        return Err(Error::Config(format!("{n} hops requested but no hop parameters given")));
    }
    if n > 0 && hops.len() != 1 && hops.len() != n {
        return Err(Error::Config(format!(
            "{n} hops need 1 shared or {n} hop parameter sets, got {}",
            hops.len()
        )));
    }
    let (mut h, mut e) = (h0, e0);
    let mut last_alpha = None;
    for l in 0..n {
        let p = if hops.len() == 1 { &hops[0] } else { &hops[l] };
        let last = l + 1 == n;
        let out = hop_inner(tape, h, e, p, !last)?;
        e = out.labels;
        last_alpha = Some(out.alpha);
        if let Some(c) = out.context {
            h = c;
        }
    }
    Ok(MultiHopOutput {
        labels: e,
        last_alpha,
    })
}
