//! Parameter-shared chunk encoder: token embeddings plus fixed sinusoidal
//! positions, followed by `B` single-head post-norm transformer blocks.
//!
//! Every tensor is registered in the [`ParamStore`] under `encoder.*` with a
//! bias/weight tag, which is what [`partition_for_mode`] keys off.

use std::collections::BTreeSet;

use rand::Rng;

use crate::chunking::{global_concat, ChunkedDocument};
use crate::config::TuningMode;
use crate::error::{Error, Result};
use crate::tensor::{Bound, ParamStore, Role, Site, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub vocab: usize,
    pub chunk_len: usize,
    pub d_model: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    shape: EncoderShape,
    positions: Tensor,
}

fn block_name(b: usize, part: &str) -> String {
    format!("encoder.block{b}.{part}")
}

pub const EMBEDDING: &str = "encoder.embedding";

/// Registers freshly initialized encoder parameters: Xavier-uniform weight
/// matrices, zero biases, unit layer-norm scales.
pub fn init_encoder<R: Rng + ?Sized>(store: &mut ParamStore, shape: EncoderShape, rng: &mut R) {
    let d = shape.d_model;
    let ff = 4 * d;
    // unit variance so token identity is not drowned out by the positions
    store.insert(
        EMBEDDING,
        Tensor::uniform(shape.vocab, d, 3f64.sqrt(), rng),
        Site::Encoder,
        Role::Weight,
    );
    for b in 0..shape.blocks {
        for proj in ["q", "k", "v", "o"] {
            store.insert(
                block_name(b, &format!("attn.{proj}.weight")),
                Tensor::xavier(d, d, rng),
                Site::Encoder,
                Role::Weight,
            );
            store.insert(
                block_name(b, &format!("attn.{proj}.bias")),
                Tensor::zeros(1, d),
                Site::Encoder,
                Role::Bias,
            );
        }
        for (name, rows, cols) in [("ffn.in", ff, d), ("ffn.out", d, ff)] {
            store.insert(
                block_name(b, &format!("{name}.weight")),
                Tensor::xavier(rows, cols, rng),
                Site::Encoder,
                Role::Weight,
            );
            store.insert(
                block_name(b, &format!("{name}.bias")),
                Tensor::zeros(1, rows),
                Site::Encoder,
                Role::Bias,
            );
        }
        for ln in ["ln1", "ln2"] {
            store.insert(
                block_name(b, &format!("{ln}.scale")),
                Tensor::full(1, d, 1.0),
                Site::Encoder,
                Role::Weight,
            );
            store.insert(
                block_name(b, &format!("{ln}.bias")),
                Tensor::zeros(1, d),
                Site::Encoder,
                Role::Bias,
            );
        }
    }
}

/// Sinusoidal position table, `L×d`.
pub fn sinusoidal_positions(len: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(len, d);
    for pos in 0..len {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

impl Encoder {
    pub fn new(shape: EncoderShape) -> Self {
        Encoder {
            positions: sinusoidal_positions(shape.chunk_len, shape.d_model),
            shape,
        }
    }

    pub fn shape(&self) -> EncoderShape {
        self.shape
    }

    /// Encodes one chunk into `L×d_m` features. Padded positions never act as
    /// attention targets.
    pub fn encode_chunk(
        &self,
        tape: &mut Tape,
        params: &Bound,
        chunk: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let (l, d) = (self.shape.chunk_len, self.shape.d_model);
        if chunk.len() != l || mask.len() != l {
            return Err(Error::shape("encode_chunk", (chunk.len(), mask.len()), (l, l)));
        }
        let emb = tape.gather(params.var(EMBEDDING)?, chunk)?;
        let pos = tape.constant(self.positions.clone());
        let mut x = tape.add(emb, pos)?;
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();

        for b in 0..self.shape.blocks {
            let p = |part: &str| params.var(&block_name(b, part));
            let q = tape.affine(x, p("attn.q.weight")?, p("attn.q.bias")?)?;
            let k = tape.affine(x, p("attn.k.weight")?, p("attn.k.bias")?)?;
            let v = tape.affine(x, p("attn.v.weight")?, p("attn.v.bias")?)?;
            let scores = tape.matmul_nt(q, k)?;
            let scores = tape.scale(scores, inv_sqrt_d);
            let attn = tape.row_softmax(scores, Some(mask))?;
            let ctx = tape.matmul(attn, v)?;
            let out = tape.affine(ctx, p("attn.o.weight")?, p("attn.o.bias")?)?;
            let res = tape.add(x, out)?;
            x = tape.layer_norm(res, p("ln1.scale")?, p("ln1.bias")?, LN_EPS)?;

            let hidden = tape.affine(x, p("ffn.in.weight")?, p("ffn.in.bias")?)?;
            let hidden = tape.relu(hidden);
            let ff = tape.affine(hidden, p("ffn.out.weight")?, p("ffn.out.bias")?)?;
            let res = tape.add(x, ff)?;
            x = tape.layer_norm(res, p("ln2.scale")?, p("ln2.bias")?, LN_EPS)?;
        }
        Ok(x)
    }

    /// Encodes every chunk with the same parameters and stitches the pad-free
    /// result into an `n×d_m` context matrix.
    pub fn encode_document(
        &self,
        tape: &mut Tape,
        params: &Bound,
        doc: &ChunkedDocument,
    ) -> Result<Var> {
        let feats = doc
            .chunks()
            .iter()
            .zip(doc.mask())
            .map(|(c, m)| self.encode_chunk(tape, params, c, m))
            .collect::<Result<Vec<_>>>()?;
        global_concat(tape, &feats, doc)
    }
}

/// Names the optimizer may update under `mode`.
pub fn partition_for_mode(params: &ParamStore, mode: TuningMode) -> BTreeSet<String> {
    match mode {
        TuningMode::Finetune => params.names_where(|_| true),
        TuningMode::Freeze => params.names_where(|p| p.site == Site::Head),
        TuningMode::Bitfit => {
            params.names_where(|p| p.site == Site::Head || p.role == Role::Bias)
        }
    }
}
