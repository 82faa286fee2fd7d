//! Fixed-length chunking of long token sequences and recovery of the global,
//! pad-free sequence after per-chunk encoding.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Reserved token id used to fill the tail of the final chunk.
pub const PAD_ID: usize = 0;

/// A token sequence split into `k = ceil(n / L)` rows of length `L`.
/// Only the last row may carry padding, always as a contiguous suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedDocument {
    chunks: Vec<Vec<usize>>,
    mask: Vec<Vec<bool>>,
    n: usize,
}

/// Splits `tokens` into sequential, non-overlapping chunks of length
/// `chunk_len`, padding the final chunk with [`PAD_ID`].
pub fn chunk(tokens: &[usize], chunk_len: usize) -> Result<ChunkedDocument> {
    if chunk_len < 1 {
        return Err(Error::Config("chunk length L must be at least 1".into()));
    }
    if tokens.is_empty() {
        return Err(Error::Data("cannot chunk an empty token sequence".into()));
    }
    let mut chunks = Vec::with_capacity(tokens.len().div_ceil(chunk_len));
    let mut mask = Vec::with_capacity(chunks.capacity());
    for piece in tokens.chunks(chunk_len) {
        let mut row = piece.to_vec();
        let mut m = vec![true; piece.len()];
        row.resize(chunk_len, PAD_ID);
        m.resize(chunk_len, false);
        chunks.push(row);
        mask.push(m);
    }
    Ok(ChunkedDocument {
        chunks,
        mask,
        n: tokens.len(),
    })
}

impl ChunkedDocument {
    pub fn chunks(&self) -> &[Vec<usize>] {
        &self.chunks
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    /// Number of chunks `k`.
    pub fn k(&self) -> usize {
        self.chunks.len()
    }

    /// Original token count.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn chunk_len(&self) -> usize {
        self.chunks[0].len()
    }

    /// Real tokens per chunk.
    pub fn valid_counts(&self) -> Vec<usize> {
        self.mask
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Token ids in original order with padding removed.
    pub fn flatten(&self) -> Vec<usize> {
        self.chunks
            .iter()
            .zip(&self.mask)
            .flat_map(|(c, m)| c.iter().zip(m).filter(|(_, &v)| v).map(|(&t, _)| t))
            .collect()
    }

    /// Copy with every pad position overwritten by `id`; useful for checking
    /// that padding content never reaches the output.
    pub fn with_pad_ids(&self, id: usize) -> ChunkedDocument {
        let mut out = self.clone();
        for (c, m) in out.chunks.iter_mut().zip(&self.mask) {
            for (t, &valid) in c.iter_mut().zip(m) {
                if !valid {
                    *t = id;
                }
            }
        }
        out
    }
}

/// Concatenates per-chunk features (each `L×d`) in sequence order, dropping
/// padded rows, so the result has exactly `n` rows.
pub fn global_concat(tape: &mut Tape, features: &[Var], doc: &ChunkedDocument) -> Result<Var> {
    if features.len() != doc.k() {
        return Err(Error::shape(
            "global_concat",
            (features.len(), 0),
            (doc.k(), 0),
        ));
    }
    let d = tape.shape(features[0]).1;
    let mut parts = Vec::with_capacity(features.len());
    for (&f, m) in features.iter().zip(doc.mask()) {
        let shape = tape.shape(f);
        if shape != (m.len(), d) {
            return Err(Error::shape("global_concat", shape, (m.len(), d)));
        }
        let valid: Vec<usize> = (0..m.len()).filter(|&i| m[i]).collect();
        if valid.len() == m.len() {
            parts.push(f);
        } else {
            parts.push(tape.select_rows(f, &valid)?);
        }
    }
    tape.concat_rows(&parts)
}
