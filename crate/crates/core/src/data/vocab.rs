use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::Example;
use crate::chunking::PAD_ID;
use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: usize = 1;

/// Token → id map. Ids are dense in `[0, V)`; 0 is padding, 1 is unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(real: Vec<String>) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let index = real
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 2))
            .collect();
        tokens.extend(real);
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// One token per line in id order, reserved entries included.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(PAD_TOKEN) || lines.next() != Some(UNK_TOKEN) {
            return Err(Error::Data("vocab file must start with <pad> and <unk>".into()));
        }
        Ok(Vocab::from_tokens(lines.map(str::to_string).collect()))
    }
}

/// Builds a vocabulary from the training split only. Tokens seen fewer than
/// `min_freq` times map to [`UNK_ID`]; ids go by descending frequency, then
/// lexicographically.
pub fn build_vocab(train: &[Example], min_freq: usize) -> Vocab {
    let min_freq = min_freq.max(1);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ex in train {
        for t in &ex.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()).collect())
}

pub fn tokenize(example: &Example, vocab: &Vocab) -> Vec<usize> {
    let ids: Vec<usize> = example.tokens.iter().map(|t| vocab.id(t)).collect();
    debug_assert!(ids.iter().all(|&i| i != PAD_ID));
    ids
}
