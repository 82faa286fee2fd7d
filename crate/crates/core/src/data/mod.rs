//! Examples, label spaces, vocabularies, JSONL ingestion and the synthetic
//! planted-signal corpus.

mod generate;
mod jsonl;
mod vocab;

pub use generate::{generate_corpus, planted_sequence, Corpus, GeneratorConfig, Plant};
pub use jsonl::{load_jsonl, save_jsonl};
pub use vocab::{build_vocab, tokenize, Vocab, PAD_TOKEN, UNK_ID, UNK_TOKEN};

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One document: an id, its tokens and its gold label strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

/// Ordered label inventory; a label's index is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelSpace { labels, index })
    }

    /// Every label seen in `examples`, sorted lexicographically.
    pub fn from_examples(examples: &[Example]) -> Self {
        let set: BTreeSet<&String> = examples.iter().flat_map(|e| &e.labels).collect();
        LabelSpace::new(set.into_iter().cloned().collect()).expect("set is unique")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Multi-hot gold vector for `labels`.
    pub fn encode(&self, labels: &[String]) -> Result<Vec<bool>> {
        let mut y = vec![false; self.len()];
        for l in labels {
            let i = self
                .index_of(l)
                .ok_or_else(|| Error::Data(format!("label `{l}` is not in the label space")))?;
            y[i] = true;
        }
        Ok(y)
    }

    /// One label per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for l in &self.labels {
            writeln!(f, "{l}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        LabelSpace::new(text.lines().map(str::to_string).collect())
    }
}
