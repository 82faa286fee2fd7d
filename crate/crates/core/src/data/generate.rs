//! Synthetic long-document corpus with a planted signal: every label owns a
//! short token sequence that appears in a document exactly when the label is
//! gold. Filler comes from a separate noise vocabulary, so an exact scan for
//! the planted sequences recovers the gold labels perfectly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Example, LabelSpace};
use crate::error::{Error, Result};

pub const MAX_LABELS_PER_DOC: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub docs: usize,
    pub labels: usize,
    /// Longest document, in tokens.
    pub max_len: usize,
    pub planted_len: usize,
    pub noise_vocab: usize,
    /// Zipf exponent for label popularity; `None` draws labels uniformly.
    pub zipf: Option<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            docs: 500,
            labels: 20,
            max_len: 256,
            planted_len: 3,
            noise_vocab: 200,
            zipf: None,
        }
    }
}

/// Where one label's sequence sits inside a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plant {
    pub label: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub label_space: LabelSpace,
    pub plants: Vec<Vec<Plant>>,
}

fn label_name(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len();
    format!("L{index:0width$}")
}

/// The token sequence planted for `label`.
pub fn planted_sequence(label: usize, planted_len: usize) -> Vec<String> {
    (0..planted_len).map(|j| format!("p{label}_{j}")).collect()
}

fn noise_token(i: usize) -> String {
    format!("w{i}")
}

fn draw_labels<R: Rng>(rng: &mut R, cfg: &GeneratorConfig) -> Vec<usize> {
    let count = rng.gen_range(1..=MAX_LABELS_PER_DOC.min(cfg.labels));
    match cfg.zipf {
        None => rand::seq::index::sample(rng, cfg.labels, count).into_vec(),
        Some(s) => {
            let mut weights: Vec<f64> = (0..cfg.labels)
                .map(|j| 1.0 / ((j + 1) as f64).powf(s))
                .collect();
            let mut chosen = Vec::with_capacity(count);
            for _ in 0..count {
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen_range(0.0..total);
                let mut pick = weights.len() - 1;
                for (j, &w) in weights.iter().enumerate() {
                    if u < w {
                        pick = j;
                        break;
                    }
                    u -= w;
                }
                // fall through to the last positive weight on rounding
                while weights[pick] == 0.0 {
                    pick -= 1;
                }
                chosen.push(pick);
                weights[pick] = 0.0;
            }
            chosen
        }
    }
}

/// Generates a corpus as a pure function of `cfg`.
///
/// Document lengths are uniform in `[max_len/4, max_len]`, raised when needed
/// so every planted sequence fits.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Corpus> {
    if cfg.labels < 2 {
        return Err(Error::Config("generator needs at least 2 labels".into()));
    }
    if cfg.planted_len < 1 {
        return Err(Error::Config("planted_len must be at least 1".into()));
    }
    if cfg.max_len < 10 * cfg.planted_len {
        return Err(Error::Config(format!(
            "max_len {} must be at least 10 x planted_len ({})",
            cfg.max_len, cfg.planted_len
        )));
    }
    if cfg.noise_vocab < 1 {
        return Err(Error::Config("noise_vocab must be at least 1".into()));
    }
    if let Some(s) = cfg.zipf {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Config("zipf exponent must be finite and >= 0".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<String> = (0..cfg.labels).map(|i| label_name(i, cfg.labels)).collect();
    let min_len = (cfg.max_len / 4).max(1);
    let id_width = cfg.docs.saturating_sub(1).to_string().len();

    let mut examples = Vec::with_capacity(cfg.docs);
    let mut plants = Vec::with_capacity(cfg.docs);
    for d in 0..cfg.docs {
        let mut labels = draw_labels(&mut rng, cfg);
        labels.shuffle(&mut rng);
        let planted_total = labels.len() * cfg.planted_len;
        let len = rng.gen_range(min_len..=cfg.max_len).max(planted_total + 1);
        let filler_len = len - planted_total;

        let mut gaps: Vec<usize> = (0..labels.len())
            .map(|_| rng.gen_range(0..=filler_len))
            .collect();
        gaps.sort_unstable();

        let mut tokens = Vec::with_capacity(len);
        let mut doc_plants = Vec::with_capacity(labels.len());
        let mut next = 0;
        for f in 0..=filler_len {
            while next < gaps.len() && gaps[next] == f {
                let label = labels[next];
                doc_plants.push(Plant {
                    label,
                    offset: tokens.len(),
                });
                tokens.extend(planted_sequence(label, cfg.planted_len));
                next += 1;
            }
            if f < filler_len {
                tokens.push(noise_token(rng.gen_range(0..cfg.noise_vocab)));
            }
        }
        debug_assert_eq!(tokens.len(), len);

        let mut sorted = labels.clone();
        sorted.sort_unstable();
        examples.push(Example {
            id: format!("doc{d:0id_width$}"),
            tokens,
            labels: sorted.iter().map(|&l| names[l].clone()).collect(),
        });
        plants.push(doc_plants);
    }

    Ok(Corpus {
        examples,
        label_space: LabelSpace::new(names)?,
        plants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let cfg = GeneratorConfig {
            docs: 40,
            ..Default::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.examples, b.examples);
        let c = generate_corpus(&GeneratorConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.examples, c.examples);
    }

    #[test]
    fn plants_sit_where_recorded() {
        let cfg = GeneratorConfig {
            docs: 100,
            labels: 6,
            max_len: 40,
            planted_len: 4,
            ..Default::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for (ex, plants) in corpus.examples.iter().zip(&corpus.plants) {
            assert_eq!(plants.len(), ex.labels.len());
            for p in plants {
                let seq = planted_sequence(p.label, cfg.planted_len);
                assert_eq!(&ex.tokens[p.offset..p.offset + cfg.planted_len], &seq[..]);
                assert!(ex.labels.contains(&corpus.label_space.name(p.label).to_string()));
            }
            assert!(ex.tokens.len() <= cfg.max_len);
        }
    }

    #[test]
    fn label_cardinality_and_lengths() {
        let cfg = GeneratorConfig {
            docs: 500,
            labels: 20,
            max_len: 256,
            ..Default::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for ex in &corpus.examples {
            assert!((1..=4).contains(&ex.labels.len()));
            assert!((64..=256).contains(&ex.tokens.len()));
        }
        assert_eq!(corpus.label_space.labels()[0], "L00");
    }

    #[test]
    fn zipf_skews_frequencies() {
        let cfg = GeneratorConfig {
            docs: 400,
            labels: 10,
            max_len: 60,
            zipf: Some(1.2),
            ..Default::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let count = |name: &str| {
            corpus
                .examples
                .iter()
                .filter(|e| e.labels.iter().any(|l| l == name))
                .count()
        };
        assert!(count("L0") > 2 * count("L9"));
    }

    #[test]
    fn bounds() {
        let bad = |cfg: GeneratorConfig| matches!(generate_corpus(&cfg), Err(Error::Config(_)));
        assert!(bad(GeneratorConfig {
            labels: 1,
            ..Default::default()
        }));
        assert!(bad(GeneratorConfig {
            max_len: 29,
            planted_len: 3,
            ..Default::default()
        }));
    }
}
