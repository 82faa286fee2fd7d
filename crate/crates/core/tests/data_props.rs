//! Properties of the synthetic corpus, the vocabulary and chunking.

use std::collections::BTreeSet;

use mhlat::chunking::{chunk, PAD_ID};
use mhlat::data::{
    build_vocab, generate_corpus, load_jsonl, planted_sequence, save_jsonl, tokenize, Example, GeneratorConfig, UNK_ID,
};
use mhlat::metrics::micro_f1;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn contains(haystack: &[String], needle: &[String]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Predicts label j exactly when its planted sequence occurs in the document.
fn scan(examples: &[Example], labels: usize, planted_len: usize) -> Vec<Vec<bool>> {
    let seqs: Vec<Vec<String>> = (0..labels).map(|j| planted_sequence(j, planted_len)).collect();
    examples
        .iter()
        .map(|ex| seqs.iter().map(|s| contains(&ex.tokens, s)).collect())
        .collect()
}

#[test]
fn substring_scan_recovers_every_label() {
    for (seed, zipf) in [(0, None), (1, Some(1.1)), (2, None)] {
        let cfg = GeneratorConfig {
            seed,
            zipf,
            ..Default::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let gold: Vec<Vec<bool>> = corpus
            .examples
            .iter()
            .map(|ex| corpus.label_space.encode(&ex.labels).unwrap())
            .collect();
        let pred = scan(&corpus.examples, cfg.labels, cfg.planted_len);
        assert_eq!(micro_f1(&pred, &gold).unwrap(), 1.0);
    }
}

#[test]
fn vocabulary_never_sees_dev_tokens() {
    let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
    let (train, dev) = corpus.examples.split_at(400);
    let vocab = build_vocab(train, 1);
    let train_tokens: BTreeSet<&str> = train.iter().flat_map(|e| e.tokens.iter().map(String::as_str)).collect();
    assert_eq!(vocab.len(), train_tokens.len() + 2);
    let unseen = Example {
        id: "probe".into(),
        tokens: vec!["never-in-train".into()],
        labels: vec![],
    };
    assert_eq!(tokenize(&unseen, &vocab), vec![UNK_ID]);
    for ex in dev {
        for (t, id) in ex.tokens.iter().zip(tokenize(ex, &vocab)) {
            assert_eq!(id == UNK_ID, !train_tokens.contains(t.as_str()));
        }
    }
}

#[test]
fn train_and_dev_splits_are_disjoint_documents() {
    let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
    let ids: BTreeSet<&str> = corpus.examples.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids.len(), corpus.examples.len());
}

#[test]
fn jsonl_round_trip() {
    let corpus = generate_corpus(&GeneratorConfig {
        docs: 30,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.jsonl");
    save_jsonl(&path, &corpus.examples).unwrap();
    let (back, labels) = load_jsonl(&path, Some(&corpus.label_space)).unwrap();
    assert_eq!(back, corpus.examples);
    assert_eq!(labels, corpus.label_space);
}

#[test]
fn jsonl_rejects_unknown_labels() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    std::fs::write(&a, "{\"id\":\"1\",\"tokens\":[\"x\"],\"labels\":[\"A\"]}\n").unwrap();
    std::fs::write(&b, "{\"id\":\"2\",\"tokens\":[\"y\"],\"labels\":[\"B\"]}\n").unwrap();
    let (_, labels) = load_jsonl(&a, None).unwrap();
    assert!(load_jsonl(&b, Some(&labels)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        rng_seed: RngSeed::Fixed(0x5eed_da7a),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn chunking_pads_and_masks(ids in prop::collection::vec(1usize..50, 1..120), l in 1usize..17) {
        let doc = chunk(&ids, l).unwrap();
        prop_assert_eq!(doc.k(), ids.len().div_ceil(l));
        prop_assert_eq!(doc.n(), ids.len());
        prop_assert_eq!(doc.flatten(), ids.clone());
        for (c, m) in doc.chunks().iter().zip(doc.mask()) {
            prop_assert_eq!(c.len(), l);
            for (&id, &valid) in c.iter().zip(m) {
                prop_assert_eq!(valid, id != PAD_ID);
            }
        }
        prop_assert_eq!(doc.valid_counts().iter().sum::<usize>(), ids.len());
    }

    #[test]
    fn generator_respects_bounds(seed in any::<u64>(), labels in 2usize..12, max_len in 40usize..120) {
        let cfg = GeneratorConfig { seed, docs: 20, labels, max_len, ..Default::default() };
        let corpus = generate_corpus(&cfg).unwrap();
        for ex in &corpus.examples {
            prop_assert!(ex.tokens.len() <= max_len);
            prop_assert!(!ex.labels.is_empty() && ex.labels.len() <= 4.min(labels));
        }
        let gold: Vec<Vec<bool>> = corpus.examples.iter().map(|e| corpus.label_space.encode(&e.labels).unwrap()).collect();
        prop_assert_eq!(micro_f1(&scan(&corpus.examples, labels, cfg.planted_len), &gold).unwrap(), 1.0);
    }
}
