//! Mini-batch training with early stopping, evaluation and output dumps.

mod adam;
mod eval;

pub use adam::{Adam, AdamConfig};
pub use eval::{evaluate, write_attention_csv, write_predictions, Evaluation};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chunking::{chunk, ChunkedDocument};
use crate::data::{tokenize, Example, LabelSpace, Vocab};
use crate::encoder::partition_for_mode;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{MetricsReport, DEFAULT_KS};
use crate::model::Model;
use crate::tensor::{GradMap, ParamStore};

pub const DEFAULT_PATIENCE: usize = 5;

/// An example after tokenization and chunking.
#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub id: String,
    pub doc: ChunkedDocument,
    pub gold: Vec<bool>,
}

pub fn prepare(
    examples: &[Example],
    vocab: &Vocab,
    labels: &LabelSpace,
    chunk_len: usize,
) -> Result<Vec<PreparedDoc>> {
    examples
        .iter()
        .map(|ex| {
            Ok(PreparedDoc {
                id: ex.id.clone(),
                doc: chunk(&tokenize(ex, vocab), chunk_len)?,
                gold: labels.encode(&ex.labels)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub patience: usize,
    pub exec: Exec,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            patience: DEFAULT_PATIENCE,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_micro_f1: f64,
    pub improved: bool,
    pub dev: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev micro-F1.
    pub best: Model,
    pub best_epoch: usize,
    pub best_dev_micro_f1: f64,
    /// Parameters after the last epoch that ran.
    pub last: Model,
    pub history: Vec<EpochLog>,
}

/// Mean loss and mean gradient of the trainable parameters over `batch`.
/// Per-document work fans out through `exec`; the reduction runs in batch
/// order, so the result does not depend on scheduling.
pub fn batch_gradient(
    model: &Model,
    batch: &[&PreparedDoc],
    trainable: &[String],
    exec: Exec,
) -> Result<(f64, GradMap)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let per_doc = exec.map(batch, |d| model.loss_and_grad(&d.doc, &d.gold));
    let mut loss = 0.0;
    let mut sum: Option<GradMap> = None;
    for r in per_doc {
        let (l, mut g) = r?;
        loss += l;
        g.retain(|name, _| trainable.contains(name));
        match &mut sum {
            None => sum = Some(g),
            Some(acc) => {
                for (name, t) in acc.iter_mut() {
                    t.add_assign(&g[name]);
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = sum.expect("non-empty batch");
    for t in grads.values_mut() {
        t.scale_assign(scale);
    }
    Ok((loss * scale, grads))
}

/// Numerical failure at `place`, with every parameter norm attached.
fn diverged(detail: &str, place: &str, params: &ParamStore) -> Error {
    let mut s = format!("{detail} at {place}; parameter norms:");
    for (name, p) in params.iter() {
        let _ = write!(s, "\n  {name}: {:.6e}", p.tensor.norm());
    }
    Error::NonFinite(s)
}

fn locate(e: Error, place: &str, params: &ParamStore) -> Error {
    match e {
        Error::NonFinite(detail) => diverged(&detail, place, params),
        other => other,
    }
}

/// Trains `model` in place of a copy and returns the best and last states.
///
/// The document order is reshuffled each epoch from `config.seed`. Training
/// stops after `config.epochs` or once dev micro-F1 has not improved for
/// `opts.patience` consecutive epochs.
pub fn train(
    model: Model,
    train_docs: &[PreparedDoc],
    dev_docs: &[PreparedDoc],
    opts: TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if train_docs.is_empty() || dev_docs.is_empty() {
        return Err(Error::Data("training needs non-empty train and dev sets".into()));
    }
    let cfg = model.config().clone();
    for d in train_docs.iter().chain(dev_docs) {
        if d.gold.len() != cfg.labels {
            return Err(Error::LabelSpaceMismatch {
                expected: cfg.labels,
                found: d.gold.len(),
            });
        }
    }
    let trainable_set = partition_for_mode(model.params(), cfg.tuning_mode);
    let trainable: Vec<String> = trainable_set.iter().cloned().collect();
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
        model.params(),
        &trainable_set,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();

    let mut model = model;
    let mut best: Option<(Model, usize, f64)> = None;
    let mut stall = 0;
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedDoc> = idx.iter().map(|&i| &train_docs[i]).collect();
            let place = format!("epoch {epoch}, batch {}", b + 1);
            let (loss, grads) = batch_gradient(&model, &batch, &trainable, opts.exec)
                .map_err(|e| locate(e, &place, model.params()))?;
            if !loss.is_finite() || grads.values().any(|g| !g.all_finite()) {
                return Err(diverged(&format!("loss {loss}"), &place, model.params()));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grads)?;
        }

        let dev = evaluate(&model, dev_docs, &DEFAULT_KS, opts.exec)
            .map_err(|e| locate(e, &format!("epoch {epoch}, dev evaluation"), model.params()))?;
        let f1 = dev.report.micro_f1;
        let improved = best.as_ref().is_none_or(|&(_, _, b)| f1 > b);
        if improved {
            best = Some((model.clone(), epoch, f1));
            stall = 0;
        } else {
            stall += 1;
        }
        let log = EpochLog {
            epoch,
            train_loss: epoch_loss / train_docs.len() as f64,
            dev_micro_f1: f1,
            improved,
            dev: dev.report,
        };
        on_epoch(&log);
        history.push(log);
        if stall >= opts.patience {
            break;
        }
    }

    let (best, best_epoch, best_dev_micro_f1) = match best {
        Some(b) => b,
        // zero epochs: the initial state is both best and last
        None => (model.clone(), 0, evaluate(&model, dev_docs, &DEFAULT_KS, opts.exec)?.report.micro_f1),
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_dev_micro_f1,
        last: model,
        history,
    })
}
