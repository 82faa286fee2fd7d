//! Label-specific linear classifiers and the summed binary cross-entropy
//! objective.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Role, Site, Tape, Tensor, Var};

pub const CLS_WEIGHT: &str = "decoder.cls.weight";
pub const CLS_BIAS: &str = "decoder.cls.bias";

pub fn init_classifiers<R: Rng + ?Sized>(store: &mut ParamStore, labels: usize, d: usize, rng: &mut R) {
    store.insert(CLS_WEIGHT, Tensor::xavier(labels, d, rng), Site::Head, Role::Weight);
    store.insert(CLS_BIAS, Tensor::zeros(1, labels), Site::Head, Role::Bias);
}

/// `logit_i = ⟨w_i, e_i⟩ + b_i`: row `i` of the classifier only ever sees
/// row `i` of the label representations. Returns a 1×C row.
pub fn score_labels(tape: &mut Tape, labels: Var, weight: Var, bias: Var) -> Result<Var> {
    let (es, ws, bs) = (tape.shape(labels), tape.shape(weight), tape.shape(bias));
    if es != ws {
        return Err(Error::shape("score_labels", es, ws));
    }
    if bs != (1, es.0) {
        return Err(Error::shape("score_labels bias", es, bs));
    }
    let dots = tape.row_dot(labels, weight)?;
    tape.add(dots, bias)
}

/// Summed BCE over labels with sigmoid outputs, in logit form.
pub fn bce_loss(tape: &mut Tape, logits: Var, gold: &[bool]) -> Result<Var> {
    let y: Vec<f64> = gold.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    tape.bce_with_logits(logits, &y)
}

pub use crate::tensor::sigmoid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub flags: Vec<bool>,
    pub ranking: Vec<usize>,
}

/// Label indices by descending score; ties go to the lower index.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Thresholds `sigmoid(logit)` and ranks labels.
pub fn predict(logits: &[f64], threshold: f64) -> Prediction {
    Prediction {
        flags: logits.iter().map(|&x| sigmoid(x) > threshold).collect(),
        ranking: rank(logits),
    }
}
