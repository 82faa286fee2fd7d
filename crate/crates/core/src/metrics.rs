//! Multi-label evaluation: micro/macro F1, micro/macro ROC-AUC, precision@k.
//!
//! Inputs are dense `D×C` tables, one row per document. F1 uses the 0/0 = 0
//! convention; macro-AUC skips labels lacking a positive or a negative.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoder::rank;
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [5, 8, 15];

fn check_shapes<A, B>(a: &[Vec<A>], b: &[Vec<B>]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Metric(format!(
            "row count mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let c = b.first().map_or(0, Vec::len);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.len() != c || y.len() != c {
            return Err(Error::Metric(format!(
                "row {i}: expected {c} labels, got {} and {}",
                x.len(),
                y.len()
            )));
        }
    }
    Ok(c)
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

pub fn micro_f1(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<f64> {
    check_shapes(pred, gold)?;
    let mut c = Counts::default();
    for (p, g) in pred.iter().zip(gold) {
        for (&pv, &gv) in p.iter().zip(g) {
            c.add(pv, gv);
        }
    }
    Ok(f1(c.tp, c.fp, c.fn_))
}

pub fn macro_f1(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<f64> {
    let labels = check_shapes(pred, gold)?;
    if labels == 0 {
        return Ok(0.0);
    }
    let mut per = vec![Counts::default(); labels];
    for (p, g) in pred.iter().zip(gold) {
        for (j, c) in per.iter_mut().enumerate() {
            c.add(p[j], g[j]);
        }
    }
    Ok(per.iter().map(|c| f1(c.tp, c.fp, c.fn_)).sum::<f64>() / labels as f64)
}

/// Mean over documents of the gold fraction among the `k` top-scored labels
/// (ties broken toward the lower label index).
pub fn precision_at_k(scores: &[Vec<f64>], gold: &[Vec<bool>], k: usize) -> Result<f64> {
    let labels = check_shapes(scores, gold)?;
    if k == 0 || k > labels {
        return Err(Error::Metric(format!(
            "precision@{k} needs 1 <= k <= C = {labels}"
        )));
    }
    if scores.is_empty() {
        return Err(Error::Metric("precision@k over zero documents".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(gold)
        .map(|(s, g)| {
            let hits = rank(s).iter().take(k).filter(|&&j| g[j]).count();
            hits as f64 / k as f64
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucMode {
    Macro,
    Micro,
}

/// Mann–Whitney AUC with mid-ranks: `P(s⁺ > s⁻) + ½·P(tie)`.
/// Returns `None` when one class is empty.
fn rank_auc(pairs: &mut [(f64, bool)]) -> Option<f64> {
    let pos = pairs.iter().filter(|p| p.1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j + 1 < pairs.len() && pairs[j + 1].0 == pairs[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let pos_in_group = pairs[i..=j].iter().filter(|p| p.1).count();
        rank_sum += mid * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn auc(scores: &[Vec<f64>], gold: &[Vec<bool>], mode: AucMode) -> Result<f64> {
    let labels = check_shapes(scores, gold)?;
    match mode {
        AucMode::Micro => {
            let mut pairs: Vec<(f64, bool)> = scores
                .iter()
                .zip(gold)
                .flat_map(|(s, g)| s.iter().copied().zip(g.iter().copied()))
                .collect();
            let has_pos = pairs.iter().any(|p| p.1);
            let has_neg = pairs.iter().any(|p| !p.1);
            rank_auc(&mut pairs).ok_or_else(|| {
                let side = match (has_pos, has_neg) {
                    (false, _) => "positive",
                    _ => "negative",
                };
                Error::Metric(format!("micro-AUC: no {side} cell"))
            })
        }
        AucMode::Macro => {
            let per: Vec<f64> = (0..labels)
                .filter_map(|j| {
                    let mut pairs: Vec<(f64, bool)> =
                        scores.iter().zip(gold).map(|(s, g)| (s[j], g[j])).collect();
                    rank_auc(&mut pairs)
                })
                .collect();
            if per.is_empty() {
                return Err(Error::Metric(
                    "macro-AUC: no label has both a positive and a negative document".into(),
                ));
            }
            Ok(per.iter().sum::<f64>() / per.len() as f64)
        }
    }
}

/// A metric value, or the reason it is undefined for this data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Score {
    Value(f64),
    Undefined { error: String },
}

impl Score {
    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Score::Value(v),
            Err(e) => Score::Undefined {
                error: e.to_string(),
            },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(*v),
            Score::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub macro_auc: Score,
    pub micro_auc: Score,
    pub p_at_k: BTreeMap<usize, Score>,
}

impl MetricsReport {
    pub fn compute(
        scores: &[Vec<f64>],
        pred: &[Vec<bool>],
        gold: &[Vec<bool>],
        ks: &[usize],
    ) -> Result<Self> {
        check_shapes(scores, gold)?;
        Ok(MetricsReport {
            macro_f1: macro_f1(pred, gold)?,
            micro_f1: micro_f1(pred, gold)?,
            macro_auc: Score::from_result(auc(scores, gold, AucMode::Macro)),
            micro_auc: Score::from_result(auc(scores, gold, AucMode::Micro)),
            p_at_k: ks
                .iter()
                .map(|&k| (k, Score::from_result(precision_at_k(scores, gold, k))))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned two-column text table.
    pub fn to_text(&self) -> String {
        let fmt = |s: &Score| match s {
            Score::Value(v) => format!("{v:.4}"),
            Score::Undefined { error } => format!("n/a ({error})"),
        };
        let mut rows = vec![
            ("macro-F1".to_string(), format!("{:.4}", self.macro_f1)),
            ("micro-F1".to_string(), format!("{:.4}", self.micro_f1)),
            ("macro-AUC".to_string(), fmt(&self.macro_auc)),
            ("micro-AUC".to_string(), fmt(&self.micro_auc)),
        ];
        for (k, s) in &self.p_at_k {
            rows.push((format!("P@{k}"), fmt(s)));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<width$}  {value}");
        }
        out
    }
}
