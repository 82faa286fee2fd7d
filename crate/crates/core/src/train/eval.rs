use std::io::Write;

use serde::Serialize;

use super::PreparedDoc;
use crate::data::LabelSpace;
use crate::decoder::{predict, sigmoid};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::MetricsReport;
use crate::model::Model;

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Per document, one raw score per label.
    pub logits: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<bool>>,
}

/// Scores every document and computes the metric report. Ranking metrics use
/// the raw logits, which order labels exactly as the probabilities do but
/// do not saturate.
pub fn evaluate(model: &Model, docs: &[PreparedDoc], ks: &[usize], exec: Exec) -> Result<Evaluation> {
    if docs.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let logits = exec
        .map(docs, |d| model.logits(&d.doc))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let threshold = model.config().threshold;
    let predicted: Vec<Vec<bool>> = logits.iter().map(|l| predict(l, threshold).flags).collect();
    let gold: Vec<Vec<bool>> = docs.iter().map(|d| d.gold.clone()).collect();
    let report = MetricsReport::compute(&logits, &predicted, &gold, ks)?;
    Ok(Evaluation {
        report,
        logits,
        predicted,
    })
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    scores: Vec<f64>,
    predicted: Vec<&'a str>,
}

/// One JSON object per document: id, per-label probabilities, predicted
/// label strings.
pub fn write_predictions<W: Write>(
    mut w: W,
    docs: &[PreparedDoc],
    eval: &Evaluation,
    labels: &LabelSpace,
) -> Result<()> {
    for ((d, logits), flags) in docs.iter().zip(&eval.logits).zip(&eval.predicted) {
        let line = PredictionLine {
            id: &d.id,
            scores: logits.iter().map(|&x| sigmoid(x)).collect(),
            predicted: flags
                .iter()
                .enumerate()
                .filter(|&(_, &f)| f)
                .map(|(j, _)| labels.name(j))
                .collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// For every (document, label) pair, the `top` token positions the final hop
/// attends to most, as `doc_id,label,pos_1,weight_1,...`. Ties keep the
/// earlier position. Fails for models without attention (N = 0).
pub fn write_attention_csv<W: Write>(
    w: W,
    model: &Model,
    docs: &[PreparedDoc],
    labels: &LabelSpace,
    top: usize,
    exec: Exec,
) -> Result<()> {
    if top == 0 {
        return Err(Error::Config("attention dump needs top >= 1".into()));
    }
    let maps = exec
        .map(docs, |d| model.logits_and_attention(&d.doc))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["doc_id".to_string(), "label".to_string()];
    for r in 1..=top {
        header.push(format!("pos_{r}"));
        header.push(format!("weight_{r}"));
    }
    out.write_record(&header)?;
    for (d, (_, alpha)) in docs.iter().zip(maps) {
        let alpha = alpha.ok_or_else(|| Error::Config("model has no attention hops (N = 0)".into()))?;
        for j in 0..alpha.rows() {
            let row = alpha.row(j);
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            let mut rec = vec![d.id.clone(), labels.name(j).to_string()];
            for &p in idx.iter().take(top) {
                rec.push(p.to_string());
                rec.push(format!("{:.6}", row[p]));
            }
            rec.resize(header.len(), String::new());
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}
