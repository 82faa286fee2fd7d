//! Finite-difference check of the whole pipeline on a small random document.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chunking::{chunk, ChunkedDocument};
use crate::config::ModelConfig;
use crate::encoder::partition_for_mode;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::Model;
use crate::tensor::{finite_diff_check, FdReport, GradMap, Objective, ParamStore};

pub const PASS_THRESHOLD: f64 = 1e-3;

/// Deliberately wrong gradient for one parameter, to prove the checker bites.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub param: String,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub tokens: usize,
    pub vocab: usize,
    pub eps: f64,
    pub exec: Exec,
    pub fault: Option<Fault>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tokens: 24,
            vocab: 32,
            eps: 1e-4,
            exec: Exec::default(),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleWorst {
    pub module: String,
    pub param: String,
    pub index: usize,
    pub rel_error: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub fd: FdReport,
    pub modules: Vec<ModuleWorst>,
}

impl CheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.fd.max_rel_error()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < PASS_THRESHOLD
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.modules {
            out.push_str(&format!(
                "{:<8} {:<36} rel={:.3e}  analytic={:+.6e}  numeric={:+.6e}\n",
                m.module, m.param, m.rel_error, m.analytic, m.numeric
            ));
        }
        out.push_str(&format!(
            "max relative error {:.3e} ({})\n",
            self.max_rel_error(),
            if self.passed() { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// A single-document loss viewed as a function of the parameters.
pub struct DocObjective<'a> {
    pub model: &'a Model,
    pub doc: &'a ChunkedDocument,
    pub gold: &'a [bool],
    pub fault: Option<&'a Fault>,
}

impl Objective for DocObjective<'_> {
    fn loss(&self, params: &ParamStore) -> Result<f64> {
        self.model.loss_with(params, self.doc, self.gold)
    }

    fn loss_and_grad(&self, params: &ParamStore) -> Result<(f64, GradMap)> {
        let (loss, mut grads) = self.model.loss_and_grad_with(params, self.doc, self.gold)?;
        if let Some(f) = self.fault {
            let g = grads
                .get_mut(&f.param)
                .ok_or_else(|| Error::UnknownParam(f.param.clone()))?;
            g.scale_assign(f.scale);
        }
        Ok((loss, grads))
    }
}

/// Random document and gold vector (at least one positive and one negative
/// label when C >= 2).
pub fn random_case(
    tokens: usize,
    vocab: usize,
    labels: usize,
    chunk_len: usize,
    seed: u64,
) -> Result<(ChunkedDocument, Vec<bool>)> {
    if vocab < 3 {
        return Err(Error::Config("check vocabulary needs at least 3 entries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let ids: Vec<usize> = (0..tokens).map(|_| rng.gen_range(2..vocab)).collect();
    let mut gold: Vec<bool> = (0..labels).map(|_| rng.gen_bool(0.5)).collect();
    if labels >= 2 {
        gold[0] = true;
        gold[1] = false;
    }
    Ok((chunk(&ids, chunk_len)?, gold))
}

fn module_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

/// Checks every parameter trainable under `config.tuning_mode`.
pub fn check_pipeline(config: &ModelConfig, opts: &CheckOptions) -> Result<CheckReport> {
    let model = Model::init(config, opts.vocab)?;
    let (doc, gold) = random_case(opts.tokens, opts.vocab, config.labels, config.chunk_len, config.seed)?;
    let names: Vec<String> = model
        .params()
        .names()
        .filter(|n| partition_for_mode(model.params(), config.tuning_mode).contains(*n))
        .map(str::to_string)
        .collect();
    if let Some(f) = &opts.fault {
        if !names.contains(&f.param) {
            return Err(Error::UnknownParam(f.param.clone()));
        }
    }
    let objective = DocObjective {
        model: &model,
        doc: &doc,
        gold: &gold,
        fault: opts.fault.as_ref(),
    };
    let fd = finite_diff_check(&objective, model.params(), &names, opts.eps, opts.exec)?;

    let mut modules: Vec<ModuleWorst> = Vec::new();
    for t in &fd.tensors {
        let module = module_of(&t.name);
        let candidate = ModuleWorst {
            module: module.to_string(),
            param: t.name.clone(),
            index: t.worst_index,
            rel_error: t.max_rel_error,
            analytic: t.analytic,
            numeric: t.numeric,
        };
        match modules.iter_mut().find(|m| m.module == module) {
            Some(m) if t.max_rel_error > m.rel_error => *m = candidate,
            Some(_) => {}
            None => modules.push(candidate),
        }
    }
    Ok(CheckReport { fd, modules })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TuningMode;

    fn small(mode: TuningMode, hops: usize) -> ModelConfig {
        ModelConfig {
            chunk_len: 8,
            d_model: 8,
            blocks: 1,
            labels: 5,
            hops,
            tuning_mode: mode,
            ..Default::default()
        }
    }

    #[test]
    fn every_mode_passes() {
        for mode in TuningMode::ALL {
            let r = check_pipeline(&small(mode, 2), &CheckOptions::default()).unwrap();
            assert!(r.passed(), "{mode}:\n{}", r.to_text());
        }
    }

    #[test]
    fn zero_hops_has_no_attention_params() {
        let r = check_pipeline(&small(TuningMode::Finetune, 0), &CheckOptions::default()).unwrap();
        assert!(r.passed());
        assert!(r.fd.tensors.iter().all(|t| !t.name.starts_with("mhlat.hop")));
        let e = r.fd.get("mhlat.label_embedding").unwrap();
        assert!(e.analytic != 0.0 || e.numeric != 0.0);
    }

    #[test]
    fn injected_fault_is_caught() {
        let opts = CheckOptions {
            fault: Some(Fault {
                param: "mhlat.hop0.att.weight".into(),
                scale: 1.5,
            }),
            ..Default::default()
        };
        let r = check_pipeline(&small(TuningMode::Finetune, 2), &opts).unwrap();
        assert!(!r.passed());
        let worst = r.modules.iter().find(|m| m.module == "mhlat").unwrap();
        assert_eq!(worst.param, "mhlat.hop0.att.weight");
    }
}
