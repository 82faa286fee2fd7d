//! Central finite-difference gradient checker.

use super::{GradMap, ParamStore};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// A scalar function of the parameters with an analytic gradient.
pub trait Objective: Sync {
    fn loss(&self, params: &ParamStore) -> Result<f64>;
    fn loss_and_grad(&self, params: &ParamStore) -> Result<(f64, GradMap)>;
}

/// Worst coordinate of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FdReport {
    pub tensors: Vec<TensorCheck>,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn get(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient of `objective` with
/// `(f(θ+eps) - f(θ-eps)) / 2eps` for every coordinate of every tensor in
/// `names`. Probes are independent and fan out through `exec`.
pub fn finite_diff_check<O: Objective>(
    objective: &O,
    params: &ParamStore,
    names: &[String],
    eps: f64,
    exec: Exec,
) -> Result<FdReport> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let (_, analytic) = objective.loss_and_grad(params)?;

    let mut probes = Vec::new();
    for (t, name) in names.iter().enumerate() {
        let len = params.tensor(name)?.len();
        probes.extend((0..len).map(|i| (t, i)));
    }

    let numeric: Vec<Result<f64>> = exec.map(&probes, |&(t, i)| {
        let name = &names[t];
        let mut shifted = params.clone();
        let base = shifted.tensor(name)?.data()[i];
        shifted.tensor_mut(name)?.data_mut()[i] = base + eps;
        let plus = objective.loss(&shifted)?;
        shifted.tensor_mut(name)?.data_mut()[i] = base - eps;
        let minus = objective.loss(&shifted)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective not finite when probing {name}[{i}]"
            )));
        }
        Ok((plus - minus) / (2.0 * eps))
    });

    let mut tensors: Vec<TensorCheck> = names
        .iter()
        .map(|name| TensorCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            coords: 0,
        })
        .collect();

    for (&(t, i), num) in probes.iter().zip(numeric) {
        let num = num?;
        let name = &names[t];
        let ana = analytic
            .get(name)
            .map(|g| g.data()[i])
            .ok_or_else(|| Error::UnknownParam(name.clone()))?;
        let err = relative_error(ana, num);
        let entry = &mut tensors[t];
        entry.coords += 1;
        if err > entry.max_rel_error || entry.coords == 1 {
            entry.max_rel_error = err;
            entry.worst_index = i;
            entry.analytic = ana;
            entry.numeric = num;
        }
    }
    Ok(FdReport { tensors })
}
