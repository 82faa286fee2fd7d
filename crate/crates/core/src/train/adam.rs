use std::collections::BTreeSet;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{GradMap, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a fixed trainable subset. Moments exist only for that subset;
/// every other parameter is left untouched by [`Adam::step`].
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore, trainable: &BTreeSet<String>) -> Result<Self> {
        let mut moments = IndexMap::new();
        for name in trainable {
            let (r, c) = params.tensor(name)?.shape();
            moments.insert(name.clone(), (Tensor::zeros(r, c), Tensor::zeros(r, c)));
        }
        Ok(Adam {
            cfg,
            step: 0,
            moments,
        })
    }

    pub fn trainable(&self) -> impl Iterator<Item = &str> {
        self.moments.keys().map(String::as_str)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()> {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, (m, v)) in &mut self.moments {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::UnknownParam(format!("no gradient for `{name}`")))?;
            let p = params.tensor_mut(name)?;
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", g.shape(), p.shape()));
            }
            for i in 0..p.len() {
                let gi = g.data()[i];
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * gi;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                p.data_mut()[i] -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
