//! The full pipeline: chunk encoder → multi-hop label-wise attention →
//! label-specific classifiers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chunking::ChunkedDocument;
use crate::config::ModelConfig;
use crate::decoder::{bce_loss, init_classifiers, score_labels, CLS_BIAS, CLS_WEIGHT};
use crate::encoder::{init_encoder, Encoder, EncoderShape, EMBEDDING};
use crate::error::{Error, Result};
use crate::mhlat::{hop_param_sets, hop_schedule, init_attention, multi_hop, HopNames, HopVars, LABEL_EMBEDDING};
use crate::tensor::{Bound, GradMap, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    encoder: Encoder,
    params: ParamStore,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// 1×C.
    pub logits: Var,
    /// Final hop's label-over-token attention, C×n. `None` when N = 0.
    pub alpha: Option<Var>,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`. `config.labels` must be set.
    pub fn init(config: &ModelConfig, vocab: usize) -> Result<Self> {
        config.validate()?;
        if config.labels == 0 {
            return Err(Error::Config("label count C must be known before init".into()));
        }
        let shape = encoder_shape(config, vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        init_encoder(&mut params, shape, &mut rng);
        init_attention(
            &mut params,
            config.labels,
            config.d_model,
            config.hops,
            config.share_hops,
            &mut rng,
        );
        init_classifiers(&mut params, config.labels, config.d_model, &mut rng);
        Ok(Model {
            config: config.clone(),
            encoder: Encoder::new(shape),
            params,
        })
    }

    /// Rebuilds a model around loaded parameters, checking that they match
    /// the configuration.
    pub fn from_params(config: &ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let vocab = params.tensor(EMBEDDING)?.rows();
        let expected = Model::init(config, vocab)?;
        let mismatch = expected.params.len() != params.len()
            || expected.params.iter().any(|(name, p)| {
                params
                    .get(name)
                    .is_none_or(|q| q.tensor.shape() != p.tensor.shape() || q.site != p.site || q.role != p.role)
            });
        if mismatch {
            return Err(Error::Checkpoint(
                "parameters do not match the model configuration".into(),
            ));
        }
        Ok(Model {
            config: config.clone(),
            encoder: expected.encoder,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn labels(&self) -> usize {
        self.config.labels
    }

    pub fn vocab(&self) -> usize {
        self.encoder.shape().vocab
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Hop parameter names per application.
    pub fn hop_names(&self) -> Vec<HopNames> {
        hop_schedule(self.config.hops, self.config.share_hops)
    }

    pub fn hop_sets(&self) -> usize {
        hop_param_sets(self.config.hops, self.config.share_hops)
    }

    /// Forward pass using `bound` parameters.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, doc: &ChunkedDocument) -> Result<Forward> {
        if doc.chunk_len() != self.config.chunk_len {
            return Err(Error::shape(
                "forward",
                (doc.k(), doc.chunk_len()),
                (doc.k(), self.config.chunk_len),
            ));
        }
        let e0 = bound.var(LABEL_EMBEDDING)?;
        let (labels, alpha) = if self.config.hops == 0 {
            // E^[0] is returned untouched; the context is never consumed.
            (e0, None)
        } else {
            let h0 = self.encoder.encode_document(tape, bound, doc)?;
            let hops = self
                .hop_names()
                .iter()
                .map(|n| HopVars::from_bound(bound, n))
                .collect::<Result<Vec<_>>>()?;
            let out = multi_hop(tape, h0, e0, &hops, self.config.hops)?;
            (out.labels, out.last_alpha)
        };
        let logits = score_labels(tape, labels, bound.var(CLS_WEIGHT)?, bound.var(CLS_BIAS)?)?;
        Ok(Forward { logits, alpha })
    }

    /// Per-document loss and gradient w.r.t. every parameter in `params`
    /// (which must share this model's layout).
    pub fn loss_and_grad_with(
        &self,
        params: &ParamStore,
        doc: &ChunkedDocument,
        gold: &[bool],
    ) -> Result<(f64, GradMap)> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let fwd = self.forward(&mut tape, &bound, doc)?;
        let loss = bce_loss(&mut tape, fwd.logits, gold)?;
        let value = tape.value(loss).data()[0];
        let grads = tape.backward(loss)?;
        Ok((value, bound.collect(grads)))
    }

    pub fn loss_with(&self, params: &ParamStore, doc: &ChunkedDocument, gold: &[bool]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let fwd = self.forward(&mut tape, &bound, doc)?;
        let loss = bce_loss(&mut tape, fwd.logits, gold)?;
        Ok(tape.value(loss).data()[0])
    }

    pub fn loss_and_grad(&self, doc: &ChunkedDocument, gold: &[bool]) -> Result<(f64, GradMap)> {
        self.loss_and_grad_with(&self.params, doc, gold)
    }

    /// Raw classifier scores, one per label.
    pub fn logits(&self, doc: &ChunkedDocument) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let fwd = self.forward(&mut tape, &bound, doc)?;
        Ok(tape.value(fwd.logits).data().to_vec())
    }

    /// Logits together with the final hop's α (C×n).
    pub fn logits_and_attention(&self, doc: &ChunkedDocument) -> Result<(Vec<f64>, Option<Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let fwd = self.forward(&mut tape, &bound, doc)?;
        let alpha = fwd.alpha.map(|a| tape.value(a).clone());
        Ok((tape.value(fwd.logits).data().to_vec(), alpha))
    }
}

fn encoder_shape(config: &ModelConfig, vocab: usize) -> EncoderShape {
    EncoderShape {
        vocab,
        chunk_len: config.chunk_len,
        d_model: config.d_model,
        blocks: config.blocks,
    }
}
