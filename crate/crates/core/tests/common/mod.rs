#![allow(dead_code)]

pub mod hop_oracle;
pub mod metric_oracle;

use mhlat::{Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::uniform(rows, cols, scale, rng)
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Builds `f` on a fresh tape from `inputs`, contracts its output with a
/// fixed random weight tensor and returns the scalar.
fn contracted<F>(f: &F, inputs: &[Tensor], weights: &Tensor, track: bool) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| if track { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    let out = f(&mut tape, &vars)?;
    let w = tape.constant(weights.clone());
    let dots = tape.row_dot(out, w)?;
    let loss = tape.sum(dots);
    Ok((tape, vars, loss))
}

/// Max relative error between the tape gradient and central differences of
/// `Σ f(inputs) ⊙ R` for a random `R`, over every coordinate of `inputs`.
/// Each coordinate is probed with steps `eps`, `eps/10` and `eps/100` and
/// scored by the closest one, since truncation and roundoff error pull in
/// opposite directions and a wrong gradient misses at every step.
pub fn op_grad_error<F>(f: F, inputs: Vec<Tensor>, seed: u64, eps: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut probe = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| probe.constant(t.clone())).collect();
    let out = f(&mut probe, &vars).unwrap();
    let (r, c) = probe.shape(out);
    let weights = Tensor::uniform(r, c, 1.0, &mut rng(seed ^ 0x5eed));

    let (tape, vars, loss) = contracted(&f, &inputs, &weights, true).unwrap();
    let grads = tape.backward(loss).unwrap();
    let value = |inp: &[Tensor]| {
        let (tape, _, loss) = contracted(&f, inp, &weights, false).unwrap();
        tape.value(loss).data()[0]
    };
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get_or_zeros(*v);
        for i in 0..inputs[k].len() {
            let mut best = f64::INFINITY;
            for h in [eps, eps / 10.0, eps / 100.0] {
                let mut shifted = inputs.clone();
                let base = shifted[k].data()[i];
                shifted[k].data_mut()[i] = base + h;
                let plus = value(&shifted);
                shifted[k].data_mut()[i] = base - h;
                let minus = value(&shifted);
                best = best.min(rel_err(g.data()[i], (plus - minus) / (2.0 * h)));
            }
            worst = worst.max(best);
        }
    }
    worst
}

pub fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

pub struct Fixture {
    pub train: Vec<mhlat::train::PreparedDoc>,
    pub dev: Vec<mhlat::train::PreparedDoc>,
    pub vocab: mhlat::data::Vocab,
    pub labels: mhlat::data::LabelSpace,
}

/// Synthetic corpus split 80/20, vocabulary from the train part.
pub fn fixture(gen: &mhlat::data::GeneratorConfig, chunk_len: usize) -> Fixture {
    let corpus = mhlat::data::generate_corpus(gen).unwrap();
    let cut = gen.docs - gen.docs / 5;
    let (train, dev) = corpus.examples.split_at(cut);
    let vocab = mhlat::data::build_vocab(train, 1);
    let labels = corpus.label_space;
    Fixture {
        train: mhlat::train::prepare(train, &vocab, &labels, chunk_len).unwrap(),
        dev: mhlat::train::prepare(dev, &vocab, &labels, chunk_len).unwrap(),
        vocab,
        labels,
    }
}
