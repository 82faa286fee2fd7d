//! Plain-loop reference for one label-wise attention hop, and helpers to run
//! the library hop on the same inputs.

use mhlat::mhlat::{attention_maps, hop, HopParams};
use mhlat::{Tape, Tensor};
use rand_chacha::ChaCha8Rng;

use super::rand_tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// x · Wᵀ, row by row.
pub fn project(x: &Mat, w: &Mat) -> Mat {
    x.iter().map(|r| w.iter().map(|wr| dot(r, wr)).collect()).collect()
}

pub fn relu(x: &Mat) -> Mat {
    x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn transpose(x: &Mat) -> Mat {
    (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

/// Σ_k w_ik · v_k for each row of weights.
pub fn mix(weights: &Mat, values: &Mat) -> Mat {
    weights
        .iter()
        .map(|w| {
            (0..values[0].len())
                .map(|j| w.iter().zip(values).map(|(a, v)| a * v[j]).sum())
                .collect()
        })
        .collect()
}

/// [a ; b] · Wᵀ + bias.
pub fn mapped(a: &Mat, b: &Mat, w: &Mat, bias: &[f64]) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            let cat: Vec<f64> = ra.iter().chain(rb).cloned().collect();
            w.iter().zip(bias).map(|(wr, bb)| dot(&cat, wr) + bb).collect()
        })
        .collect()
}

pub struct OracleHop {
    pub alpha: Mat,
    pub beta: Mat,
    pub h_next: Mat,
    pub e_next: Mat,
}

pub fn oracle_hop(h: &Mat, e: &Mat, p: &HopParams) -> OracleHop {
    let w_att = to_mat(&p.att);
    let w_map = to_mat(&p.map_weight);
    let b_map = p.map_bias.row(0).to_vec();
    let pe = relu(&project(e, &w_att));
    let ph = relu(&project(h, &w_att));
    let t: Mat = pe.iter().map(|r| ph.iter().map(|s| dot(r, s)).collect()).collect();
    let alpha: Mat = t.iter().map(|r| softmax(r)).collect();
    let beta: Mat = transpose(&t).iter().map(|r| softmax(r)).collect();
    let z = mix(&alpha, h);
    let d = mix(&beta, e);
    OracleHop {
        e_next: mapped(&z, e, &w_map, &b_map),
        h_next: mapped(&d, h, &w_map, &b_map),
        alpha,
        beta,
    }
}

pub fn max_diff(a: &Tensor, b: &Mat) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((a.get(i, j) - v).abs());
        }
    }
    m
}

pub struct HopRun {
    pub h_next: Tensor,
    pub e_next: Tensor,
    pub alpha: Tensor,
    pub beta: Tensor,
}

pub fn run_hop(h: &Tensor, e: &Tensor, p: &HopParams) -> HopRun {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let ev = tape.constant(e.clone());
    let pv = p.bind(&mut tape, false);
    let (hn, en) = hop(&mut tape, hv, ev, &pv).unwrap();
    let (a, b) = attention_maps(&mut tape, hv, ev, &pv).unwrap();
    HopRun {
        h_next: tape.value(hn).clone(),
        e_next: tape.value(en).clone(),
        alpha: tape.value(a).clone(),
        beta: tape.value(b).clone(),
    }
}

pub fn random_case(r: &mut ChaCha8Rng, n: usize, c: usize, d: usize) -> (Tensor, Tensor, HopParams) {
    let h = rand_tensor(r, n, d, 1.0);
    let e = rand_tensor(r, c, d, 1.0);
    (h, e, HopParams::init(d, r))
}

pub fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&i| t.row(i).to_vec()).collect();
    Tensor::from_rows(&rows)
}
