//! Brute-force enumeration of every metric, for cross-checking.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::dims;

pub struct Instance {
    pub scores: Vec<Vec<f64>>,
    pub pred: Vec<Vec<bool>>,
    pub gold: Vec<Vec<bool>>,
}

/// Scores come from a coarse grid half the time so ties are common.
pub fn instance(r: &mut ChaCha8Rng) -> Instance {
    let d = dims(r, 1, 8);
    let c = dims(r, 1, 10);
    let coarse = r.gen_bool(0.5);
    let p_gold = r.gen_range(0.05..0.95);
    let mut scores = Vec::new();
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for _ in 0..d {
        scores.push(
            (0..c)
                .map(|_| {
                    if coarse {
                        r.gen_range(-2..=2) as f64 * 0.5
                    } else {
                        r.gen_range(-3.0..3.0)
                    }
                })
                .collect(),
        );
        pred.push((0..c).map(|_| r.gen_bool(0.4)).collect());
        gold.push((0..c).map(|_| r.gen_bool(p_gold)).collect());
    }
    Instance { scores, pred, gold }
}

pub fn f1_from(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

pub fn oracle_micro_f1(x: &Instance) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (p, g) in x.pred.iter().zip(&x.gold) {
        for (a, b) in p.iter().zip(g) {
            tp += (*a && *b) as u8 as f64;
            fp += (*a && !*b) as u8 as f64;
            fn_ += (!*a && *b) as u8 as f64;
        }
    }
    f1_from(tp, fp, fn_)
}

pub fn oracle_macro_f1(x: &Instance) -> f64 {
    let c = x.gold[0].len();
    let mut total = 0.0;
    for j in 0..c {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (p, g) in x.pred.iter().zip(&x.gold) {
            tp += (p[j] && g[j]) as u8 as f64;
            fp += (p[j] && !g[j]) as u8 as f64;
            fn_ += (!p[j] && g[j]) as u8 as f64;
        }
        total += f1_from(tp, fp, fn_);
    }
    total / c as f64
}

/// Fraction of (positive, negative) pairs ordered correctly, ties count half.
pub fn pair_auc(cells: &[(f64, bool)]) -> Option<f64> {
    let (mut good, mut pairs) = (0.0, 0.0);
    for &(sp, gp) in cells {
        for &(sn, gn) in cells {
            if gp && !gn {
                pairs += 1.0;
                if sp > sn {
                    good += 1.0;
                } else if sp == sn {
                    good += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| good / pairs)
}

pub fn oracle_micro_auc(x: &Instance) -> Option<f64> {
    let cells: Vec<(f64, bool)> = x
        .scores
        .iter()
        .zip(&x.gold)
        .flat_map(|(s, g)| s.iter().copied().zip(g.iter().copied()))
        .collect();
    pair_auc(&cells)
}

pub fn oracle_macro_auc(x: &Instance) -> Option<f64> {
    let c = x.gold[0].len();
    let per: Vec<f64> = (0..c)
        .filter_map(|j| {
            let cells: Vec<(f64, bool)> = x.scores.iter().zip(&x.gold).map(|(s, g)| (s[j], g[j])).collect();
            pair_auc(&cells)
        })
        .collect();
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

/// Label j is in the top k when fewer than k labels beat it, where a label
/// beats j with a higher score or an equal score and a lower index.
pub fn oracle_p_at_k(x: &Instance, k: usize) -> f64 {
    let mut total = 0.0;
    for (s, g) in x.scores.iter().zip(&x.gold) {
        let mut hits = 0.0;
        for j in 0..s.len() {
            let beaten_by = (0..s.len()).filter(|&i| s[i] > s[j] || (s[i] == s[j] && i < j)).count();
            if beaten_by < k && g[j] {
                hits += 1.0;
            }
        }
        total += hits / k as f64;
    }
    total / x.scores.len() as f64
}
