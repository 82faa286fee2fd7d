//! Metrics against brute-force enumeration.

mod common;

use common::metric_oracle::{
    instance, oracle_macro_auc, oracle_macro_f1, oracle_micro_auc, oracle_micro_f1, oracle_p_at_k,
};
use common::rng;
use mhlat::metrics::{auc, macro_f1, micro_f1, precision_at_k, AucMode, MetricsReport};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn thousand_instances_match_enumeration() {
    let mut r = rng(77);
    let mut undefined_seen = 0;
    for n in 0..1000 {
        let x = instance(&mut r);
        let c = x.gold[0].len();
        assert!(close(micro_f1(&x.pred, &x.gold).unwrap(), oracle_micro_f1(&x)), "#{n}");
        assert!(close(macro_f1(&x.pred, &x.gold).unwrap(), oracle_macro_f1(&x)), "#{n}");
        match (auc(&x.scores, &x.gold, AucMode::Micro), oracle_micro_auc(&x)) {
            (Ok(a), Some(b)) => assert!(close(a, b), "#{n}: {a} vs {b}"),
            (Err(_), None) => undefined_seen += 1,
            (a, b) => panic!("#{n}: micro-AUC {a:?} vs oracle {b:?}"),
        }
        match (auc(&x.scores, &x.gold, AucMode::Macro), oracle_macro_auc(&x)) {
            (Ok(a), Some(b)) => assert!(close(a, b), "#{n}: {a} vs {b}"),
            (Err(_), None) => undefined_seen += 1,
            (a, b) => panic!("#{n}: macro-AUC {a:?} vs oracle {b:?}"),
        }
        for k in 1..=c {
            let got = precision_at_k(&x.scores, &x.gold, k).unwrap();
            assert!(close(got, oracle_p_at_k(&x, k)), "#{n} k={k}");
        }
    }
    assert!(undefined_seen > 0);
}

#[test]
fn ranking_metrics_ignore_monotone_transforms() {
    let mut r = rng(78);
    for _ in 0..200 {
        let x = instance(&mut r);
        let warped: Vec<Vec<f64>> = x
            .scores
            .iter()
            .map(|s| s.iter().map(|v| v.exp() * 3.0 + v).collect())
            .collect();
        for mode in [AucMode::Micro, AucMode::Macro] {
            if let (Ok(a), Ok(b)) = (auc(&x.scores, &x.gold, mode), auc(&warped, &x.gold, mode)) {
                assert!(close(a, b));
            }
        }
        for k in 1..=x.gold[0].len() {
            let a = precision_at_k(&x.scores, &x.gold, k).unwrap();
            let b = precision_at_k(&warped, &x.gold, k).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn perfect_and_inverted_scores() {
    let gold = vec![vec![true, false, false], vec![false, true, true]];
    let good: Vec<Vec<f64>> = gold.iter().map(|g| g.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()).collect();
    let bad: Vec<Vec<f64>> = good.iter().map(|s| s.iter().map(|v| -v).collect()).collect();
    assert_eq!(auc(&good, &gold, AucMode::Micro).unwrap(), 1.0);
    assert_eq!(auc(&bad, &gold, AucMode::Micro).unwrap(), 0.0);
    assert_eq!(micro_f1(&gold, &gold).unwrap(), 1.0);
    assert_eq!(precision_at_k(&good, &gold, 1).unwrap(), 1.0);
}

#[test]
fn empty_predictions_score_zero() {
    let gold = vec![vec![false, false]];
    assert_eq!(micro_f1(&gold, &gold).unwrap(), 0.0);
    assert_eq!(macro_f1(&gold, &gold).unwrap(), 0.0);
}

#[test]
fn report_marks_undefined_entries() {
    let gold = vec![vec![true, true]];
    let scores = vec![vec![0.3, 0.1]];
    let report = MetricsReport::compute(&scores, &gold, &gold, &[1, 3]).unwrap();
    assert!(report.micro_auc.value().is_none());
    assert!(report.macro_auc.value().is_none());
    assert_eq!(report.p_at_k[&1].value(), Some(1.0));
    assert!(report.p_at_k[&3].value().is_none());
    let json = report.to_json();
    assert!(json.contains("\"error\""));
}

#[test]
fn shape_mismatches_are_errors() {
    let gold = vec![vec![true, false]];
    assert!(micro_f1(&[vec![true]], &gold).is_err());
    assert!(auc(&[], &gold, AucMode::Micro).is_err());
    assert!(precision_at_k(&[vec![0.0, 1.0]], &gold, 0).is_err());
}
