//! Metrics against brute-force implementations written from the definitions.

use errnet_core::metrics::{
    e_measure_curve, e_measure_mean, mae, nearest_foreground, s_measure, weighted_f, EvalPair, Map, Scores,
    DEFAULT_ALPHA, DEFAULT_BETA_SQ, E_THRESHOLDS,
};
use errnet_core::rng::SeededRng;
use errnet_core::synth::{synth_sample, SynthConfig};

mod oracles;

use oracles::{e_oracle, mae_oracle, nearest_oracle, random_pair, s_oracle, wf_oracle};

fn pair(h: usize, w: usize, pred: Vec<f64>, gt: Vec<f64>) -> EvalPair {
    EvalPair::new(Map::new(h, w, pred).unwrap(), Map::new(h, w, gt).unwrap()).unwrap()
}


#[test]
fn fifty_random_pairs_match_oracles() {
    let mut rng = SeededRng::new(2024);
    for k in 0..50 {
        let (pred, gt) = random_pair(&mut rng);
        let p = pair(8, 8, pred.clone(), gt.clone());
        assert!((mae(&p) - mae_oracle(&pred, &gt)).abs() < 1e-9, "pair {k} mae");
        let curve = e_measure_curve(&p);
        assert_eq!(curve.len(), E_THRESHOLDS);
        for (t, v) in curve.iter().enumerate() {
            assert!((v - e_oracle(&pred, &gt, t)).abs() < 1e-9, "pair {k} threshold {t}");
        }
        assert!((s_measure(&p, DEFAULT_ALPHA) - s_oracle(&pred, &gt, 8, 8)).abs() < 1e-9, "pair {k} s");
        assert!((weighted_f(&p, DEFAULT_BETA_SQ) - wf_oracle(&pred, &gt, 8, 8)).abs() < 1e-6, "pair {k} wf");
    }
}

#[test]
fn distance_transform_matches_exhaustive_search() {
    let mut rng = SeededRng::new(5);
    for _ in 0..20 {
        let (h, w) = (1 + rng.below(12), 1 + rng.below(12));
        let gt: Vec<f64> = (0..h * w).map(|_| if rng.unit() < 0.2 { 1.0 } else { 0.0 }).collect();
        let fg: Vec<bool> = gt.iter().map(|&g| g == 1.0).collect();
        let Some(nf) = nearest_foreground(&fg, h, w) else {
            assert!(gt.iter().all(|&g| g == 0.0));
            continue;
        };
        for (i, (d, j)) in nearest_oracle(&gt, h, w).into_iter().enumerate() {
            assert_eq!(nf.index[i], j);
            assert!((nf.distance(i) - d).abs() < 1e-12);
        }
    }
}

#[test]
fn mae_hand_example() {
    let p = pair(2, 2, vec![0.2, 0.8, 0.5, 0.0], vec![0.0, 1.0, 1.0, 0.0]);
    assert!((mae(&p) - 0.225).abs() < 1e-15);
    assert!((mae(&p) - mae_oracle(&[0.2, 0.8, 0.5, 0.0], &[0.0, 1.0, 1.0, 0.0])).abs() < 1e-15);
    assert_eq!(mae(&pair(2, 2, vec![0.0; 4], vec![1.0; 4])), 1.0);
}

fn quadrant_gt() -> Vec<f64> {
    (0..256).map(|i| if i / 16 < 8 && i % 16 < 8 { 1.0 } else { 0.0 }).collect()
}

#[test]
fn quadrant_case_matches_definitions() {
    let gt = quadrant_gt();
    let pred: Vec<f64> = gt.iter().map(|g| 0.9 * g).collect();
    let p = pair(16, 16, pred.clone(), gt.clone());
    assert!((s_measure(&p, 0.5) - s_oracle(&pred, &gt, 16, 16)).abs() < 1e-9);
    assert!((weighted_f(&p, 0.3) - wf_oracle(&pred, &gt, 16, 16)).abs() < 1e-9);
    assert!((mae(&p) - 0.1 * 64.0 / 256.0).abs() < 1e-15);
}

#[test]
fn perfect_and_inverted_predictions() {
    for seed in 0..10 {
        let sample = synth_sample(&SynthConfig { seed, count: 1, size: 32, contrast: 0.2 }, 0).unwrap();
        let gt = sample.mask.data().to_vec();
        let p = pair(32, 32, gt.clone(), gt.clone());
        let s = Scores::compute(&p);
        assert!((s.s_alpha - 1.0).abs() < 1e-6, "{}", s.s_alpha);
        assert!((s.f_w_beta - 1.0).abs() < 1e-6, "{}", s.f_w_beta);
        assert_eq!(s.mae, 0.0);
        assert!(s.e_phi > 0.5);
        let inv: Vec<f64> = gt.iter().map(|g| 1.0 - g).collect();
        let q = pair(32, 32, inv, gt.clone());
        assert_eq!(mae(&q), 1.0);
        let curve = e_measure_curve(&q);
        assert!(curve[128] < 0.05, "{}", curve[128]);
    }
    // binary pred == gt: every threshold in (0, 1] agrees exactly
    let gt = quadrant_gt();
    let curve = e_measure_curve(&pair(16, 16, gt.clone(), gt.clone()));
    assert!(curve[1..].iter().all(|&v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn degenerate_ground_truth() {
    let zeros = vec![0.0; 16];
    let p = pair(4, 4, zeros.clone(), zeros.clone());
    assert_eq!(s_measure(&p, 0.5), 1.0);
    assert_eq!(weighted_f(&p, 0.3), 1.0);
    let some = pair(4, 4, vec![0.25; 16], zeros.clone());
    assert!((s_measure(&some, 0.5) - 0.75).abs() < 1e-15);
    assert_eq!(weighted_f(&some, 0.3), 0.0);
    let full = pair(4, 4, vec![0.6; 16], vec![1.0; 16]);
    assert!((s_measure(&full, 0.5) - 0.6).abs() < 1e-15);
    let e = e_measure_mean(&full);
    assert!(e.is_finite() && (0.0..=1.0).contains(&e));
    for (pred, gt) in [(vec![0.3; 16], zeros.clone()), (vec![0.6; 16], vec![1.0; 16])] {
        for t in [0, 100, 255] {
            assert!((e_measure_curve(&pair(4, 4, pred.clone(), gt.clone()))[t] - e_oracle(&pred, &gt, t)).abs() < 1e-12);
        }
    }
    // recall 0 for an object at least 3 pixels from the border; closer in,
    // the zero-padded smoothing lowers the foreground error below 1.
    let inner: Vec<f64> = (0..256).map(|i| if (4..12).contains(&(i / 16)) && (4..12).contains(&(i % 16)) { 1.0 } else { 0.0 }).collect();
    assert_eq!(weighted_f(&pair(16, 16, vec![0.0; 256], inner), 0.3), 0.0);
    let corner = weighted_f(&pair(16, 16, vec![0.0; 256], quadrant_gt()), 0.3);
    assert!((corner - wf_oracle(&[0.0; 256], &quadrant_gt(), 16, 16)).abs() < 1e-12);
}

#[test]
fn eval_pair_validation() {
    let m = |v: f64| Map::filled(2, 2, v);
    assert!(EvalPair::new(m(0.5), m(1.0)).is_ok());
    assert!(EvalPair::new(m(1.5), m(1.0)).is_err());
    assert!(EvalPair::new(m(0.5), m(0.5)).is_err());
    assert!(EvalPair::new(Map::filled(2, 3, 0.5), m(1.0)).is_err());
}

#[test]
fn mae_reflection_and_permutation() {
    let mut rng = SeededRng::new(11);
    let (pred, gt) = random_pair(&mut rng);
    let a = mae(&pair(8, 8, pred.clone(), gt.clone()));
    let r = mae(&pair(8, 8, pred.iter().map(|v| 1.0 - v).collect(), gt.iter().map(|v| 1.0 - v).collect()));
    assert!((a - r).abs() < 1e-15);
    let mut perm: Vec<usize> = (0..64).collect();
    rng.shuffle(&mut perm);
    let (pp, gp): (Vec<f64>, Vec<f64>) = perm.iter().map(|&i| (pred[i], gt[i])).unzip();
    let shuffled = pair(8, 8, pp, gp);
    assert!((mae(&shuffled) - a).abs() < 1e-15);
    // structural measures notice the shuffle
    let base = pair(16, 16, quadrant_gt().iter().map(|g| 0.8 * g + 0.1).collect(), quadrant_gt());
    let mut perm: Vec<usize> = (0..256).collect();
    rng.shuffle(&mut perm);
    let (pp, gp): (Vec<f64>, Vec<f64>) = perm.iter().map(|&i| (base.pred().data[i], base.gt().data[i])).unzip();
    let mixed = pair(16, 16, pp, gp);
    assert_ne!(s_measure(&base, 0.5), s_measure(&mixed, 0.5));
}

#[test]
fn moving_toward_gt_never_hurts() {
    let mut rng = SeededRng::new(13);
    for _ in 0..20 {
        let (pred, gt) = random_pair(&mut rng);
        let mut last_f = f64::NEG_INFINITY;
        let mut last_m = f64::INFINITY;
        for step in 0..=10 {
            let lam = step as f64 / 10.0;
            let mixed: Vec<f64> = pred.iter().zip(&gt).map(|(p, g)| (1.0 - lam) * p + lam * g).collect();
            let p = pair(8, 8, mixed, gt.clone());
            let (f, m) = (weighted_f(&p, 0.3), mae(&p));
            assert!(f >= last_f - 1e-12 && m <= last_m + 1e-12);
            last_f = f;
            last_m = m;
        }
    }
}

#[test]
fn scores_stay_in_unit_interval() {
    let mut rng = SeededRng::new(17);
    for _ in 0..30 {
        let (pred, gt) = random_pair(&mut rng);
        let s = Scores::compute(&pair(8, 8, pred, gt));
        for v in [s.s_alpha, s.e_phi, s.f_w_beta, s.mae] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
