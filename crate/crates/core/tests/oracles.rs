//! Library results checked against independent reference computations.

mod common;

use common::*;
use ndarray::{array, Array2};
use obliqforest::coxscore::{log_partial_likelihood, newton_raphson_fit, newton_raphson_step};
use obliqforest::importance::vi_discrimination;
use obliqforest::metrics::{brier_t, censoring_km, harrell_c, integrated_brier, ipa, td_c_statistic};
use obliqforest::splitfind::{best_cutpoint, logrank_stat};
use obliqforest::tree::kaplan_meier;
use obliqforest::Error;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn loglik_matches_definition() {
    for seed in 0..40 {
        let p = random_problem(seed, 25, 4);
        let k = p.x.ncols();
        let beta: Vec<f64> = (0..k).map(|j| 0.3 * j as f64 - 0.2).collect();
        let lib = log_partial_likelihood(p.x.view(), &p.time, &p.status, &p.weights, &beta).unwrap();
        assert!(close(lib, loglik(&p, &beta), 1e-12), "seed {seed}");
    }
}

#[test]
fn derivatives_match_finite_differences_away_from_zero() {
    for seed in 100..120 {
        let p = random_problem(seed, 30, 3);
        let k = p.x.ncols();
        let beta: Vec<f64> = (0..k).map(|j| 0.25 - 0.2 * j as f64).collect();
        let step = newton_raphson_step(p.x.view(), &p.time, &p.status, &p.weights, &beta).unwrap();
        let f = |b: &[f64]| loglik(&p, b);
        let g = fd_gradient(&f, &beta, 1e-3);
        let h = fd_hessian(&f, &beta, 1e-3);
        let gscale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        let hscale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        for a in 0..k {
            assert!((step.score[a] - g[a]).abs() <= 1e-6 * gscale, "seed {seed} U[{a}]");
            for b in 0..k {
                assert!((step.hessian[[a, b]] + h[a][b]).abs() <= 1e-6 * hscale, "seed {seed} H[{a},{b}]");
            }
        }
    }
}

#[test]
fn duplicated_rows_equal_doubled_weights() {
    for seed in 200..220 {
        let p = random_problem(seed, 15, 3);
        let n = p.time.len();
        let doubled: Vec<u32> = p.weights.iter().map(|w| 2 * w).collect();
        let rows: Vec<usize> = (0..n).flat_map(|i| [i, i]).collect();
        let x2 = Array2::from_shape_fn((2 * n, p.x.ncols()), |(r, j)| p.x[[rows[r], j]]);
        let t2: Vec<f64> = rows.iter().map(|&i| p.time[i]).collect();
        let s2: Vec<bool> = rows.iter().map(|&i| p.status[i]).collect();
        let w2: Vec<u32> = rows.iter().map(|&i| p.weights[i]).collect();
        let zero = vec![0.0; p.x.ncols()];
        let a = newton_raphson_step(p.x.view(), &p.time, &p.status, &doubled, &zero);
        let b = newton_raphson_step(x2.view(), &t2, &s2, &w2, &zero);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (u, v) in a.beta.iter().zip(&b.beta) {
                    assert!(close(*u, *v, 1e-10), "seed {seed}");
                }
            }
            (Err(Error::Collinear), Err(Error::Collinear)) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn one_step_is_affine_equivariant_at_zero() {
    for seed in 300..320 {
        let p = random_problem(seed, 25, 3);
        let k = p.x.ncols();
        let zero = vec![0.0; k];
        let Ok(base) = newton_raphson_step(p.x.view(), &p.time, &p.status, &p.weights, &zero) else {
            continue;
        };
        let (a, shift) = (4.0, -1.5);
        let mut xs = p.x.clone();
        xs.column_mut(0).mapv_inplace(|v| a * v + shift);
        let scaled = newton_raphson_step(xs.view(), &p.time, &p.status, &p.weights, &zero).unwrap();
        assert!(close(scaled.beta[0], base.beta[0] / a, 1e-9), "seed {seed}");
        for j in 1..k {
            assert!(close(scaled.beta[j], base.beta[j], 1e-9), "seed {seed}");
        }
    }
}

#[test]
fn converged_fit_zeroes_the_gradient() {
    let mut r = rng(7);
    let n = 100;
    let x = Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut r));
    let time: Vec<f64> = (0..n)
        .map(|i| {
            let rate = (0.5 * x[[i, 0]] as f64).exp();
            Exp::new(rate).unwrap().sample(&mut r)
        })
        .collect();
    let status: Vec<bool> = (0..n).map(|_| r.random_bool(0.8)).collect();
    let w = vec![1u32; n];
    let fit = newton_raphson_fit(x.view(), &time, &status, &w, 20, 1e-9).unwrap();
    let p = Problem { x: x.clone(), time: time.clone(), status: status.clone(), weights: w.clone() };
    let g = fd_gradient(&|b: &[f64]| loglik(&p, b), &fit.beta, 1e-4);
    assert!(g.iter().all(|v| v.abs() < 1e-4), "{g:?}");
    for j in 0..2 {
        let truth = [0.5, 0.0][j];
        assert!((fit.beta[j] - truth).abs() < 3.0 * fit.std_err[j], "β{j}={} se={}", fit.beta[j], fit.std_err[j]);
    }
}

#[test]
fn separated_fit_stays_finite_and_monotone() {
    let x = array![[1.0], [0.0]];
    let (time, status, w) = ([1.0, 2.0], [true, true], [1u32, 1]);
    let mut last = f64::NEG_INFINITY;
    for iters in 1..=20 {
        let fit = newton_raphson_fit(x.view(), &time, &status, &w, iters, 1e-9).unwrap();
        assert!(fit.beta[0].is_finite());
        let l = log_partial_likelihood(x.view(), &time, &status, &w, &fit.beta).unwrap();
        assert!(l >= last - 1e-15, "iteration {iters}");
        last = l;
        if iters == 20 {
            assert_eq!(fit.n_iter, 20);
        }
    }
}

#[test]
fn logrank_textbook_six_rows() {
    let time = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let status = [true; 6];
    let eta = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let left: Vec<bool> = eta.iter().map(|&e| e <= 0.5).collect();
    // O - E and V tabulated by hand for event times 1..5 (t = 6 has one at risk)
    let o_minus_e = (1.0 - 3.0 / 6.0) + (1.0 - 2.0 / 5.0) + (1.0 - 1.0 / 4.0);
    let v = (3.0 / 6.0) * (3.0 / 6.0) + (2.0 / 5.0) * (3.0 / 5.0) + (1.0 / 4.0) * (3.0 / 4.0);
    let hand = o_minus_e * o_minus_e / v;
    let lib = logrank_stat(&eta, &time, &status, &[1; 6], 0.5).unwrap();
    assert!((lib - hand).abs() < 1e-10);
    assert!((brute_logrank(&time, &status, &left) - hand).abs() < 1e-10);
}

#[test]
fn logrank_matches_tabulation_with_duplicated_rows() {
    for seed in 400..440 {
        let mut r = rng(seed);
        let n = r.random_range(6..40);
        let time: Vec<f64> = (0..n).map(|_| r.random_range(1..12) as f64).collect();
        let status: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        let eta: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
        let weights: Vec<u32> = (0..n).map(|_| r.random_range(0..4)).collect();
        let c = 2.5;
        let wl: u32 = (0..n).filter(|&i| eta[i] <= c).map(|i| weights[i]).sum();
        let wr: u32 = (0..n).filter(|&i| eta[i] > c).map(|i| weights[i]).sum();
        let lib = logrank_stat(&eta, &time, &status, &weights, c);
        if wl == 0 || wr == 0 {
            assert!(matches!(lib, Err(Error::DegenerateCutpoint(_))));
            continue;
        }
        let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, weights[i] as usize)).collect();
        let t2: Vec<f64> = rows.iter().map(|&i| time[i]).collect();
        let s2: Vec<bool> = rows.iter().map(|&i| status[i]).collect();
        let l2: Vec<bool> = rows.iter().map(|&i| eta[i] <= c).collect();
        let oracle = if s2.iter().any(|&s| s) { brute_logrank(&t2, &s2, &l2) } else { f64::NAN };
        let lib = lib.unwrap();
        if oracle.is_finite() {
            assert!(close(lib, oracle, 1e-10), "seed {seed}: {lib} vs {oracle}");
        } else {
            assert_eq!(lib, 0.0, "seed {seed}");
        }
    }
}

#[test]
fn best_cutpoint_agrees_with_exhaustive_scan() {
    for seed in 500..520 {
        let mut r = rng(seed);
        let n = 40;
        let time: Vec<f64> = (0..n).map(|_| r.random_range(1.0..10.0)).collect();
        let status: Vec<bool> = (0..n).map(|_| r.random_bool(0.7)).collect();
        let eta: Vec<f64> = (0..n).map(|_| r.random_range(0..15) as f64).collect();
        let w = vec![1u32; n];
        let mut cands: Vec<f64> = eta.clone();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        cands.pop();
        let best = best_cutpoint(&eta, &time, &status, &w, &cands).unwrap();
        let mut top = (f64::NEG_INFINITY, f64::NAN);
        for &c in &cands {
            let left: Vec<bool> = eta.iter().map(|&e| e <= c).collect();
            let s = brute_logrank(&time, &status, &left);
            let s = if s.is_finite() { s } else { 0.0 };
            if s > top.0 + 1e-9 {
                top = (s, c);
            }
        }
        assert_eq!(best.cutpoint, top.1, "seed {seed}");
        assert!(close(best.stat, top.0, 1e-9));
    }
}

#[test]
fn kaplan_meier_matches_product_limit() {
    for seed in 600..630 {
        let mut r = rng(seed);
        let n = r.random_range(2..50);
        let time: Vec<f64> = (0..n).map(|_| r.random_range(1..20) as f64).collect();
        let status: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        let km = kaplan_meier(&time, &status, &vec![1; n]);
        for t in 0..22 {
            let t = t as f64 + 0.5 * (t % 2) as f64;
            assert!(close(km.surv_at(t), brute_km(&time, &status, t), 1e-12), "seed {seed} t {t}");
        }
    }
}

#[test]
fn concordance_matches_pair_enumeration() {
    for seed in 700..760 {
        let mut r = rng(seed);
        let n = r.random_range(2..150);
        let time: Vec<f64> = (0..n).map(|_| r.random_range(1..30) as f64).collect();
        let status: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        let risk: Vec<f64> = (0..n).map(|_| r.random_range(0..10) as f64).collect();
        match (harrell_c(&time, &status, &risk), brute_harrell(&time, &status, &risk)) {
            (Ok(a), Some(b)) => assert_eq!(a, b, "seed {seed}"),
            (Err(Error::NoUsablePairs), None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn td_c_uncensored_matches_pair_enumeration() {
    for seed in 800..850 {
        let mut r = rng(seed);
        let n = r.random_range(4..150);
        let time: Vec<f64> = (0..n).map(|_| r.random_range(1..30) as f64).collect();
        let status = vec![true; n];
        let risk: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64).collect();
        let t = 15.0;
        let g = censoring_km(&time, &status);
        match (td_c_statistic(&risk, &time, &status, t, &g), brute_td_c(&risk, &time, t)) {
            (Ok(a), Some(b)) => assert_eq!(a, b, "seed {seed}"),
            (Err(Error::NoUsablePairs), None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn vi_discrimination_matches_pair_enumeration() {
    for seed in 900..950 {
        let mut r = rng(seed);
        let p = r.random_range(2..120);
        let values: Vec<f64> = (0..p).map(|_| r.random_range(0..12) as f64 / 4.0).collect();
        let rel: Vec<bool> = (0..p).map(|_| r.random_bool(0.4)).collect();
        match (vi_discrimination(&values, &rel), brute_vi_discrimination(&values, &rel)) {
            (Ok(a), Some(b)) => assert_eq!(a, b, "seed {seed}"),
            (Err(Error::SingleClass), None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

/// Six rows with censorings at 2, 4, 7 and events at 1, 3, 6; horizon 5.
/// Censoring survival: G = 1 before 2, 4/5 on [2, 4), 8/15 on [4, 7).
pub const BRIER_TIME: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 6.0, 7.0];
pub const BRIER_STATUS: [bool; 6] = [true, false, true, false, true, false];
pub const BRIER_PRED: [f64; 6] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];

#[test]
fn brier_six_row_hand_evaluation() {
    let terms = [
        0.9 * 0.9 / 1.0,
        0.0,
        0.7 * 0.7 / (4.0 / 5.0),
        0.0,
        (1.0 - 0.5) * (1.0 - 0.5) / (8.0 / 15.0),
        (1.0 - 0.4) * (1.0 - 0.4) / (8.0 / 15.0),
    ];
    let hand: f64 = terms.iter().sum::<f64>() / 6.0;
    let g = censoring_km(&BRIER_TIME, &BRIER_STATUS);
    let lib = brier_t(&BRIER_PRED, &BRIER_TIME, &BRIER_STATUS, 5.0, &g).unwrap();
    assert!((lib - hand).abs() < 1e-12);
}

#[test]
fn brier_uncensored_is_mean_squared_error() {
    let time = [1.0, 2.0, 3.0, 4.0];
    let status = [true; 4];
    let pred = [0.1, 0.3, 0.6, 0.9];
    let g = censoring_km(&time, &status);
    let t = 2.5;
    let mse: f64 = (0..4).map(|i| (pred[i] - if time[i] > t { 1.0f64 } else { 0.0 }).powi(2)).sum::<f64>() / 4.0;
    assert!((brier_t(&pred, &time, &status, t, &g).unwrap() - mse).abs() < 1e-15);
}

#[test]
fn integrated_brier_trapezoid() {
    let times = [1.0, 2.0, 4.0];
    let bs = [0.1, 0.2, 0.4];
    // nodes (1.5, 0.15), (2, 0.2), (3, 0.3)
    let area = 0.5 * (0.15 + 0.2) * 0.5 + 0.5 * (0.2 + 0.3) * 1.0;
    assert!((integrated_brier(&times, &bs, 1.5, 3.0).unwrap() - area / 1.5).abs() < 1e-15);
    assert_eq!(ipa(0.2, 0.2).unwrap(), 0.0);
}
