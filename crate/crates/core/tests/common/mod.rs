//! Independent reference implementations used by the integration tests.
//! Everything here is written from the definitions, quadratic or worse in
//! cost, and shares no code with the library.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random survival problem with integer-valued times (forcing ties)
/// and at least one weighted event.
pub struct Problem {
    pub x: Array2<f64>,
    pub time: Vec<f64>,
    pub status: Vec<bool>,
    pub weights: Vec<u32>,
}

pub fn random_problem(seed: u64, max_n: usize, max_k: usize) -> Problem {
    let mut r = rng(seed);
    loop {
        let n = r.random_range(3..=max_n);
        let k = r.random_range(1..=max_k);
        let x = Array2::from_shape_fn((n, k), |_| r.random_range(-2.0..2.0));
        let time: Vec<f64> = (0..n)
            .map(|_| r.random_range(1..=(n as u32)) as f64)
            .collect();
        let status: Vec<bool> = (0..n).map(|_| r.random_bool(0.7)).collect();
        let weights: Vec<u32> = (0..n).map(|_| r.random_range(0..=3)).collect();
        let events = (0..n).filter(|&i| status[i] && weights[i] > 0).count();
        let used = weights.iter().filter(|&&w| w > 0).count();
        if events >= 1 && used >= 2 {
            return Problem {
                x,
                time,
                status,
                weights,
            };
        }
    }
}

/// Breslow log partial likelihood straight from the definition: for each
/// event, its weighted linear predictor minus log of the weighted risk-set
/// sum over everyone with `T_j >= T_i`.
pub fn loglik(p: &Problem, beta: &[f64]) -> f64 {
    let n = p.time.len();
    let eta: Vec<f64> = (0..n)
        .map(|i| (0..beta.len()).map(|j| p.x[[i, j]] * beta[j]).sum())
        .collect();
    let mut l = 0.0;
    for i in 0..n {
        if !p.status[i] || p.weights[i] == 0 {
            continue;
        }
        let risk: f64 = (0..n)
            .filter(|&j| p.time[j] >= p.time[i])
            .map(|j| p.weights[j] as f64 * eta[j].exp())
            .sum();
        l += p.weights[i] as f64 * (eta[i] - risk.ln());
    }
    l
}

/// Central-difference gradient with one Richardson refinement.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let d = |h: f64, j: usize| {
        let mut a = at.to_vec();
        let mut b = at.to_vec();
        a[j] += h;
        b[j] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    };
    (0..at.len())
        .map(|j| (4.0 * d(h / 2.0, j) - d(h, j)) / 3.0)
        .collect()
}

/// Central-difference Hessian with one Richardson refinement.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<Vec<f64>> {
    let k = at.len();
    let d = |h: f64, a: usize, b: usize| {
        let eval = |sa: f64, sb: f64| {
            let mut p = at.to_vec();
            p[a] += sa;
            p[b] += sb;
            f(&p)
        };
        if a == b {
            (eval(h, 0.0) - 2.0 * f(at) + eval(-h, 0.0)) / (h * h)
        } else {
            (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h)
        }
    };
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| (4.0 * d(h / 2.0, a, b) - d(h, a, b)) / 3.0)
                .collect()
        })
        .collect()
}

/// Harrell's C over all ordered pairs: `i` usable against `j` when `i` has
/// an event and `T_i < T_j`, or `T_i == T_j` with `j` censored.
pub fn brute_harrell(time: &[f64], status: &[bool], risk: &[f64]) -> Option<f64> {
    let n = time.len();
    let (mut num, mut den) = (0.0, 0u64);
    for i in 0..n {
        for j in 0..n {
            if i == j || !status[i] {
                continue;
            }
            let usable = time[i] < time[j] || (time[i] == time[j] && !status[j]);
            if !usable {
                continue;
            }
            den += 1;
            if risk[i] > risk[j] {
                num += 1.0;
            } else if risk[i] == risk[j] {
                num += 0.5;
            }
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Time-dependent C without censoring: cases `T_i <= t`, controls `T_j > t`.
pub fn brute_td_c(risk: &[f64], time: &[f64], t: f64) -> Option<f64> {
    let n = time.len();
    let (mut num, mut den) = (0.0, 0u64);
    for i in (0..n).filter(|&i| time[i] <= t) {
        for j in (0..n).filter(|&j| time[j] > t) {
            den += 1;
            if risk[i] > risk[j] {
                num += 1.0;
            } else if risk[i] == risk[j] {
                num += 0.5;
            }
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Fraction of (relevant, irrelevant) pairs ranked correctly, ties one half.
pub fn brute_vi_discrimination(values: &[f64], relevance: &[bool]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0u64);
    for (a, &ra) in relevance.iter().enumerate() {
        for (b, &rb) in relevance.iter().enumerate() {
            if !ra || rb {
                continue;
            }
            den += 1;
            if values[a] > values[b] {
                num += 1.0;
            } else if values[a] == values[b] {
                num += 0.5;
            }
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Two-group log-rank chi-square from per-time tables, unit weights
/// expanded by repetition.
pub fn brute_logrank(time: &[f64], status: &[bool], left: &[bool]) -> f64 {
    let mut times: Vec<f64> = time
        .iter()
        .zip(status)
        .filter(|(_, &s)| s)
        .map(|(&t, _)| t)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let (mut o_minus_e, mut var) = (0.0, 0.0);
    for &t in &times {
        let at_risk: Vec<usize> = (0..time.len()).filter(|&i| time[i] >= t).collect();
        let n = at_risk.len() as f64;
        let n1 = at_risk.iter().filter(|&&i| left[i]).count() as f64;
        let d = at_risk
            .iter()
            .filter(|&&i| time[i] == t && status[i])
            .count() as f64;
        let d1 = at_risk
            .iter()
            .filter(|&&i| time[i] == t && status[i] && left[i])
            .count() as f64;
        o_minus_e += d1 - d * n1 / n;
        if n > 1.0 {
            var += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
        }
    }
    o_minus_e * o_minus_e / var
}

/// Product-limit estimate from the definition, evaluated at `t`.
pub fn brute_km(time: &[f64], status: &[bool], t: f64) -> f64 {
    let mut times: Vec<f64> = time
        .iter()
        .zip(status)
        .filter(|(&u, &s)| s && u <= t)
        .map(|(&u, _)| u)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&u| {
            let n = time.iter().filter(|&&v| v >= u).count() as f64;
            let d = time
                .iter()
                .zip(status)
                .filter(|(&v, &s)| v == u && s)
                .count() as f64;
            1.0 - d / n
        })
        .product()
}
