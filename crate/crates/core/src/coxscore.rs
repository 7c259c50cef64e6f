//! Newton–Raphson scoring of the weighted Cox partial likelihood.
//!
//! Tied event times use the Breslow approximation. With a starting point of
//! zero the linear predictor is identically zero, so the first update needs
//! no exponentiation and no predictor scaling; [`newton_raphson_step`] takes
//! that shortcut. [`newton_raphson_fit`] iterates to convergence on centred
//! and scaled columns, with step halving, and maps the estimates back.

use ndarray::{Array2, ArrayView2};
use libm::erfc;

use crate::error::{Error, Result};
use crate::survdata::survival_order;

/// Pivots below this fraction of the largest diagonal element of the
/// information matrix are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const MAX_HALVINGS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxStepResult {
    pub beta: Vec<f64>,
    /// Score vector at `beta_init` for a single step, at `beta` for an
    /// iterated fit.
    pub score: Vec<f64>,
    /// Observed information (negative Hessian of the log partial
    /// likelihood), evaluated at the same point as `score`.
    pub hessian: Array2<f64>,
    /// `sqrt(diag(H^-1))`; infinite for columns dropped as collinear.
    pub std_err: Vec<f64>,
    /// Two-sided Wald p-values of `beta / std_err`.
    pub pvalues: Vec<f64>,
    pub n_iter: usize,
    /// Log partial likelihood at the same point as `score`.
    pub loglik: f64,
}

/// One Newton–Raphson update from `beta_init`.
pub fn newton_raphson_step(
    x: ArrayView2<'_, f64>,
    time: &[f64],
    status: &[bool],
    weights: &[u32],
    beta_init: &[f64],
) -> Result<CoxStepResult> {
    let prepared = Prepared::new(x, time, status, weights)?;
    if beta_init.len() != prepared.k {
        return Err(Error::DimensionMismatch(format!(
            "beta_init has length {}, expected {}",
            beta_init.len(),
            prepared.k
        )));
    }
    prepared.view().step(beta_init)
}

/// Newton–Raphson iterated until the relative change in log partial
/// likelihood drops below `epsilon` or `max_iter` updates have been made.
pub fn newton_raphson_fit(
    x: ArrayView2<'_, f64>,
    time: &[f64],
    status: &[bool],
    weights: &[u32],
    max_iter: usize,
    epsilon: f64,
) -> Result<CoxStepResult> {
    if max_iter == 0 {
        return Err(Error::InvalidParam("max_iter must be ≥ 1".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParam("epsilon must be > 0".into()));
    }
    let prepared = Prepared::new(x, time, status, weights)?;
    prepared.view().fit(max_iter, epsilon)
}

/// Breslow log partial likelihood at `beta`.
pub fn log_partial_likelihood(
    x: ArrayView2<'_, f64>,
    time: &[f64],
    status: &[bool],
    weights: &[u32],
    beta: &[f64],
) -> Result<f64> {
    let prepared = Prepared::new(x, time, status, weights)?;
    Ok(prepared.view().derivatives(beta, false).loglik)
}

/// Two-sided p-value of a standard normal statistic.
pub fn wald_pvalue(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Row-major copy of the inputs in survival order.
struct Prepared {
    x: Vec<f64>,
    k: usize,
    time: Vec<f64>,
    status: Vec<bool>,
    weights: Vec<f64>,
}

impl Prepared {
    fn new(x: ArrayView2<'_, f64>, time: &[f64], status: &[bool], weights: &[u32]) -> Result<Self> {
        let (m, k) = x.dim();
        if time.len() != m || status.len() != m || weights.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} rows but time/status/weights have lengths {}/{}/{}",
                time.len(),
                status.len(),
                weights.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidParam("at least one predictor column is required".into()));
        }
        let order = survival_order(time, status);
        let mut xs = Vec::with_capacity(m * k);
        for &i in &order {
            xs.extend(x.row(i).iter());
        }
        Ok(Self {
            x: xs,
            k,
            time: order.iter().map(|&i| time[i]).collect(),
            status: order.iter().map(|&i| status[i]).collect(),
            weights: order.iter().map(|&i| f64::from(weights[i])).collect(),
        })
    }

    fn view(&self) -> CoxData<'_> {
        CoxData {
            x: &self.x,
            k: self.k,
            time: &self.time,
            status: &self.status,
            weights: &self.weights,
        }
    }
}

/// Borrowed Cox problem whose rows are already in survival order
/// (ascending time, events before censorings at ties).
#[derive(Clone, Copy)]
pub(crate) struct CoxData<'a> {
    pub x: &'a [f64],
    pub k: usize,
    pub time: &'a [f64],
    pub status: &'a [bool],
    pub weights: &'a [f64],
}

pub(crate) struct Derivatives {
    pub loglik: f64,
    pub score: Vec<f64>,
    /// Row-major `k × k`, only filled when requested.
    pub info: Vec<f64>,
    pub weighted_events: f64,
}

impl<'a> CoxData<'a> {
    fn n_rows(&self) -> usize {
        self.time.len()
    }

    /// Log partial likelihood, score and (optionally) information at `beta`.
    pub fn derivatives(&self, beta: &[f64], with_info: bool) -> Derivatives {
        let k = self.k;
        let zero_beta = beta.iter().all(|&b| b == 0.0);
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; if with_info { k * k } else { 0 }];
        let mut s0 = 0.0;
        let mut score = vec![0.0; k];
        let mut info = vec![0.0; if with_info { k * k } else { 0 }];
        let mut loglik = 0.0;
        let mut weighted_events = 0.0;
        let mut event_x = vec![0.0; k];

        let mut end = self.n_rows();
        while end > 0 {
            let t = self.time[end - 1];
            let mut start = end - 1;
            while start > 0 && self.time[start - 1] == t {
                start -= 1;
            }
            let mut d = 0.0;
            event_x.iter_mut().for_each(|v| *v = 0.0);
            for i in start..end {
                let w = self.weights[i];
                if w == 0.0 {
                    continue;
                }
                let xi = &self.x[i * k..(i + 1) * k];
                let (eta, risk) = if zero_beta {
                    (0.0, w)
                } else {
                    let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
                    (eta, w * eta.exp())
                };
                s0 += risk;
                for a in 0..k {
                    let rx = risk * xi[a];
                    s1[a] += rx;
                    if with_info {
                        for b in 0..=a {
                            s2[a * k + b] += rx * xi[b];
                        }
                    }
                }
                if self.status[i] {
                    d += w;
                    loglik += w * eta;
                    for a in 0..k {
                        event_x[a] += w * xi[a];
                    }
                }
            }
            if d > 0.0 {
                weighted_events += d;
                loglik -= d * s0.ln();
                for a in 0..k {
                    let xbar_a = s1[a] / s0;
                    score[a] += event_x[a] - d * xbar_a;
                    if with_info {
                        for b in 0..=a {
                            let xbar_b = s1[b] / s0;
                            info[a * k + b] += d * (s2[a * k + b] / s0 - xbar_a * xbar_b);
                        }
                    }
                }
            }
            end = start;
        }
        if with_info {
            for a in 0..k {
                for b in 0..a {
                    info[b * k + a] = info[a * k + b];
                }
            }
        }
        Derivatives {
            loglik,
            score,
            info,
            weighted_events,
        }
    }

    pub fn step(&self, beta_init: &[f64]) -> Result<CoxStepResult> {
        let d = self.derivatives(beta_init, true);
        if d.weighted_events <= 0.0 {
            return Err(Error::NoEvents);
        }
        let ldl = Ldl::factor(&d.info, self.k, PIVOT_TOLERANCE);
        if ldl.rank == 0 {
            return Err(Error::Collinear);
        }
        let delta = ldl.solve(&d.score);
        let beta: Vec<f64> = beta_init.iter().zip(&delta).map(|(b, s)| b + s).collect();
        Ok(finish(beta, d, &ldl, self.k, 1))
    }

    pub fn fit(&self, max_iter: usize, epsilon: f64) -> Result<CoxStepResult> {
        if max_iter == 1 {
            return self.step(&vec![0.0; self.k]);
        }
        let scaling = Scaling::new(self);
        let scaled_x = scaling.apply(self);
        let scaled = CoxData {
            x: &scaled_x,
            ..*self
        };
        let result = scaled.iterate(max_iter, epsilon)?;
        Ok(scaling.unscale(result))
    }

    fn iterate(&self, max_iter: usize, epsilon: f64) -> Result<CoxStepResult> {
        let k = self.k;
        let mut beta = vec![0.0; k];
        let mut current = self.derivatives(&beta, true);
        if current.weighted_events <= 0.0 {
            return Err(Error::NoEvents);
        }
        let mut ldl = Ldl::factor(&current.info, k, PIVOT_TOLERANCE);
        if ldl.rank == 0 {
            return Err(Error::Collinear);
        }
        let mut iter = 0;
        loop {
            let mut delta = ldl.solve(&current.score);
            iter += 1;
            let mut candidate: Vec<f64> = beta.iter().zip(&delta).map(|(b, s)| b + s).collect();
            let mut next = self.derivatives(&candidate, true);
            let mut halvings = 0;
            while !(next.loglik.is_finite() && next.loglik >= current.loglik) && halvings < MAX_HALVINGS {
                delta.iter_mut().for_each(|s| *s *= 0.5);
                candidate = beta.iter().zip(&delta).map(|(b, s)| b + s).collect();
                next = self.derivatives(&candidate, true);
                halvings += 1;
            }
            if !next.loglik.is_finite() {
                return Err(Error::Diverged);
            }
            if next.loglik < current.loglik {
                // no ascent direction left; keep the last accepted point
                return Ok(finish(beta, current, &ldl, k, iter));
            }

            let converged = (next.loglik - current.loglik).abs() < epsilon * current.loglik.abs();
            beta = candidate;
            current = next;
            ldl = Ldl::factor(&current.info, k, PIVOT_TOLERANCE);
            if ldl.rank == 0 {
                return Err(Error::Collinear);
            }
            if converged || iter >= max_iter {
                return Ok(finish(beta, current, &ldl, k, iter));
            }
        }
    }
}

fn finish(beta: Vec<f64>, d: Derivatives, ldl: &Ldl, k: usize, n_iter: usize) -> CoxStepResult {
    let var_diag = ldl.inverse_diagonal();
    let mut beta = beta;
    let mut std_err = Vec::with_capacity(k);
    let mut pvalues = Vec::with_capacity(k);
    for j in 0..k {
        if ldl.dropped[j] {
            beta[j] = 0.0;
            std_err.push(f64::INFINITY);
            pvalues.push(1.0);
        } else {
            let se = var_diag[j].sqrt();
            std_err.push(se);
            pvalues.push(wald_pvalue(beta[j] / se));
        }
    }
    CoxStepResult {
        beta,
        score: d.score,
        hessian: Array2::from_shape_vec((k, k), d.info).expect("k × k information matrix"),
        std_err,
        pvalues,
        n_iter,
        loglik: d.loglik,
    }
}

/// Weighted centring and scaling of predictor columns.
struct Scaling {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaling {
    fn new(data: &CoxData<'_>) -> Self {
        let k = data.k;
        let total: f64 = data.weights.iter().sum();
        let mut mean = vec![0.0; k];
        for (row, &w) in data.x.chunks_exact(k).zip(data.weights) {
            for j in 0..k {
                mean[j] += w * row[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; k];
        for (row, &w) in data.x.chunks_exact(k).zip(data.weights) {
            for j in 0..k {
                var[j] += w * (row[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / total).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, data: &CoxData<'_>) -> Vec<f64> {
        let k = data.k;
        let mut out = data.x.to_vec();
        for row in out.chunks_exact_mut(k) {
            for j in 0..k {
                row[j] = (row[j] - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    fn unscale(&self, mut r: CoxStepResult) -> CoxStepResult {
        let k = self.scale.len();
        for j in 0..k {
            let s = self.scale[j];
            r.beta[j] /= s;
            r.score[j] *= s;
            r.std_err[j] /= s;
            for i in 0..k {
                r.hessian[[i, j]] *= s * self.scale[i];
            }
        }
        r
    }
}

/// `L D Lᵀ` factorization of a symmetric positive semi-definite matrix.
/// Columns whose pivot falls below tolerance are dropped: their solution
/// components are zero.
pub(crate) struct Ldl {
    /// Unit lower factor below the diagonal, `D` on the diagonal.
    a: Vec<f64>,
    k: usize,
    pub dropped: Vec<bool>,
    pub rank: usize,
}

impl Ldl {
    pub fn factor(m: &[f64], k: usize, tol: f64) -> Self {
        let mut a = m.to_vec();
        let max_diag = (0..k).map(|i| a[i * k + i]).fold(0.0_f64, f64::max);
        let eps = if max_diag > 0.0 { max_diag * tol } else { tol };
        let mut dropped = vec![false; k];
        let mut rank = 0;
        for i in 0..k {
            let pivot = a[i * k + i];
            if !pivot.is_finite() || pivot < eps {
                a[i * k + i] = 0.0;
                dropped[i] = true;
                continue;
            }
            rank += 1;
            for j in (i + 1)..k {
                let temp = a[j * k + i] / pivot;
                a[j * k + j] -= temp * a[j * k + i];
                for r in (j + 1)..k {
                    a[r * k + j] -= temp * a[r * k + i];
                }
                a[j * k + i] = temp;
            }
        }
        Self { a, k, dropped, rank }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.k;
        let a = &self.a;
        let mut y = rhs.to_vec();
        for i in 0..k {
            if self.dropped[i] {
                continue;
            }
            let mut temp = y[i];
            for j in 0..i {
                if !self.dropped[j] {
                    temp -= y[j] * a[i * k + j];
                }
            }
            y[i] = temp;
        }
        for i in (0..k).rev() {
            if self.dropped[i] {
                y[i] = 0.0;
                continue;
            }
            let mut temp = y[i] / a[i * k + i];
            for j in (i + 1)..k {
                temp -= y[j] * a[j * k + i];
            }
            y[i] = temp;
        }
        y
    }

    /// Diagonal of the (generalized) inverse.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.k];
        (0..self.k)
            .map(|j| {
                if self.dropped[j] {
                    return f64::INFINITY;
                }
                e.iter_mut().for_each(|v| *v = 0.0);
                e[j] = 1.0;
                self.solve(&e)[j]
            })
            .collect()
    }
}
