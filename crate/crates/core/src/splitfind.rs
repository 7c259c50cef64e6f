//! Log-rank evaluation of cutpoints on a linear predictor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survdata::survival_order;

/// Sparse linear combination of predictors used by an internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCombo {
    pub cols: Vec<usize>,
    pub coefs: Vec<f64>,
}

impl LinearCombo {
    /// Linear predictor for a full row of predictor values.
    #[inline]
    pub fn eta(&self, row: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(&self.coefs)
            .map(|(&c, &b)| b * row[c])
            .sum()
    }

    /// Linear predictor with the coefficient on `negated` sign-flipped.
    #[inline]
    pub fn eta_negated(&self, row: &[f64], negated: usize) -> f64 {
        self.cols
            .iter()
            .zip(&self.coefs)
            .map(|(&c, &b)| if c == negated { -b * row[c] } else { b * row[c] })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub cutpoint: f64,
    pub stat: f64,
}

/// Squared standardized two-sample log-rank statistic comparing
/// `eta <= cutpoint` against `eta > cutpoint`. Integer weights act as
/// row multiplicities.
pub fn logrank_stat(
    eta: &[f64],
    time: &[f64],
    status: &[bool],
    weights: &[u32],
    cutpoint: f64,
) -> Result<f64> {
    check_lengths(eta, time, status, weights)?;
    let order = survival_order(time, status);
    let left: Vec<bool> = order.iter().map(|&i| eta[i] <= cutpoint).collect();
    let time: Vec<f64> = order.iter().map(|&i| time[i]).collect();
    let status: Vec<bool> = order.iter().map(|&i| status[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| f64::from(weights[i])).collect();

    let (n_left, n_right) = left
        .iter()
        .zip(&w)
        .fold((0.0, 0.0), |(l, r), (&g, &wi)| if g { (l + wi, r) } else { (l, r + wi) });
    if n_left < 1.0 || n_right < 1.0 {
        return Err(Error::DegenerateCutpoint(cutpoint));
    }
    Ok(logrank_sorted(&left, &time, &status, &w))
}

/// Log-rank statistic for rows already in survival order.
pub(crate) fn logrank_sorted(left: &[bool], time: &[f64], status: &[bool], w: &[f64]) -> f64 {
    let mut n = 0.0;
    let mut n1 = 0.0;
    let mut o_minus_e = 0.0;
    let mut var = 0.0;
    let mut end = time.len();
    while end > 0 {
        let t = time[end - 1];
        let mut start = end - 1;
        while start > 0 && time[start - 1] == t {
            start -= 1;
        }
        let mut d = 0.0;
        let mut d1 = 0.0;
        for i in start..end {
            let wi = w[i];
            n += wi;
            if left[i] {
                n1 += wi;
            }
            if status[i] {
                d += wi;
                if left[i] {
                    d1 += wi;
                }
            }
        }
        if d > 0.0 {
            let frac = n1 / n;
            o_minus_e += d1 - d * frac;
            if n > 1.0 {
                var += d * frac * (1.0 - frac) * (n - d) / (n - 1.0);
            }
        }
        end = start;
    }
    if var > 0.0 {
        o_minus_e * o_minus_e / var
    } else {
        0.0
    }
}

/// Draws up to `n_split` distinct cutpoints uniformly from the unique values
/// of `eta` that leave at least `min_obs` weighted observations and
/// `min_events` weighted events on both sides. Returned in ascending order.
pub fn sample_cutpoints<R: Rng + ?Sized>(
    eta: &[f64],
    weights: &[u32],
    status: &[bool],
    n_split: usize,
    min_obs: usize,
    min_events: usize,
    rng: &mut R,
) -> Vec<f64> {
    let w: Vec<f64> = weights.iter().map(|&v| f64::from(v)).collect();
    sample_cutpoints_f64(eta, &w, status, n_split, min_obs as f64, min_events as f64, rng)
}

pub(crate) fn valid_cutpoints(
    eta: &[f64],
    w: &[f64],
    status: &[bool],
    min_obs: f64,
    min_events: f64,
) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..eta.len()).filter(|&i| w[i] > 0.0).collect();
    idx.sort_by(|&a, &b| eta[a].total_cmp(&eta[b]));
    let total_obs: f64 = idx.iter().map(|&i| w[i]).sum();
    let total_events: f64 = idx.iter().filter(|&&i| status[i]).map(|&i| w[i]).sum();

    let mut valid = Vec::new();
    let mut left_obs = 0.0;
    let mut left_events = 0.0;
    let mut pos = 0;
    while pos < idx.len() {
        let value = eta[idx[pos]];
        while pos < idx.len() && eta[idx[pos]] == value {
            let i = idx[pos];
            left_obs += w[i];
            if status[i] {
                left_events += w[i];
            }
            pos += 1;
        }
        if left_obs >= min_obs
            && left_events >= min_events
            && total_obs - left_obs >= min_obs
            && total_events - left_events >= min_events
        {
            valid.push(value);
        }
    }
    valid
}

pub(crate) fn sample_cutpoints_f64<R: Rng + ?Sized>(
    eta: &[f64],
    w: &[f64],
    status: &[bool],
    n_split: usize,
    min_obs: f64,
    min_events: f64,
    rng: &mut R,
) -> Vec<f64> {
    let valid = valid_cutpoints(eta, w, status, min_obs, min_events);
    if valid.len() <= n_split {
        return valid;
    }
    let mut picked: Vec<f64> = rand::seq::index::sample(rng, valid.len(), n_split)
        .into_iter()
        .map(|i| valid[i])
        .collect();
    picked.sort_by(f64::total_cmp);
    picked
}

/// Candidate with the largest log-rank statistic; ties go to the smallest
/// cutpoint.
pub fn best_cutpoint(
    eta: &[f64],
    time: &[f64],
    status: &[bool],
    weights: &[u32],
    candidates: &[f64],
) -> Result<SplitCandidate> {
    let scored = candidates
        .iter()
        .map(|&c| {
            logrank_stat(eta, time, status, weights, c).map(|stat| SplitCandidate { cutpoint: c, stat })
        })
        .collect::<Result<Vec<_>>>()?;
    pick_best(&scored).ok_or(Error::EmptyCandidates)
}

pub(crate) fn pick_best(scored: &[SplitCandidate]) -> Option<SplitCandidate> {
    scored.iter().copied().fold(None, |best, c| match best {
        None => Some(c),
        Some(b) if c.stat > b.stat || (c.stat == b.stat && c.cutpoint < b.cutpoint) => Some(c),
        keep => keep,
    })
}

fn check_lengths(eta: &[f64], time: &[f64], status: &[bool], weights: &[u32]) -> Result<()> {
    let n = eta.len();
    if time.len() != n || status.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "eta has {n} values but time/status/weights have {}/{}/{}",
            time.len(),
            status.len(),
            weights.len()
        )));
    }
    Ok(())
}
