//! Variable importance for oblique forests.
//!
//! Negation importance flips the sign of every coefficient attached to one
//! predictor and measures the drop in out-of-bag concordance. The flip is
//! applied while routing rows, so the trained forest is never mutated.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::{with_threads, Forest};
use crate::metrics::harrell_c;
use crate::survdata::SurvivalDataset;

/// p-value at or below which a node coefficient counts as significant.
pub const ANOVA_PVALUE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VITechnique {
    Negation,
    Permutation,
    Anova,
}

impl VITechnique {
    pub fn as_str(self) -> &'static str {
        match self {
            VITechnique::Negation => "negation",
            VITechnique::Permutation => "permutation",
            VITechnique::Anova => "anova",
        }
    }
}

impl fmt::Display for VITechnique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VITechnique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negation" | "negate" => Ok(VITechnique::Negation),
            "permutation" | "permute" => Ok(VITechnique::Permutation),
            "anova" => Ok(VITechnique::Anova),
            other => Err(Error::InvalidParam(format!("unknown importance technique `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VIReport {
    pub technique: VITechnique,
    pub col_names: Vec<String>,
    pub values: Vec<f64>,
    /// Out-of-bag metric of the unmodified forest (negation, permutation).
    pub baseline_metric: Option<f64>,
    /// Permutation seed.
    pub seed: Option<u64>,
}

/// Out-of-bag accuracy metric: `(time, status, risk) -> score`, higher is better.
pub type OobMetric = dyn Fn(&[f64], &[bool], &[f64]) -> Result<f64> + Sync;

fn default_metric(time: &[f64], status: &[bool], risk: &[f64]) -> Result<f64> {
    harrell_c(time, status, risk)
}

/// Metric over the rows with at least one out-of-bag tree.
fn oob_score(ds: &SurvivalDataset, mortality: &[f64], counts: &[usize], metric: &OobMetric) -> Result<f64> {
    let rows: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    if rows.is_empty() {
        return Err(Error::NoOob);
    }
    let time: Vec<f64> = rows.iter().map(|&i| ds.time()[i]).collect();
    let status: Vec<bool> = rows.iter().map(|&i| ds.status()[i]).collect();
    let risk: Vec<f64> = rows.iter().map(|&i| mortality[i]).collect();
    metric(&time, &status, &risk)
}

pub fn negation_vi(forest: &Forest, ds: &SurvivalDataset) -> Result<VIReport> {
    negation_vi_with(forest, ds, &default_metric)
}

/// Negation importance with a caller-supplied out-of-bag metric.
pub fn negation_vi_with(forest: &Forest, ds: &SurvivalDataset, metric: &OobMetric) -> Result<VIReport> {
    check_alignment(forest, ds)?;
    let (base_mort, counts) = forest.oob_mortality(ds.x().view(), None)?;
    let baseline = oob_score(ds, &base_mort, &counts, metric)?;
    let p = forest.n_cols();
    let values = (0..p)
        .map(|j| {
            if !forest.trees().iter().any(|t| t.uses_column(j)) {
                return Ok(0.0);
            }
            let (mort, counts) = forest.oob_mortality(ds.x().view(), Some(j))?;
            Ok(baseline - oob_score(ds, &mort, &counts, metric)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VIReport {
        technique: VITechnique::Negation,
        col_names: forest.col_names().to_vec(),
        values,
        baseline_metric: Some(baseline),
        seed: None,
    })
}

/// Permutation importance: one (or `n_repeats`) random permutations of each
/// column, averaged. Predictor `j` uses its own stream of `seed`.
pub fn permutation_vi(forest: &Forest, ds: &SurvivalDataset, seed: u64, n_repeats: usize) -> Result<VIReport> {
    permutation_vi_with(forest, ds, seed, n_repeats, &default_metric)
}

pub fn permutation_vi_with(
    forest: &Forest,
    ds: &SurvivalDataset,
    seed: u64,
    n_repeats: usize,
    metric: &OobMetric,
) -> Result<VIReport> {
    check_alignment(forest, ds)?;
    if n_repeats == 0 {
        return Err(Error::InvalidParam("n_repeats must be ≥ 1".into()));
    }
    let (base_mort, counts) = forest.oob_mortality(ds.x().view(), None)?;
    let baseline = oob_score(ds, &base_mort, &counts, metric)?;
    let p = forest.n_cols();
    let mut x: Array2<f64> = ds.x().clone();
    let mut values = Vec::with_capacity(p);
    for j in 0..p {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let original = ds.x().column(j).to_vec();
        let mut total = 0.0;
        for _ in 0..n_repeats {
            let mut shuffled = original.clone();
            shuffled.shuffle(&mut rng);
            x.column_mut(j).iter_mut().zip(&shuffled).for_each(|(d, &s)| *d = s);
            let (mort, counts) = forest.oob_mortality(x.view(), None)?;
            total += baseline - oob_score(ds, &mort, &counts, metric)?;
        }
        x.column_mut(j).iter_mut().zip(&original).for_each(|(d, &s)| *d = s);
        values.push(total / n_repeats as f64);
    }
    Ok(VIReport {
        technique: VITechnique::Permutation,
        col_names: forest.col_names().to_vec(),
        values,
        baseline_metric: Some(baseline),
        seed: Some(seed),
    })
}

/// Per-predictor `(significant, total)` occurrence counts over every node
/// coefficient in the forest.
pub fn anova_counts(forest: &Forest) -> Result<Vec<(u64, u64)>> {
    let mut counts = vec![(0u64, 0u64); forest.n_cols()];
    for tree in forest.trees() {
        for (combo, pvalues) in tree.combos() {
            let pvalues = pvalues.ok_or(Error::NoPValues)?;
            for (&col, &pv) in combo.cols.iter().zip(pvalues) {
                counts[col].1 += 1;
                if pv <= ANOVA_PVALUE_THRESHOLD {
                    counts[col].0 += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Fraction of each predictor's node coefficients with p ≤ 0.01; zero for
/// predictors never selected.
pub fn anova_vi(forest: &Forest) -> Result<VIReport> {
    let values = anova_counts(forest)?
        .into_iter()
        .map(|(sig, total)| if total == 0 { 0.0 } else { sig as f64 / total as f64 })
        .collect();
    Ok(anova_report(forest, values))
}

/// Raw number of significant node coefficients per predictor.
pub fn anova_vi_raw(forest: &Forest) -> Result<VIReport> {
    let values = anova_counts(forest)?.into_iter().map(|(sig, _)| sig as f64).collect();
    Ok(anova_report(forest, values))
}

fn anova_report(forest: &Forest, values: Vec<f64>) -> VIReport {
    VIReport {
        technique: VITechnique::Anova,
        col_names: forest.col_names().to_vec(),
        values,
        baseline_metric: None,
        seed: None,
    }
}

/// Runs one technique with the default metric, using the forest's thread setting.
pub fn compute_vi(forest: &Forest, ds: &SurvivalDataset, technique: VITechnique, seed: u64) -> Result<VIReport> {
    match technique {
        VITechnique::Negation => negation_vi(forest, ds),
        VITechnique::Permutation => permutation_vi(forest, ds, seed, 1),
        VITechnique::Anova => anova_vi(forest),
    }
}

/// Probability that a relevant predictor has higher importance than an
/// irrelevant one; ties count one half.
pub fn vi_discrimination(vi_values: &[f64], relevance: &[bool]) -> Result<f64> {
    if vi_values.len() != relevance.len() {
        return Err(Error::DimensionMismatch("importance and relevance lengths differ".into()));
    }
    let n_rel = relevance.iter().filter(|&&r| r).count();
    let n_irr = relevance.len() - n_rel;
    if n_rel == 0 || n_irr == 0 {
        return Err(Error::SingleClass);
    }
    // Mann–Whitney: sum of mid-ranks of the relevant group
    let mut idx: Vec<usize> = (0..vi_values.len()).collect();
    idx.sort_by(|&a, &b| vi_values[a].total_cmp(&vi_values[b]));
    let mut rank_sum_twice: u64 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end < idx.len() && vi_values[idx[end]] == vi_values[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, mid-rank doubled = start + 1 + end
        let mid_twice = (start + 1 + end) as u64;
        let rel_in_tie = idx[start..end].iter().filter(|&&i| relevance[i]).count() as u64;
        rank_sum_twice += mid_twice * rel_in_tie;
        start = end;
    }
    let n_rel = n_rel as u64;
    let u_twice = rank_sum_twice - n_rel * (n_rel + 1);
    Ok(u_twice as f64 / (2 * n_rel * n_irr as u64) as f64)
}

fn check_alignment(forest: &Forest, ds: &SurvivalDataset) -> Result<()> {
    if ds.col_names() != forest.col_names() || ds.n_rows() != forest.train_summary().n_obs {
        return Err(Error::DimensionMismatch(
            "dataset does not match the forest's training data".into(),
        ));
    }
    Ok(())
}

/// Negation and permutation evaluations for many predictors, spread across
/// the forest's worker pool.
pub fn compute_vi_threads(
    forest: &Forest,
    ds: &SurvivalDataset,
    technique: VITechnique,
    seed: u64,
    n_threads: usize,
) -> Result<VIReport> {
    with_threads(n_threads, || compute_vi(forest, ds, technique, seed))?
}
