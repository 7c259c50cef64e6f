//! Simulated right-censored data with five predictor classes.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survdata::SurvivalDataset;

pub const WEIBULL_SHAPE: f64 = 1.5;
const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableClass {
    Irrelevant,
    Main,
    Nonlinear,
    CombinationSource,
    Interaction,
}

impl VariableClass {
    pub const ALL: [VariableClass; 5] = [
        VariableClass::Irrelevant,
        VariableClass::Main,
        VariableClass::Nonlinear,
        VariableClass::CombinationSource,
        VariableClass::Interaction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariableClass::Irrelevant => "irrelevant",
            VariableClass::Main => "main",
            VariableClass::Nonlinear => "nonlinear",
            VariableClass::CombinationSource => "combination_source",
            VariableClass::Interaction => "interaction",
        }
    }

    pub fn is_relevant(self) -> bool {
        self != VariableClass::Irrelevant
    }

    /// Column name prefix used for generated predictors.
    fn prefix(self) -> &'static str {
        match self {
            VariableClass::Irrelevant => "junk",
            VariableClass::Main => "main",
            VariableClass::Nonlinear => "nlin",
            VariableClass::CombinationSource => "comb",
            VariableClass::Interaction => "intr",
        }
    }
}

impl fmt::Display for VariableClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Smooth transform applied to non-linear predictors before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearMap {
    /// `x² − 1`; symmetric, so a sign flip leaves the effect unchanged.
    CenteredSquare,
    /// `x² + x`; non-monotone and asymmetric.
    SkewedSquare,
    /// `max(x, 0)²`; flat below zero, convex above.
    SquaredHinge,
    /// `exp(x)`; monotone and convex.
    Exp,
}

impl NonlinearMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            NonlinearMap::CenteredSquare => x * x - 1.0,
            NonlinearMap::SkewedSquare => x * x + x,
            NonlinearMap::SquaredHinge => x.max(0.0).powi(2),
            NonlinearMap::Exp => x.exp(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NonlinearMap::CenteredSquare => "centered_square",
            NonlinearMap::SkewedSquare => "skewed_square",
            NonlinearMap::SquaredHinge => "squared_hinge",
            NonlinearMap::Exp => "exp",
        }
    }
}

impl FromStr for NonlinearMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered_square" => Ok(NonlinearMap::CenteredSquare),
            "skewed_square" => Ok(NonlinearMap::SkewedSquare),
            "squared_hinge" => Ok(NonlinearMap::SquaredHinge),
            "exp" => Ok(NonlinearMap::Exp),
            other => Err(Error::InvalidParam(format!("unknown non-linear map `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub n_per_class: usize,
    pub max_corr: f64,
    pub hazard_ratio_per_sd: f64,
    pub target_censoring: f64,
    pub nonlinear_map: NonlinearMap,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            n_per_class: 15,
            max_corr: 0.0,
            hazard_ratio_per_sd: 1.64,
            target_censoring: 0.45,
            nonlinear_map: NonlinearMap::SkewedSquare,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn n_predictors(&self) -> usize {
        5 * self.n_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParam("n must be ≥ 1".into()));
        }
        if self.n_per_class == 0 {
            return Err(Error::InvalidParam("n_per_class must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.max_corr) {
            return Err(Error::InvalidParam("max_corr must be in [0, 1)".into()));
        }
        if !(self.hazard_ratio_per_sd > 0.0 && self.hazard_ratio_per_sd.is_finite()) {
            return Err(Error::InvalidParam("hazard_ratio_per_sd must be > 0".into()));
        }
        if !(self.target_censoring >= 0.01 && self.target_censoring < 1.0) {
            return Err(Error::InvalidParam("target_censoring must be in [0.01, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub ds: SurvivalDataset,
    pub relevance: Vec<bool>,
    pub class_labels: Vec<VariableClass>,
    /// For interaction predictors, the index of the partner predictor.
    pub partners: Vec<Option<usize>>,
}

impl SimData {
    pub fn censoring_fraction(&self) -> f64 {
        1.0 - self.ds.n_events() as f64 / self.ds.n_rows() as f64
    }

    /// Writes `name,class,relevance,partner` per predictor.
    pub fn write_relevance_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            if let Some(c) = comment {
                writeln!(out, "# {c}")?;
            }
            writeln!(out, "name,class,relevance,partner")?;
            for (j, name) in self.ds.col_names().iter().enumerate() {
                let partner = self.partners[j].map(|k| self.ds.col_names()[k].as_str()).unwrap_or("");
                writeln!(out, "{},{},{},{}", name, self.class_labels[j], u8::from(self.relevance[j]), partner)?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

/// Random correlation matrix with off-diagonals in `[−max_corr, max_corr]`,
/// projected onto the positive semi-definite cone.
pub fn gen_correlation_matrix<R: Rng + ?Sized>(p: usize, max_corr: f64, rng: &mut R) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&max_corr) {
        return Err(Error::InvalidParam("max_corr must be in [0, 1)".into()));
    }
    let mut c = Array2::<f64>::eye(p);
    if max_corr == 0.0 {
        return Ok(c);
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let r = rng.random_range(-max_corr..=max_corr);
            c[[i, j]] = r;
            c[[j, i]] = r;
        }
    }
    let m = DMatrix::from_fn(p, p, |i, j| c[[i, j]]);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().all(|&l| l >= EIGEN_FLOOR) {
        return Ok(c);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let psd = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let d: Vec<f64> = (0..p).map(|i| psd[(i, i)].sqrt()).collect();
    for i in 0..p {
        for j in (i + 1)..p {
            let r = 0.5 * (psd[(i, j)] + psd[(j, i)]) / (d[i] * d[j]);
            c[[i, j]] = r;
            c[[j, i]] = r;
        }
    }
    Ok(c)
}

/// Standard multivariate normal rows with the given correlation.
pub fn gen_predictors<R: Rng + ?Sized>(n: usize, corr: &Array2<f64>, rng: &mut R) -> Result<Array2<f64>> {
    let p = corr.nrows();
    if corr.ncols() != p {
        return Err(Error::DimensionMismatch("correlation matrix must be square".into()));
    }
    let m = DMatrix::from_fn(p, p, |i, j| corr[[i, j]]);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| !l.is_finite() || l < -1e-8) {
        return Err(Error::Factorization("correlation matrix is not positive semi-definite".into()));
    }
    let root_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&root_vals) * v.transpose();
    let mut x = Array2::<f64>::zeros((n, p));
    let mut z = vec![0.0; p];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(rng);
        }
        for j in 0..p {
            x[[i, j]] = (0..p).map(|k| root[(j, k)] * z[k]).sum();
        }
    }
    Ok(x)
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    for a in v.iter_mut() {
        *a = if sd > 0.0 { (*a - mean) / sd } else { 0.0 };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectMatrix {
    /// One column per hidden effect.
    pub effects: Array2<f64>,
    pub coefs: Vec<f64>,
    pub class_labels: Vec<VariableClass>,
    pub relevance: Vec<bool>,
    pub partners: Vec<Option<usize>>,
}

/// Predictor layout: `n_per_class` columns of each class in the order
/// irrelevant, main, nonlinear, combination source, interaction.
pub fn predictor_layout(n_per_class: usize) -> Vec<VariableClass> {
    VariableClass::ALL.iter().flat_map(|&c| std::iter::repeat_n(c, n_per_class)).collect()
}

/// Number of combination effects: sources are grouped in consecutive
/// triples, the last group taking any remainder.
pub fn n_combinations(n_per_class: usize) -> usize {
    n_per_class.div_ceil(3)
}

/// Hidden effect columns and their log-hazard coefficients.
///
/// `x_raw` must follow [`predictor_layout`]. Effects are ordered main,
/// nonlinear, combination, interaction; irrelevant predictors and
/// combination sources contribute no direct effect column.
pub fn build_effect_matrix(x_raw: &Array2<f64>, config: &SimConfig) -> Result<EffectMatrix> {
    let k = config.n_per_class;
    let labels = predictor_layout(k);
    if x_raw.ncols() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} raw predictor columns, found {}",
            labels.len(),
            x_raw.ncols()
        )));
    }
    let n = x_raw.nrows();
    let beta = config.hazard_ratio_per_sd.ln();
    let (main0, nlin0, comb0, intr0) = (k, 2 * k, 3 * k, 4 * k);
    let m = n_combinations(k);
    let (e_nlin, e_comb, e_intr) = (k, 2 * k, 2 * k + m);
    let mut effects = Array2::<f64>::zeros((n, 3 * k + m));
    for e in 0..k {
        effects.column_mut(e).assign(&x_raw.column(main0 + e));
        let mut g: Vec<f64> = x_raw.column(nlin0 + e).iter().map(|&v| config.nonlinear_map.apply(v)).collect();
        standardize(&mut g);
        effects.column_mut(e_nlin + e).assign(&ArrayView1::from(&g));
    }
    for c in 0..m {
        let sources = (comb0 + 3 * c)..(comb0 + (3 * c + 3).min(k));
        let width = sources.len() as f64;
        let mut v: Vec<f64> = (0..n).map(|i| sources.clone().map(|s| x_raw[[i, s]]).sum::<f64>() / width).collect();
        standardize(&mut v);
        effects.column_mut(e_comb + c).assign(&ArrayView1::from(&v));
    }
    let mut partners = vec![None; labels.len()];
    for e in 0..k {
        // partner cycles through main, nonlinear, combination
        let (partner_effect, partner_col) = match e % 3 {
            0 => (e, main0 + e),
            1 => (e_nlin + e, nlin0 + e),
            _ => {
                let c = (e / 3) % m;
                (e_comb + c, comb0 + 3 * c)
            }
        };
        partners[intr0 + e] = Some(partner_col);
        let mut prod: Vec<f64> = (0..n).map(|i| x_raw[[i, intr0 + e]] * effects[[i, partner_effect]]).collect();
        standardize(&mut prod);
        effects.column_mut(e_intr + e).assign(&ArrayView1::from(&prod));
    }
    Ok(EffectMatrix {
        coefs: vec![beta; effects.ncols()],
        effects,
        relevance: labels.iter().map(|c| c.is_relevant()).collect(),
        class_labels: labels,
        partners,
    })
}

/// Weibull proportional-hazards event times with exponential censoring
/// tuned to the target censored fraction.
pub fn gen_survival<R: Rng + ?Sized>(
    effects: &Array2<f64>,
    coefs: &[f64],
    target_censoring: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if effects.ncols() != coefs.len() {
        return Err(Error::DimensionMismatch("effect columns and coefficients differ".into()));
    }
    if coefs.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidParam("coefficients must be finite".into()));
    }
    if !(target_censoring >= 0.01 && target_censoring < 1.0) {
        return Err(Error::InvalidParam("target_censoring must be in [0.01, 1)".into()));
    }
    let n = effects.nrows();
    let lp: Vec<f64> = effects.axis_iter(Axis(0)).map(|r| r.iter().zip(coefs).map(|(x, b)| x * b).sum()).collect();
    let base: Vec<f64> = (0..n)
        .map(|i| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (-u.ln() / lp[i].exp()).powf(1.0 / WEIBULL_SHAPE)
        })
        .collect();
    // scale so the sample median event time is 1
    let mut sorted = base.clone();
    sorted.sort_by(f64::total_cmp);
    let median = crate::metrics::quantile_type7(&sorted, 0.5);
    let event: Vec<f64> = base.iter().map(|t| t / median).collect();
    let unit: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let censored_frac = |rate: f64| -> f64 {
        let c = (0..n).filter(|&i| unit[i] / rate < event[i]).count();
        c as f64 / n as f64
    };
    let (mut lo, mut hi) = (1e-8_f64, 1.0_f64);
    while censored_frac(hi) < target_censoring {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Bracket { target: target_censoring });
        }
    }
    if censored_frac(lo) > target_censoring {
        return Err(Error::Bracket { target: target_censoring });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_frac(mid) < target_censoring {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = if (censored_frac(lo) - target_censoring).abs() <= (censored_frac(hi) - target_censoring).abs() {
        lo
    } else {
        hi
    };
    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let c = unit[i] / rate;
        if event[i] <= c {
            time.push(event[i]);
            status.push(true);
        } else {
            time.push(c);
            status.push(false);
        }
    }
    Ok((time, status))
}

/// Full simulation: correlated predictors, hidden effects, outcome. Hidden
/// effect columns are not part of the returned dataset.
pub fn simulate(config: &SimConfig) -> Result<SimData> {
    config.validate()?;
    let labels = predictor_layout(config.n_per_class);
    let p = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let corr = gen_correlation_matrix(p, config.max_corr, &mut rng)?;
    let x = gen_predictors(config.n, &corr, &mut rng)?;
    let em = build_effect_matrix(&x, config)?;
    let (time, status) = gen_survival(&em.effects, &em.coefs, config.target_censoring, &mut rng)?;
    let mut counters = [0usize; 5];
    let names: Vec<String> = labels
        .iter()
        .map(|&c| {
            let slot = &mut counters[c as usize];
            *slot += 1;
            format!("{}_{}", c.prefix(), slot)
        })
        .collect();
    let ds = SurvivalDataset::new(x, time, status, names)?;
    Ok(SimData { ds, relevance: em.relevance, class_labels: em.class_labels, partners: em.partners })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_correlation_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gen_correlation_matrix(4, 0.0, &mut rng).unwrap(), Array2::<f64>::eye(4));
    }

    #[test]
    fn layout_counts() {
        let l = predictor_layout(2);
        assert_eq!(l.len(), 10);
        assert_eq!(n_combinations(2), 1);
        assert_eq!(n_combinations(15), 5);
    }

    #[test]
    fn coefficients_are_log_hazard_ratio() {
        let cfg = SimConfig { n: 50, n_per_class: 2, ..SimConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gen_predictors(50, &Array2::eye(10), &mut rng).unwrap();
        let em = build_effect_matrix(&x, &cfg).unwrap();
        assert!(em.coefs.iter().all(|&b| (b - 1.64f64.ln()).abs() < 1e-15));
        assert!((1.64f64.ln() - 0.4947).abs() < 1e-4);
    }

    #[test]
    fn censoring_guard() {
        let cfg = SimConfig { target_censoring: 0.005, ..SimConfig::default() };
        assert!(matches!(simulate(&cfg), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SimConfig { n: 100, n_per_class: 2, seed: 9, ..SimConfig::default() };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}
