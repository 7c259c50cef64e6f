//! Ensembles of oblique survival trees: bootstrap weights, parallel growth,
//! aggregation, out-of-bag prediction and model persistence.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::quantile_type7;
use crate::survdata::SurvivalDataset;
use crate::tree::{check_ascending, grow_tree_on_grid, km_sorted, GrowParams, KaplanMeier, ObliqueTree};

pub const SCHEMA_VERSION: u64 = 1;

/// Rows routed through one tree before moving to the next.
const ROW_BLOCK: usize = 256;

/// Attempts at drawing a bootstrap sample that keeps enough events.
const MAX_BOOTSTRAP_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapMode {
    /// Counts from `n` draws with replacement.
    #[serde(rename = "multinomial")]
    Multinomial,
    /// Each weight uniform on `{0, ..., 10}`.
    #[serde(rename = "uniform010")]
    Uniform010,
}

impl fmt::Display for BootstrapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BootstrapMode::Multinomial => "multinomial",
            BootstrapMode::Uniform010 => "uniform010",
        })
    }
}

impl FromStr for BootstrapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(BootstrapMode::Multinomial),
            "uniform010" | "uniform_0_10" => Ok(BootstrapMode::Uniform010),
            other => Err(Error::InvalidParam(format!("unknown bootstrap mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_tree: usize,
    pub grow: GrowParams,
    pub seed: u64,
    pub bootstrap: BootstrapMode,
    /// Worker threads; 0 uses the ambient rayon pool. Never affects results.
    #[serde(skip)]
    pub n_threads: usize,
}

impl ForestParams {
    pub fn for_predictors(p: usize) -> Self {
        Self {
            n_tree: 500,
            grow: GrowParams::for_predictors(p),
            seed: 0,
            bootstrap: BootstrapMode::Multinomial,
            n_threads: 0,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_tree < 1 {
            return Err(Error::InvalidParam("n_tree must be ≥ 1".into()));
        }
        self.grow.validate(p)
    }
}

pub fn bootstrap_weights<R: Rng + ?Sized>(n: usize, mode: BootstrapMode, rng: &mut R) -> Vec<u32> {
    match mode {
        BootstrapMode::Multinomial => {
            let mut w = vec![0u32; n];
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1;
            }
            w
        }
        BootstrapMode::Uniform010 => (0..n).map(|_| rng.random_range(0..=10)).collect(),
    }
}

/// Independent stream for tree `tree` under `seed`.
pub fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Runs `f` on a pool of `n_threads` workers (ambient pool when 0).
pub fn with_threads<T: Send>(n_threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if n_threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_threads)
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Outcome summaries of the training data kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_obs: usize,
    pub n_events: usize,
    /// Kaplan–Meier curve of the full training sample.
    pub km: KaplanMeier,
    /// 25th, 50th and 75th percentiles of observed event times.
    pub event_time_quartiles: [f64; 3],
}

impl TrainSummary {
    pub fn from_dataset(ds: &SurvivalDataset) -> Self {
        let order = ds.sort_index();
        let time: Vec<f64> = order.iter().map(|&i| ds.time()[i]).collect();
        let status: Vec<bool> = order.iter().map(|&i| ds.status()[i]).collect();
        let km = km_sorted(&time, &status, &vec![1.0; time.len()]);
        let events = ds.event_time_sample();
        Self {
            n_obs: ds.n_rows(),
            n_events: events.len(),
            km,
            event_time_quartiles: [
                quantile_type7(&events, 0.25),
                quantile_type7(&events, 0.5),
                quantile_type7(&events, 0.75),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    params: ForestParams,
    col_names: Vec<String>,
    train_event_times: Vec<f64>,
    train_summary: TrainSummary,
    inbag_weights: Vec<Vec<u32>>,
    trees: Vec<ObliqueTree>,
}

/// Out-of-bag ensemble predictions for the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPrediction {
    /// `n × h` survival; rows with no out-of-bag tree are NaN.
    pub survival: Array2<f64>,
    /// NaN for rows with no out-of-bag tree.
    pub mortality: Vec<f64>,
    pub counts: Vec<usize>,
}

impl OobPrediction {
    /// Indices of rows predicted by at least one tree.
    pub fn usable_rows(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&i| self.counts[i] > 0).collect()
    }
}

impl Forest {
    /// Grows `params.n_tree` trees. Tree `t` draws its bootstrap weights and
    /// all split randomness from `tree_rng(seed, t)`, so the result does not
    /// depend on the number of threads.
    pub fn fit(ds: &SurvivalDataset, params: &ForestParams) -> Result<Self> {
        let p = ds.n_cols();
        if p == 0 {
            return Err(Error::InvalidParam("dataset has no predictor columns".into()));
        }
        params.validate(p)?;
        let grid = ds.event_times();
        let n = ds.n_rows();

        let grown: Vec<Result<(Vec<u32>, ObliqueTree)>> = with_threads(params.n_threads, || {
            (0..params.n_tree)
                .into_par_iter()
                .map(|t| {
                    let mut rng = tree_rng(params.seed, t);
                    let weights = draw_usable_weights(ds, params, &mut rng)?;
                    let tree = grow_tree_on_grid(ds, &weights, &params.grow, &grid, &mut rng)?;
                    Ok((weights, tree))
                })
                .collect()
        })?;
        let mut inbag_weights = Vec::with_capacity(params.n_tree);
        let mut trees = Vec::with_capacity(params.n_tree);
        for g in grown {
            let (w, tree) = g?;
            debug_assert_eq!(w.len(), n);
            inbag_weights.push(w);
            trees.push(tree);
        }
        Ok(Self {
            params: params.clone(),
            col_names: ds.col_names().to_vec(),
            train_event_times: grid,
            train_summary: TrainSummary::from_dataset(ds),
            inbag_weights,
            trees,
        })
    }

    /// Assembles a forest from already-built trees.
    pub fn from_parts(
        params: ForestParams,
        col_names: Vec<String>,
        train_summary: TrainSummary,
        train_event_times: Vec<f64>,
        inbag_weights: Vec<Vec<u32>>,
        trees: Vec<ObliqueTree>,
    ) -> Result<Self> {
        let forest = Self {
            params,
            col_names,
            train_event_times,
            train_summary,
            inbag_weights,
            trees,
        };
        forest.check_consistency()?;
        Ok(forest)
    }

    fn check_consistency(&self) -> Result<()> {
        let p = self.col_names.len();
        if self.trees.is_empty() {
            return Err(Error::MalformedModel("forest has no trees".into()));
        }
        if self.inbag_weights.len() != self.trees.len() {
            return Err(Error::MalformedModel("one in-bag weight vector per tree is required".into()));
        }
        let n = self.train_summary.n_obs;
        if self.inbag_weights.iter().any(|w| w.len() != n) {
            return Err(Error::MalformedModel("in-bag weights do not align with training rows".into()));
        }
        for tree in &self.trees {
            if tree.combos().any(|(c, _)| c.cols.iter().any(|&j| j >= p)) {
                return Err(Error::MalformedModel("tree references a column index ≥ p".into()));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[ObliqueTree] {
        &self.trees
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn n_cols(&self) -> usize {
        self.col_names.len()
    }

    pub fn train_event_times(&self) -> &[f64] {
        &self.train_event_times
    }

    pub fn train_summary(&self) -> &TrainSummary {
        &self.train_summary
    }

    pub fn inbag_weights(&self) -> &[Vec<u32>] {
        &self.inbag_weights
    }

    pub fn set_n_threads(&mut self, n_threads: usize) {
        self.params.n_threads = n_threads;
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} predictors but input has {} columns",
                self.n_cols(),
                x.ncols()
            )));
        }
        for (i, row) in x.outer_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    column: self.col_names[j].clone(),
                });
            }
        }
        Ok(())
    }

    /// Visits `(tree, row)` pairs block by block: every tree sees a block of
    /// rows before the next tree is loaded. Per-row visits follow tree order,
    /// so accumulated sums do not depend on the thread count.
    fn visit_blocked<A, I, F>(&self, x: ArrayView2<'_, f64>, init: I, visit: F) -> Result<Vec<A>>
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(usize, &ObliqueTree, usize, &[f64], &mut A) + Sync,
    {
        let x = x.as_standard_layout();
        let n = x.nrows();
        let p = x.ncols();
        let data = x.as_slice().expect("standard layout");
        let blocks: Vec<Vec<A>> = with_threads(self.params.n_threads, || {
            (0..n.div_ceil(ROW_BLOCK))
                .into_par_iter()
                .map(|b| {
                    let rows = (b * ROW_BLOCK)..((b + 1) * ROW_BLOCK).min(n);
                    let mut acc: Vec<A> = rows.clone().map(|_| init()).collect();
                    for (t, tree) in self.trees.iter().enumerate() {
                        for (a, i) in acc.iter_mut().zip(rows.clone()) {
                            visit(t, tree, i, &data[i * p..(i + 1) * p], a);
                        }
                    }
                    acc
                })
                .collect()
        })?;
        Ok(blocks.into_iter().flatten().collect())
    }

    /// Mean over trees of each tree's leaf survival curve.
    pub fn predict_survival(&self, x: ArrayView2<'_, f64>, horizon_times: &[f64]) -> Result<Array2<f64>> {
        self.check_input(x)?;
        check_ascending(horizon_times)?;
        let h = horizon_times.len();
        let n_tree = self.trees.len() as f64;
        let rows = self.visit_blocked(
            x,
            || vec![0.0; h],
            |_, tree, _, row, acc: &mut Vec<f64>| {
                let leaf = tree.leaf_for(row);
                for (a, &t) in acc.iter_mut().zip(horizon_times) {
                    *a += leaf.km.surv_at(t);
                }
            },
        )?;
        let rows = rows
            .into_iter()
            .map(|mut acc| {
                acc.iter_mut().for_each(|a| *a /= n_tree);
                acc
            })
            .collect();
        Ok(rows_to_array(rows, h))
    }

    /// Ensemble mortality: mean leaf cumulative hazard summed over the
    /// training event times. Larger means higher risk.
    pub fn predict_mortality(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n_tree = self.trees.len() as f64;
        let sums = self.visit_blocked(x, || 0.0, |_, tree, _, row, acc: &mut f64| *acc += tree.leaf_for(row).mortality)?;
        Ok(sums.into_iter().map(|s| s / n_tree).collect())
    }

    /// Out-of-bag survival and mortality for the training rows of `ds`.
    pub fn oob_predict(&self, ds: &SurvivalDataset, horizon_times: &[f64]) -> Result<OobPrediction> {
        self.check_training_rows(ds)?;
        check_ascending(horizon_times)?;
        let h = horizon_times.len();
        let per_row = self.visit_blocked(
            ds.x().view(),
            || (vec![0.0; h], 0.0, 0usize),
            |t, tree, i, row, acc: &mut (Vec<f64>, f64, usize)| {
                if self.inbag_weights[t][i] != 0 {
                    return;
                }
                let leaf = tree.leaf_for(row);
                for (a, &ht) in acc.0.iter_mut().zip(horizon_times) {
                    *a += leaf.km.surv_at(ht);
                }
                acc.1 += leaf.mortality;
                acc.2 += 1;
            },
        )?;
        let mut survival = Vec::with_capacity(per_row.len());
        let mut mortality = Vec::with_capacity(per_row.len());
        let mut counts = Vec::with_capacity(per_row.len());
        for (mut surv, mort, count) in per_row {
            if count == 0 {
                survival.push(vec![f64::NAN; h]);
                mortality.push(f64::NAN);
            } else {
                let c = count as f64;
                surv.iter_mut().for_each(|a| *a /= c);
                survival.push(surv);
                mortality.push(mort / c);
            }
            counts.push(count);
        }
        Ok(OobPrediction {
            survival: rows_to_array(survival, h),
            mortality,
            counts,
        })
    }

    /// Out-of-bag mortality for predictor matrix `x` aligned with the
    /// training rows, optionally with every coefficient on column `negated`
    /// sign-flipped. The forest itself is never modified.
    pub fn oob_mortality(&self, x: ArrayView2<'_, f64>, negated: Option<usize>) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_input(x)?;
        if x.nrows() != self.train_summary.n_obs {
            return Err(Error::DimensionMismatch(format!(
                "forest was trained on {} rows, got {}",
                self.train_summary.n_obs,
                x.nrows()
            )));
        }
        let per_row = self.visit_blocked(
            x,
            || (0.0, 0usize),
            |t, tree, i, row, acc: &mut (f64, usize)| {
                if self.inbag_weights[t][i] != 0 {
                    return;
                }
                let leaf = match negated {
                    Some(j) => tree.leaf_for_negated(row, j),
                    None => tree.leaf_for(row),
                };
                acc.0 += leaf.mortality;
                acc.1 += 1;
            },
        )?;
        Ok(per_row
            .into_iter()
            .map(|(m, c)| if c == 0 { (f64::NAN, 0) } else { (m / c as f64, c) })
            .unzip())
    }

    fn check_training_rows(&self, ds: &SurvivalDataset) -> Result<()> {
        if ds.n_rows() != self.train_summary.n_obs || ds.col_names() != self.col_names.as_slice() {
            return Err(Error::DimensionMismatch(
                "dataset does not match the forest's training data".into(),
            ));
        }
        Ok(())
    }

    pub fn to_model_string(&self) -> Result<String> {
        let body = ModelBodyRef {
            schema_version: SCHEMA_VERSION,
            params: &self.params,
            col_names: &self.col_names,
            train_event_times: &self.train_event_times,
            train_summary: &self.train_summary,
            inbag_weights: &self.inbag_weights,
            trees: &self.trees,
        };
        let canonical = serde_json::to_string(&body).map_err(|e| Error::MalformedModel(e.to_string()))?;
        let file = ModelFileRef {
            body,
            checksum: checksum(&canonical),
        };
        serde_json::to_string(&file).map_err(|e| Error::MalformedModel(e.to_string()))
    }

    pub fn from_model_str(text: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::MalformedModel("top level is not an object".into()))?;
        let version = obj
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::MalformedModel("missing schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let stored = match obj.remove("checksum") {
            Some(serde_json::Value::String(s)) => s,
            _ => return Err(Error::MalformedModel("missing checksum".into())),
        };
        let body: ModelBody =
            serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;
        let canonical = serde_json::to_string(&body).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if checksum(&canonical) != stored {
            return Err(Error::Checksum);
        }
        let trees = body
            .trees
            .into_iter()
            .map(|t| ObliqueTree::from_nodes(t.into_nodes()))
            .collect::<Result<Vec<_>>>()?;
        let mut params = body.params;
        params.validate(body.col_names.len())?;
        params.n_threads = 0;
        Forest::from_parts(
            params,
            body.col_names,
            body.train_summary,
            body.train_event_times,
            body.inbag_weights,
            trees,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_model_string()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_model_str(&text)
    }
}

fn draw_usable_weights(ds: &SurvivalDataset, params: &ForestParams, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    let need = params.grow.leaf_min_events as u64;
    for _ in 0..MAX_BOOTSTRAP_DRAWS {
        let w = bootstrap_weights(ds.n_rows(), params.bootstrap, rng);
        let events: u64 = w
            .iter()
            .zip(ds.status())
            .filter(|(_, &s)| s)
            .map(|(&v, _)| u64::from(v))
            .sum();
        if events >= need {
            return Ok(w);
        }
    }
    Err(Error::InvalidParam(
        "bootstrap samples repeatedly contained too few events".into(),
    ))
}

fn rows_to_array(rows: Vec<Vec<f64>>, h: usize) -> Array2<f64> {
    let q = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((q, h), flat).expect("rows have equal length")
}

fn checksum(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Serialize)]
struct ModelBodyRef<'a> {
    schema_version: u64,
    params: &'a ForestParams,
    col_names: &'a [String],
    train_event_times: &'a [f64],
    train_summary: &'a TrainSummary,
    inbag_weights: &'a [Vec<u32>],
    trees: &'a [ObliqueTree],
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    #[serde(flatten)]
    body: ModelBodyRef<'a>,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    schema_version: u64,
    params: ForestParams,
    col_names: Vec<String>,
    train_event_times: Vec<f64>,
    train_summary: TrainSummary,
    inbag_weights: Vec<Vec<u32>>,
    trees: Vec<TreeNodes>,
}

/// Tree as stored on disk; structure is re-validated on load.
#[derive(Serialize, Deserialize)]
struct TreeNodes {
    nodes: Vec<crate::tree::TreeNode>,
    max_depth_reached: usize,
    n_leaves: usize,
}

impl TreeNodes {
    fn into_nodes(self) -> Vec<crate::tree::TreeNode> {
        self.nodes
    }
}
