//! Monte-Carlo cross-validation and the importance-discrimination grid.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::importance::{compute_vi, vi_discrimination, VITechnique};
use crate::metrics::evaluate;
use crate::simgen::{simulate, SimConfig, VariableClass};
use crate::survdata::SurvivalDataset;
use crate::tree::ComboStrategy;

/// Sizes and correlation bounds of the default importance grid.
pub const DEFAULT_GRID_N: [usize; 3] = [500, 1000, 2500];
pub const DEFAULT_GRID_CORR: [f64; 3] = [0.3, 0.15, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub task_id: String,
    pub learner: ComboStrategy,
    pub run: usize,
    pub ipa: f64,
    pub td_c: f64,
    pub harrell_c: f64,
    pub fit_ms: f64,
    pub predict_ms: f64,
    pub seed: u64,
    pub failed: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    /// Rows of successful runs only.
    pub fn completed(&self) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(|r| !r.failed)
    }

    /// Mean Harrell C of one learner over its successful runs.
    pub fn mean_harrell_c(&self, learner: ComboStrategy) -> Option<f64> {
        let v: Vec<f64> = self.completed().filter(|r| r.learner == learner).map(|r| r.harrell_c).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, config: &serde_json::Value) -> Result<()> {
        write_rows(path.as_ref(), &self.rows, config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub task_id: String,
    pub learners: Vec<ComboStrategy>,
    pub n_runs: usize,
    pub seed: u64,
    /// Template for every learner; the combination strategy is overridden.
    pub forest: ForestParams,
}

/// Stratified random halves: each status group is shuffled and split in two.
pub fn stratified_half_split<R: Rng + ?Sized>(status: &[bool], rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::with_capacity(status.len() / 2 + 1);
    let mut test = Vec::with_capacity(status.len() / 2 + 1);
    for group in [true, false] {
        let mut rows: Vec<usize> = (0..status.len()).filter(|&i| status[i] == group).collect();
        rows.shuffle(rng);
        let half = rows.len().div_ceil(2);
        train.extend_from_slice(&rows[..half]);
        test.extend_from_slice(&rows[half..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn run_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Repeated 50/50 train/test evaluation of each learner. Learner failures
/// are recorded as rows with `failed = true`.
pub fn monte_carlo_cv(ds: &SurvivalDataset, config: &CvConfig) -> Result<BenchResult> {
    if config.n_runs == 0 {
        return Err(Error::InvalidParam("n_runs must be ≥ 1".into()));
    }
    if config.learners.is_empty() {
        return Err(Error::InvalidParam("at least one learner is required".into()));
    }
    if ds.n_events() < 4 {
        return Err(Error::InvalidParam("at least 4 events are needed to split into train and test halves".into()));
    }
    let mut rows = Vec::with_capacity(config.n_runs * config.learners.len());
    for run in 0..config.n_runs {
        let mut rng = run_rng(config.seed, run as u64);
        let (train_rows, test_rows) = stratified_half_split(ds.status(), &mut rng);
        let forest_seed: u64 = rng.random();
        let train = ds.subset(&train_rows)?;
        let test = ds.subset(&test_rows)?;
        for &learner in &config.learners {
            let mut params = config.forest.clone();
            params.grow.combo_strategy = learner;
            params.seed = forest_seed;
            let row = match run_learner(&train, &test, &params) {
                Ok((ipa, td_c, harrell_c, fit_ms, predict_ms)) => BenchRow {
                    task_id: config.task_id.clone(),
                    learner,
                    run: run + 1,
                    ipa,
                    td_c,
                    harrell_c,
                    fit_ms,
                    predict_ms,
                    seed: forest_seed,
                    failed: false,
                    error: String::new(),
                },
                Err(e) => BenchRow {
                    task_id: config.task_id.clone(),
                    learner,
                    run: run + 1,
                    ipa: f64::NAN,
                    td_c: f64::NAN,
                    harrell_c: f64::NAN,
                    fit_ms: f64::NAN,
                    predict_ms: f64::NAN,
                    seed: forest_seed,
                    failed: true,
                    error: e.to_string(),
                },
            };
            rows.push(row);
        }
    }
    Ok(BenchResult { rows })
}

fn run_learner(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    params: &ForestParams,
) -> Result<(f64, f64, f64, f64, f64)> {
    let start = Instant::now();
    let forest = Forest::fit(train, params)?;
    let fit_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    let risk = forest.predict_mortality(test.x().view())?;
    let predict_ms = start.elapsed().as_secs_f64() * 1e3;

    let x = test.x().view();
    let surv_at = |times: &[f64]| forest.predict_survival(x, times);
    let horizon = forest.train_summary().event_time_quartiles[1];
    let res = evaluate(test.time(), test.status(), &risk, &surv_at, &forest.train_summary().km, horizon)?;
    Ok((res.ipa, res.td_c, res.harrell_c, fit_ms, predict_ms))
}

/// Variable grouping scored by the importance benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VIClass {
    Overall,
    Main,
    Nonlinear,
    Combination,
    Interaction,
}

impl VIClass {
    pub const ALL: [VIClass; 5] =
        [VIClass::Overall, VIClass::Main, VIClass::Nonlinear, VIClass::Combination, VIClass::Interaction];

    fn includes(self, class: VariableClass) -> bool {
        match self {
            VIClass::Overall => true,
            VIClass::Main => class == VariableClass::Main,
            VIClass::Nonlinear => class == VariableClass::Nonlinear,
            VIClass::Combination => class == VariableClass::CombinationSource,
            VIClass::Interaction => class == VariableClass::Interaction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VIBenchRow {
    pub n: usize,
    pub max_corr: f64,
    pub technique: VITechnique,
    pub class: VIClass,
    pub c: f64,
    pub run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VIBenchResult {
    pub rows: Vec<VIBenchRow>,
}

impl VIBenchResult {
    pub fn write_csv(&self, path: impl AsRef<Path>, config: &serde_json::Value) -> Result<()> {
        write_rows(path.as_ref(), &self.rows, config)
    }

    pub fn lookup(&self, n: usize, max_corr: f64, technique: VITechnique, class: VIClass) -> Vec<&VIBenchRow> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.max_corr == max_corr && r.technique == technique && r.class == class)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VIBenchConfig {
    pub grid: Vec<SimConfig>,
    pub techniques: Vec<VITechnique>,
    pub n_reps: usize,
    pub seed: u64,
    pub n_tree: usize,
    pub n_threads: usize,
}

/// The 3 × 3 grid of sample sizes and correlation bounds over a template.
pub fn default_grid(template: &SimConfig) -> Vec<SimConfig> {
    DEFAULT_GRID_N
        .iter()
        .flat_map(|&n| DEFAULT_GRID_CORR.iter().map(move |&max_corr| SimConfig { n, max_corr, ..template.clone() }))
        .collect()
}

/// Discrimination of one class of relevant predictors against the irrelevant ones.
pub fn class_discrimination(values: &[f64], labels: &[VariableClass], class: VIClass) -> Result<f64> {
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&j| labels[j] == VariableClass::Irrelevant || class.includes(labels[j]))
        .collect();
    let v: Vec<f64> = keep.iter().map(|&j| values[j]).collect();
    let rel: Vec<bool> = keep.iter().map(|&j| labels[j].is_relevant()).collect();
    vi_discrimination(&v, &rel)
}

/// Simulates each grid cell `n_reps` times, fits a default forest and scores
/// every technique overall and per variable class.
pub fn vi_benchmark(config: &VIBenchConfig) -> Result<VIBenchResult> {
    vi_benchmark_with(config, |ds, technique, forest, seed| compute_vi(forest, ds, technique, seed).map(|r| r.values))
}

/// As [`vi_benchmark`] with a caller-supplied importance function.
pub fn vi_benchmark_with<F>(config: &VIBenchConfig, vi: F) -> Result<VIBenchResult>
where
    F: Fn(&SurvivalDataset, VITechnique, &Forest, u64) -> Result<Vec<f64>>,
{
    if config.grid.is_empty() {
        return Err(Error::InvalidParam("importance grid is empty".into()));
    }
    if config.n_reps == 0 {
        return Err(Error::InvalidParam("n_reps must be ≥ 1".into()));
    }
    let mut rows = Vec::new();
    for (cell, template) in config.grid.iter().enumerate() {
        for rep in 0..config.n_reps {
            let mut rng = run_rng(config.seed, (cell * config.n_reps + rep) as u64);
            let sim_cfg = SimConfig { seed: rng.random(), ..template.clone() };
            let data = simulate(&sim_cfg)?;
            let mut params = ForestParams::for_predictors(data.ds.n_cols());
            params.n_tree = config.n_tree;
            params.seed = rng.random();
            params.n_threads = config.n_threads;
            let forest = Forest::fit(&data.ds, &params)?;
            let vi_seed: u64 = rng.random();
            for &technique in &config.techniques {
                let values = vi(&data.ds, technique, &forest, vi_seed)?;
                for class in VIClass::ALL {
                    rows.push(VIBenchRow {
                        n: template.n,
                        max_corr: template.max_corr,
                        technique,
                        class,
                        c: class_discrimination(&values, &data.class_labels, class)?,
                        run: rep + 1,
                    });
                }
            }
        }
    }
    Ok(VIBenchResult { rows })
}

/// Sidecar path holding the JSON config echo of a results file.
pub fn config_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    path.with_file_name(name)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], config: &serde_json::Value) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# config: {config}").map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = config_sidecar_path(path);
    let pretty = serde_json::to_string_pretty(config).map_err(|e| Error::InvalidParam(e.to_string()))?;
    std::fs::write(&sidecar, pretty + "\n").map_err(|e| Error::io(&sidecar, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_partition() {
        let status: Vec<bool> = (0..21).map(|i| i % 3 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (train, test) = stratified_half_split(&status, &mut rng);
        assert_eq!(train.len() + test.len(), 21);
        let ev = |rows: &[usize]| rows.iter().filter(|&&i| status[i]).count();
        assert_eq!(ev(&train), 4);
        assert_eq!(ev(&test), 3);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
    }

    #[test]
    fn default_grid_cells() {
        let grid = default_grid(&SimConfig::default());
        assert_eq!(grid.len(), 9);
        assert!(grid.iter().any(|c| c.n == 2500 && c.max_corr == 0.0));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(config_sidecar_path(Path::new("out/r.csv")), PathBuf::from("out/r.csv.config.json"));
    }
}
