use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use obliqforest::bench::{self, CvConfig, VIBenchConfig};
use obliqforest::importance::{anova_vi_raw, compute_vi_threads};
use obliqforest::metrics::evaluate;
use obliqforest::simgen::{self, SimConfig};
use obliqforest::survdata::read_feature_csv;
use obliqforest::{Forest, ForestParams, SurvivalDataset, VITechnique};
use serde_json::{json, Value};

use crate::{
    BenchCommand, BenchCvArgs, BenchViArgs, Cli, Command, EvaluateArgs, FitArgs, ForestArgs, GridKind,
    ImportanceArgs, PredictArgs, SimArgs, SimulateArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { threads: cli.threads, quiet: cli.quiet };
    match cli.command {
        Command::Fit(a) => fit(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Importance(a) => importance(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Bench(BenchCommand::Cv(a)) => bench_cv(&ctx, a),
        Command::Bench(BenchCommand::Vi(a)) => bench_vi(&ctx, a),
    }
}

struct Ctx {
    threads: usize,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn load_model(&self, path: &Path) -> Result<Forest> {
        let mut forest = Forest::load(path)?;
        forest.set_n_threads(self.threads);
        Ok(forest)
    }
}

fn forest_params(a: &ForestArgs, p: usize, threads: usize) -> ForestParams {
    let mut params = ForestParams::for_predictors(p);
    params.n_tree = a.n_tree;
    params.seed = a.seed;
    params.bootstrap = a.bootstrap;
    params.n_threads = threads;
    let g = &mut params.grow;
    if let Some(m) = a.mtry {
        g.mtry = m;
    }
    g.n_split = a.n_split;
    g.n_retry = a.n_retry;
    g.split_min_stat = a.split_min_stat;
    g.split_min_obs = a.split_min_obs;
    g.split_min_events = a.split_min_events;
    g.leaf_min_obs = a.leaf_min_obs;
    g.leaf_min_events = a.leaf_min_events;
    g.combo_strategy = a.strategy;
    params
}

fn sim_config(a: &SimArgs, seed: u64) -> SimConfig {
    SimConfig {
        n: a.n,
        n_per_class: a.n_per_class,
        max_corr: a.max_corr,
        hazard_ratio_per_sd: a.hazard_ratio,
        target_censoring: a.censoring,
        nonlinear_map: a.nonlinear_map,
        seed,
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn fit(ctx: &Ctx, a: FitArgs) -> Result<()> {
    let ds = SurvivalDataset::load_csv(&a.outcome.data, &a.outcome.time, &a.outcome.status)?;
    let params = forest_params(&a.forest, ds.n_cols(), ctx.threads);
    params.validate(ds.n_cols())?;
    let start = Instant::now();
    let forest = Forest::fit(&ds, &params)?;
    let elapsed = start.elapsed().as_secs_f64();
    forest.save(&a.out)?;
    ctx.note(format!(
        "n={} p={} events={} n_tree={} elapsed={:.2}s",
        ds.n_rows(),
        ds.n_cols(),
        ds.n_events(),
        params.n_tree,
        elapsed
    ));
    Ok(())
}

fn predict(ctx: &Ctx, a: PredictArgs) -> Result<()> {
    let forest = ctx.load_model(&a.model)?;
    let x = read_feature_csv(&a.data, forest.col_names(), &[a.time.as_str(), a.status.as_str()])?;
    let times = a
        .times
        .clone()
        .unwrap_or_else(|| forest.train_summary().event_time_quartiles.to_vec());
    let mortality = forest.predict_mortality(x.view())?;
    let surv = forest.predict_survival(x.view(), &times)?;

    let config = json!({
        "command": "predict",
        "model": path_str(&a.model),
        "data": path_str(&a.data),
        "times": times,
    });
    let mut header = vec!["row".to_string(), "mortality".to_string()];
    header.extend(times.iter().map(|t| format!("surv_{t}")));
    let rows = mortality.iter().enumerate().map(|(i, m)| {
        let mut r = vec![(i + 1).to_string(), m.to_string()];
        r.extend(surv.row(i).iter().map(|s| s.to_string()));
        r
    });
    write_table(&a.out, &config, &header, rows)?;
    ctx.note(format!("predicted {} rows at {} horizons", mortality.len(), times.len()));
    Ok(())
}

fn importance(ctx: &Ctx, a: ImportanceArgs) -> Result<()> {
    let forest = ctx.load_model(&a.model)?;
    let ds = SurvivalDataset::load_csv(&a.outcome.data, &a.outcome.time, &a.outcome.status)?;
    if a.raw && a.technique != VITechnique::Anova {
        bail!("--raw applies only to --technique anova");
    }
    let report = if a.raw {
        anova_vi_raw(&forest)?
    } else {
        compute_vi_threads(&forest, &ds, a.technique, a.seed, ctx.threads)?
    };
    let config = json!({
        "command": "importance",
        "model": path_str(&a.model),
        "data": path_str(&a.outcome.data),
        "technique": a.technique.as_str(),
        "raw": a.raw,
        "seed": a.seed,
        "baseline_metric": report.baseline_metric,
    });
    let header = ["name".to_string(), "vi".to_string()];
    let rows = report.col_names.iter().zip(&report.values).map(|(n, v)| vec![n.clone(), v.to_string()]);
    write_table(&a.out, &config, &header, rows)?;
    ctx.note(format!("{} importance for {} predictors", a.technique, report.values.len()));
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let forest = ctx.load_model(&a.model)?;
    let ds = SurvivalDataset::load_csv(&a.outcome.data, &a.outcome.time, &a.outcome.status)?;
    if ds.col_names() != forest.col_names() {
        bail!("predictor columns of {} do not match the model", a.outcome.data.display());
    }
    let horizon = a.horizon.unwrap_or(forest.train_summary().event_time_quartiles[1]);
    let risk = forest.predict_mortality(ds.x().view())?;
    let x = ds.x().view();
    let surv_at = |t: &[f64]| forest.predict_survival(x, t);
    let res = evaluate(ds.time(), ds.status(), &risk, &surv_at, &forest.train_summary().km, horizon)?;
    let config = json!({
        "command": "evaluate",
        "model": path_str(&a.model),
        "data": path_str(&a.outcome.data),
        "horizon": horizon,
    });
    let metrics = [
        ("harrell_c", res.harrell_c),
        ("td_c", res.td_c),
        ("td_horizon", res.td_horizon),
        ("ibs", res.ibs),
        ("ibs_reference", res.ibs_reference),
        ("ipa", res.ipa),
        ("t1", res.t1),
        ("t2", res.t2),
    ];
    let header = ["metric".to_string(), "value".to_string()];
    write_table(&a.out, &config, &header, metrics.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))?;
    ctx.note(format!("C={:.4} td-C={:.4} IPA={:.4}", res.harrell_c, res.td_c, res.ipa));
    Ok(())
}

/// `data.csv` → `data_relevance.csv`.
fn relevance_path(out: &Path) -> std::path::PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_relevance.csv"))
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let cfg = sim_config(&a.sim, a.seed);
    let data = simgen::simulate(&cfg)?;
    let comment = format!("config: {}", serde_json::to_string(&cfg)?);
    data.ds.write_csv_with_comment(&a.out, "time", "status", Some(&comment))?;
    let rel = relevance_path(&a.out);
    data.write_relevance_csv(&rel, Some(&comment))?;
    ctx.note(format!(
        "simulated n={} p={} censored={:.3}; relevance in {}",
        data.ds.n_rows(),
        data.ds.n_cols(),
        data.censoring_fraction(),
        rel.display()
    ));
    Ok(())
}

fn bench_cv(ctx: &Ctx, a: BenchCvArgs) -> Result<()> {
    let ds = SurvivalDataset::load_csv(&a.outcome.data, &a.outcome.time, &a.outcome.status)?;
    let forest = forest_params(&a.forest, ds.n_cols(), ctx.threads);
    forest.validate(ds.n_cols())?;
    let task_id = a.task.clone().unwrap_or_else(|| {
        a.outcome.data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let config = CvConfig { task_id, learners: a.learners.clone(), n_runs: a.n_runs, seed: a.forest.seed, forest };
    let result = bench::monte_carlo_cv(&ds, &config)?;
    let echo = json!({
        "command": "bench cv",
        "data": path_str(&a.outcome.data),
        "task_id": config.task_id,
        "learners": config.learners.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
        "n_runs": config.n_runs,
        "seed": config.seed,
        "forest": config.forest,
    });
    result.write_csv(&a.out, &echo)?;
    let failed = result.rows.iter().filter(|r| r.failed).count();
    ctx.note(format!("{} result rows ({failed} failed)", result.rows.len()));
    Ok(())
}

fn bench_vi(ctx: &Ctx, a: BenchViArgs) -> Result<()> {
    let template = sim_config(&a.sim, 0);
    let grid = match a.grid {
        GridKind::Default => bench::default_grid(&template),
        GridKind::Single => vec![template.clone()],
    };
    let config = VIBenchConfig {
        grid,
        techniques: a.techniques.clone(),
        n_reps: a.n_reps,
        seed: a.seed,
        n_tree: a.n_tree,
        n_threads: ctx.threads,
    };
    let result = bench::vi_benchmark(&config)?;
    let echo = json!({
        "command": "bench vi",
        "grid": config.grid.iter().map(|c| json!({"n": c.n, "max_corr": c.max_corr})).collect::<Vec<Value>>(),
        "template": template,
        "techniques": config.techniques.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        "n_reps": config.n_reps,
        "n_tree": config.n_tree,
        "seed": config.seed,
    });
    result.write_csv(&a.out, &echo)?;
    ctx.note(format!("{} result rows", result.rows.len()));
    Ok(())
}

/// CSV with a `# config:` comment line, a header and string cells.
fn write_table<I>(path: &Path, config: &Value, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# config: {config}")?;
    writeln!(out, "{}", csv_line(header))?;
    for row in rows {
        writeln!(out, "{}", csv_line(&row))?;
    }
    out.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn csv_line(cells: &[String]) -> String {
    cells
        .iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}
