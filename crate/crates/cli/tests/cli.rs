use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_obliqforest"));
    cmd.env_remove("OBLIQFOREST_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV written by the tool: comment lines dropped, header split off.
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

struct Fixture {
    dir: TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("d.csv");
        let o = run(&["simulate", "--n", "300", "--n-per-class", "2", "--seed", "5", "--out", s(&data), "-q"]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, model: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "fit", "--data", s(&self.data), "--time", "time", "--status", "status", "--out", s(model), "--n-tree",
            "30", "--seed", "3", "-q",
        ];
        args.extend_from_slice(extra);
        run(&args)
    }
}

#[test]
fn fit_predict_round_trip() {
    let fx = Fixture::new();
    let model = fx.path("m.model");
    let o = fx.fit(&model, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(model.exists());

    let pred = fx.path("p.csv");
    let o = run(&["predict", "--model", s(&model), "--data", s(&fx.data), "--out", s(&pred)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = read_table(&pred);
    assert_eq!(header.len(), 2 + 3);
    assert_eq!(rows.len(), 300);
    for row in &rows {
        let surv: Vec<f64> = row[2..].iter().map(|v| v.parse().unwrap()).collect();
        assert!(surv.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(surv.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn predict_at_time_zero_is_one() {
    let fx = Fixture::new();
    let model = fx.path("m.model");
    assert!(fx.fit(&model, &[]).status.success());
    let pred = fx.path("p.csv");
    let o = run(&["predict", "--model", s(&model), "--data", s(&fx.data), "--times", "0", "--out", s(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_table(&pred);
    assert!(rows.iter().all(|r| r[2] == "1"));
}

#[test]
fn missing_status_flag_is_usage_error() {
    let fx = Fixture::new();
    let o = run(&["fit", "--data", s(&fx.data), "--time", "time", "--out", s(&fx.path("m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--status"));
}

#[test]
fn zero_mtry_is_rejected() {
    let fx = Fixture::new();
    let o = fx.fit(&fx.path("m.model"), &["--mtry", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mtry must be ≥ 1"), "{}", stderr(&o));
}

#[test]
fn unknown_feature_column_is_rejected() {
    let fx = Fixture::new();
    let model = fx.path("m.model");
    assert!(fx.fit(&model, &[]).status.success());
    let text = fs::read_to_string(&fx.data).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with('#') {
            continue;
        }
        let extra = if out.is_empty() { "bogus" } else { "1.5" };
        out.push_str(&format!("{line},{extra}\n"));
    }
    let feats = fx.path("f.csv");
    fs::write(&feats, out).unwrap();
    let o = run(&["predict", "--model", s(&model), "--data", s(&feats), "--out", s(&fx.path("p.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_io_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "fit", "--data", s(&dir.path().join("nope.csv")), "--time", "time", "--status", "status", "--out",
        s(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn importance_has_one_row_per_predictor() {
    let fx = Fixture::new();
    let model = fx.path("m.model");
    assert!(fx.fit(&model, &[]).status.success());
    for technique in ["negation", "permutation", "anova"] {
        let out = fx.path(&format!("vi_{technique}.csv"));
        let o = run(&[
            "importance", "--model", s(&model), "--data", s(&fx.data), "--time", "time", "--status", "status",
            "--technique", technique, "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let (header, rows) = read_table(&out);
        assert_eq!(header, ["name", "vi"]);
        assert_eq!(rows.len(), 10);
    }
}

#[test]
fn evaluate_writes_metrics() {
    let fx = Fixture::new();
    let model = fx.path("m.model");
    assert!(fx.fit(&model, &[]).status.success());
    let out = fx.path("eval.csv");
    let o = run(&[
        "evaluate", "--model", s(&model), "--data", s(&fx.data), "--time", "time", "--status", "status", "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_table(&out);
    let c: f64 = rows.iter().find(|r| r[0] == "harrell_c").unwrap()[1].parse().unwrap();
    assert!(c > 0.5 && c <= 1.0);
}

#[test]
fn simulate_writes_data_and_relevance() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("sim.csv");
    let o = run(&["simulate", "--n", "500", "--max-corr", "0.15", "--out", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_table(&data);
    assert_eq!(header.len(), 75 + 2);
    assert_eq!(rows.len(), 500);
    let (rel_header, rel_rows) = read_table(&dir.path().join("sim_relevance.csv"));
    assert_eq!(rel_header, ["name", "class", "relevance", "partner"]);
    assert_eq!(rel_rows.len(), 75);
    assert_eq!(rel_rows.iter().filter(|r| r[2] == "0").count(), 15);
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let fx = Fixture::new();
    let (m1, m2) = (fx.path("m1.model"), fx.path("m2.model"));
    assert!(fx.fit(&m1, &["--threads", "1"]).status.success());
    assert!(fx.fit(&m2, &["--threads", "3"]).status.success());
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());

    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out = fx.path(&format!("vi_{threads}.csv"));
        let o = run(&[
            "importance", "--model", s(&m1), "--data", s(&fx.data), "--time", "time", "--status", "status",
            "--technique", "permutation", "--seed", "11", "--threads", threads, "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn thread_count_from_environment() {
    let fx = Fixture::new();
    let model = fx.path("m.model");
    let o = bin()
        .args(["fit", "--data", s(&fx.data), "--time", "time", "--status", "status", "--out", s(&model), "--n-tree", "5"])
        .env("OBLIQFOREST_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn bench_cv_rows() {
    let fx = Fixture::new();
    let out = fx.path("cv.csv");
    let o = run(&[
        "bench", "cv", "--data", s(&fx.data), "--time", "time", "--status", "status", "--n-runs", "2", "--n-tree",
        "10", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_table(&out);
    assert_eq!(&header[..3], ["task_id", "learner", "run"]);
    assert_eq!(rows.len(), 4);
    assert!(fx.path("cv.csv.config.json").exists());
}

#[test]
fn bench_vi_default_grid_cells() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("vi.csv");
    let o = run(&[
        "bench", "vi", "--grid", "default", "--n-per-class", "3", "--n-reps", "1", "--n-tree", "5", "--techniques",
        "anova", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_table(&out);
    assert_eq!(header, ["n", "max_corr", "technique", "class", "c", "run"]);
    let mut cells: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    cells.sort();
    cells.dedup();
    let expected: Vec<(String, String)> = ["1000", "2500", "500"]
        .iter()
        .flat_map(|n| ["0.0", "0.15", "0.3"].iter().map(move |c| (n.to_string(), c.to_string())))
        .collect();
    assert_eq!(cells, expected);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
