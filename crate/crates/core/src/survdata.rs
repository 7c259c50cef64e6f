//! Right-censored survival data and CSV ingestion.
//!
//! A [`SurvivalDataset`] owns an `n × p` predictor matrix together with the
//! observed follow-up time and event indicator for each row. Construction
//! validates every invariant the downstream estimators rely on, so once a
//! dataset exists it can be shared read-only between workers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    x: Array2<f64>,
    time: Vec<f64>,
    status: Vec<bool>,
    col_names: Vec<String>,
    sort_index: Vec<usize>,
}

impl SurvivalDataset {
    /// Builds a dataset, validating finiteness, positive times, at least one
    /// event and unique column names.
    pub fn new(
        x: Array2<f64>,
        time: Vec<f64>,
        status: Vec<bool>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if time.len() != n || status.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "predictor matrix has {n} rows but time has {} and status has {}",
                time.len(),
                status.len()
            )));
        }
        if col_names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "predictor matrix has {p} columns but {} names were given",
                col_names.len()
            )));
        }
        check_unique(&col_names)?;
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        for (i, row) in x.outer_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    column: col_names[j].clone(),
                });
            }
        }
        for (i, &t) in time.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidTime { row: i, value: t });
            }
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::NoEvents);
        }
        let sort_index = survival_order(&time, &status);
        Ok(Self {
            x,
            time,
            status,
            col_names,
            sort_index,
        })
    }

    /// Same as [`SurvivalDataset::new`] but takes the event indicator as reals,
    /// rejecting anything other than exactly 0 or 1.
    pub fn from_status_values(
        x: Array2<f64>,
        time: Vec<f64>,
        status: &[f64],
        col_names: Vec<String>,
    ) -> Result<Self> {
        let status = status
            .iter()
            .enumerate()
            .map(|(row, &value)| status_from_f64(row, value))
            .collect::<Result<Vec<_>>>()?;
        Self::new(x, time, status, col_names)
    }

    /// Reads a headered CSV file. Every column other than `time_col` and
    /// `status_col` becomes a predictor, in file order. Lines starting with
    /// `#` are ignored.
    pub fn load_csv(path: impl AsRef<Path>, time_col: &str, status_col: &str) -> Result<Self> {
        let table = read_numeric_csv(path.as_ref())?;
        let time_idx = table.column_index(time_col)?;
        let status_idx = table.column_index(status_col)?;

        let pred_idx: Vec<usize> = (0..table.header.len())
            .filter(|&j| j != time_idx && j != status_idx)
            .collect();
        let n = table.rows.len();
        let mut x = Array2::zeros((n, pred_idx.len()));
        let mut time = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for (i, row) in table.rows.iter().enumerate() {
            for (k, &j) in pred_idx.iter().enumerate() {
                x[[i, k]] = row[j];
            }
            time.push(row[time_idx]);
            status.push(status_from_f64(i, row[status_idx])?);
        }
        let col_names = pred_idx.iter().map(|&j| table.header[j].clone()).collect();
        Self::new(x, time, status, col_names)
    }

    /// Writes the dataset as CSV with predictors first, then the outcome columns.
    pub fn write_csv(&self, path: impl AsRef<Path>, time_col: &str, status_col: &str) -> Result<()> {
        self.write_csv_with_comment(path, time_col, status_col, None)
    }

    pub fn write_csv_with_comment(
        &self,
        path: impl AsRef<Path>,
        time_col: &str,
        status_col: &str,
        comment: Option<&str>,
    ) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>, s: &str| {
            out.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
        };
        if let Some(c) = comment {
            write(&mut out, &format!("# {c}\n"))?;
        }
        let mut header = self.col_names.clone();
        header.push(time_col.to_string());
        header.push(status_col.to_string());
        write(&mut out, &(header.join(",") + "\n"))?;
        let mut line = String::new();
        for i in 0..self.n_rows() {
            line.clear();
            for v in self.x.row(i) {
                line.push_str(&v.to_string());
                line.push(',');
            }
            line.push_str(&self.time[i].to_string());
            line.push(',');
            line.push_str(if self.status[i] { "1" } else { "0" });
            line.push('\n');
            write(&mut out, &line)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    /// Row permutation ordering rows by ascending time, events before
    /// censorings within a tie.
    pub fn sort_index(&self) -> &[usize] {
        &self.sort_index
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Strictly increasing unique times at which at least one event occurs.
    pub fn event_times(&self) -> Vec<f64> {
        unique_event_times(&self.time, &self.status)
    }

    /// Observed event times including duplicates, ascending.
    pub fn event_time_sample(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .time
            .iter()
            .zip(&self.status)
            .filter(|(_, &s)| s)
            .map(|(&t, _)| t)
            .collect();
        t.sort_by(f64::total_cmp);
        t
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(ndarray::Axis(0), rows);
        let time = rows.iter().map(|&i| self.time[i]).collect();
        let status = rows.iter().map(|&i| self.status[i]).collect();
        Self::new(x, time, status, self.col_names.clone())
    }
}

/// Indices ordering `(time, status)` by ascending time with events first
/// among equal times. Stable with respect to the original row order.
pub fn survival_order(time: &[f64], status: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..time.len()).collect();
    idx.sort_by(|&a, &b| {
        time[a]
            .total_cmp(&time[b])
            .then_with(|| status[b].cmp(&status[a]))
    });
    idx
}

pub fn unique_event_times(time: &[f64], status: &[bool]) -> Vec<f64> {
    let mut t: Vec<f64> = time
        .iter()
        .zip(status)
        .filter(|(_, &s)| s)
        .map(|(&t, _)| t)
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

fn status_from_f64(row: usize, value: f64) -> Result<bool> {
    if value == 0.0 {
        Ok(false)
    } else if value == 1.0 {
        Ok(true)
    } else {
        Err(Error::InvalidStatus { row, value })
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

/// A fully numeric CSV table.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

/// Reads a headered numeric CSV, skipping `#` comment lines.
pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    check_unique(&header)?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let row = record
            .iter()
            .zip(&header)
            .map(|(cell, column)| {
                cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                    row: i,
                    column: column.clone(),
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i,
                column: header[j].clone(),
            });
        }
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

/// Reads predictor columns for prediction. Columns named in `exclude` are
/// dropped; the remaining columns must be exactly `expected` (any order) and
/// are returned in `expected` order.
pub fn read_feature_csv(path: &Path, expected: &[String], exclude: &[&str]) -> Result<Array2<f64>> {
    let table = read_numeric_csv(path)?;
    let present: Vec<&String> = table
        .header
        .iter()
        .filter(|h| !exclude.contains(&h.as_str()))
        .collect();
    let missing: Vec<&str> = expected
        .iter()
        .filter(|e| !present.contains(e))
        .map(String::as_str)
        .collect();
    let unknown: Vec<&str> = present
        .iter()
        .filter(|h| !expected.contains(h))
        .map(|h| h.as_str())
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "feature columns do not match the model (missing: [{}], unknown: [{}])",
            missing.join(", "),
            unknown.join(", ")
        )));
    }
    let idx: Vec<usize> = expected
        .iter()
        .map(|e| table.column_index(e))
        .collect::<Result<_>>()?;
    let mut x = Array2::zeros((table.rows.len(), expected.len()));
    for (i, row) in table.rows.iter().enumerate() {
        for (k, &j) in idx.iter().enumerate() {
            x[[i, k]] = row[j];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_sorts_by_time() {
        let f = write_tmp("a,time,status\n0.5,2,1\n1.5,1,0\n2.5,3,1\n");
        let ds = SurvivalDataset::load_csv(f.path(), "time", "status").unwrap();
        assert_eq!(ds.sort_index(), &[1, 0, 2]);
        assert_eq!(ds.col_names(), &["a".to_string()]);
        assert_eq!(ds.n_events(), 2);
    }

    #[test]
    fn invalid_status_rejected() {
        let f = write_tmp("a,time,status\n0.5,2,1\n1.5,1,2\n");
        let err = SurvivalDataset::load_csv(f.path(), "time", "status").unwrap_err();
        assert!(err.to_string().contains("invalid status"), "{err}");
    }

    #[test]
    fn all_censored_rejected() {
        let f = write_tmp("a,time,status\n0.5,2,0\n1.5,1,0\n");
        let err = SurvivalDataset::load_csv(f.path(), "time", "status").unwrap_err();
        assert!(err.to_string().contains("no events"), "{err}");
    }

    #[test]
    fn load_errors() {
        let f = write_tmp("a,time,status\nx,2,1\n");
        assert!(matches!(
            SurvivalDataset::load_csv(f.path(), "time", "status"),
            Err(Error::NonNumeric { .. })
        ));
        let f = write_tmp("a,time,status\n1,0,1\n");
        assert!(matches!(
            SurvivalDataset::load_csv(f.path(), "time", "status"),
            Err(Error::InvalidTime { .. })
        ));
        let f = write_tmp("a,a,time,status\n1,1,2,1\n");
        assert!(matches!(
            SurvivalDataset::load_csv(f.path(), "time", "status"),
            Err(Error::DuplicateColumn(_))
        ));
        let f = write_tmp("a,time\n1,2\n");
        assert!(matches!(
            SurvivalDataset::load_csv(f.path(), "time", "status"),
            Err(Error::MissingColumn(_))
        ));
        assert!(SurvivalDataset::load_csv("/nonexistent/file.csv", "time", "status")
            .unwrap_err()
            .is_io());
    }

    #[test]
    fn comment_lines_skipped() {
        let f = write_tmp("# generated\na,time,status\n0.5,2,1\n");
        let ds = SurvivalDataset::load_csv(f.path(), "time", "status").unwrap();
        assert_eq!(ds.n_rows(), 1);
    }

    #[test]
    fn event_times_examples() {
        let ds = |time: Vec<f64>, status: Vec<bool>| {
            let n = time.len();
            SurvivalDataset::new(Array2::zeros((n, 1)), time, status, vec!["a".into()]).unwrap()
        };
        assert_eq!(
            ds(vec![1., 2., 2., 3.], vec![true, true, false, true]).event_times(),
            vec![1., 2., 3.]
        );
        assert_eq!(ds(vec![5.], vec![true]).event_times(), vec![5.]);
        assert_eq!(ds(vec![1., 1., 1.], vec![true; 3]).event_times(), vec![1.]);
    }

    #[test]
    fn ties_put_events_first() {
        let order = survival_order(&[2., 1., 2., 1.], &[false, false, true, true]);
        assert_eq!(order, vec![3, 1, 2, 0]);
    }

    #[test]
    fn feature_csv_reorders_and_rejects_unknown() {
        let f = write_tmp("b,a,time\n1,2,9\n3,4,9\n");
        let x = read_feature_csv(f.path(), &["a".into(), "b".into()], &["time"]).unwrap();
        assert_eq!(x, array![[2., 1.], [4., 3.]]);
        let err = read_feature_csv(f.path(), &["a".into(), "b".into()], &[]).unwrap_err();
        assert!(err.to_string().contains("unknown: [time]"), "{err}");
    }
}
