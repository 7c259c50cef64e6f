//! Evaluation of survival predictions: Harrell's C, the IPCW time-dependent
//! C-statistic, the IPCW Brier score, its integral over a time window, and
//! the index of prediction accuracy.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::survdata::{survival_order, unique_event_times};
use crate::tree::{km_sorted, KaplanMeier};

/// Concordance over usable pairs: `i` has an event and either `T_i < T_j`,
/// or `T_i == T_j` with `j` censored. Risk ties count one half.
pub fn harrell_c(time: &[f64], status: &[bool], risk: &[f64]) -> Result<f64> {
    let n = time.len();
    if status.len() != n || risk.len() != n {
        return Err(Error::DimensionMismatch("time, status and risk lengths differ".into()));
    }
    // dense ranks of risk
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risk[a].total_cmp(&risk[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for w in 0..n {
        if w > 0 && risk[by_risk[w]] != risk[by_risk[w - 1]] {
            r += 1;
        }
        rank[by_risk[w]] = r;
    }
    let mut tree = Fenwick::new(r + 1);

    let order = survival_order(time, status);
    let mut concordant: u64 = 0;
    let mut tied: u64 = 0;
    let mut usable: u64 = 0;
    let mut end = n;
    while end > 0 {
        let t = time[order[end - 1]];
        let mut start = end - 1;
        while start > 0 && time[order[start - 1]] == t {
            start -= 1;
        }
        let group = &order[start..end];
        for &i in group.iter().filter(|&&i| !status[i]) {
            tree.add(rank[i]);
        }
        for &i in group.iter().filter(|&&i| status[i]) {
            let below = tree.prefix(rank[i]);
            let equal = tree.prefix(rank[i] + 1) - below;
            concordant += below;
            tied += equal;
            usable += tree.total();
        }
        for &i in group.iter().filter(|&&i| status[i]) {
            tree.add(rank[i]);
        }
        end = start;
    }
    if usable == 0 {
        return Err(Error::NoUsablePairs);
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / usable as f64)
}

struct Fenwick {
    counts: Vec<u64>,
    total: u64,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n + 1],
            total: 0,
        }
    }

    fn add(&mut self, idx: usize) {
        self.total += 1;
        let mut i = idx + 1;
        while i < self.counts.len() {
            self.counts[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< idx`.
    fn prefix(&self, idx: usize) -> u64 {
        let mut i = idx;
        let mut s = 0;
        while i > 0 {
            s += self.counts[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    fn total(&self) -> u64 {
        self.total
    }
}

/// Kaplan–Meier estimate `G` of the censoring distribution (censorings
/// treated as events).
pub fn censoring_km(time: &[f64], status: &[bool]) -> KaplanMeier {
    let censored: Vec<bool> = status.iter().map(|s| !s).collect();
    let order = survival_order(time, &censored);
    let t: Vec<f64> = order.iter().map(|&i| time[i]).collect();
    let c: Vec<bool> = order.iter().map(|&i| censored[i]).collect();
    km_sorted(&t, &c, &vec![1.0; t.len()])
}

/// IPCW Brier score at horizon `t`. Events by `t` are weighted by
/// `1 / G(T_i-)`, subjects still at risk after `t` by `1 / G(t)`; subjects
/// censored by `t` contribute nothing.
pub fn brier_t(surv_pred: &[f64], time: &[f64], status: &[bool], t: f64, g: &KaplanMeier) -> Result<f64> {
    let q = surv_pred.len();
    if time.len() != q || status.len() != q {
        return Err(Error::DimensionMismatch("prediction and outcome lengths differ".into()));
    }
    if q == 0 {
        return Err(Error::InvalidParam("no observations".into()));
    }
    let g_t = g.surv_at(t);
    let mut sum = 0.0;
    for i in 0..q {
        let s = surv_pred[i];
        if time[i] <= t {
            if status[i] {
                let gi = g.surv_before(time[i]);
                if !(gi > 0.0) {
                    return Err(Error::IpcwUndefined { horizon: t });
                }
                sum += s * s / gi;
            }
        } else {
            if !(g_t > 0.0) {
                return Err(Error::IpcwUndefined { horizon: t });
            }
            sum += (1.0 - s) * (1.0 - s) / g_t;
        }
    }
    Ok(sum / q as f64)
}

/// Trapezoidal integral of a Brier curve over `[t1, t2]` divided by
/// `t2 - t1`. Grid points inside the window are used as nodes; the curve is
/// linearly interpolated at `t1` and `t2` when they are not grid points.
pub fn integrated_brier(times: &[f64], bs: &[f64], t1: f64, t2: f64) -> Result<f64> {
    if times.len() != bs.len() {
        return Err(Error::DimensionMismatch("grid and Brier values differ in length".into()));
    }
    if !(t1 < t2) {
        return Err(Error::InvalidParam(format!("integration bounds must satisfy t1 < t2 ({t1}, {t2})")));
    }
    if times.len() < 2 {
        return Err(Error::InvalidParam("integrated Brier needs at least 2 grid points".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam("Brier grid must be strictly increasing".into()));
    }
    if times[0] > t1 || times[times.len() - 1] < t2 {
        return Err(Error::InvalidParam("Brier grid does not cover [t1, t2]".into()));
    }
    let interp = |t: f64| -> f64 {
        let k = times.partition_point(|&s| s < t);
        if times[k] == t || k == 0 {
            return bs[k];
        }
        let (a, b) = (times[k - 1], times[k]);
        bs[k - 1] + (bs[k] - bs[k - 1]) * (t - a) / (b - a)
    };
    let mut nodes: Vec<(f64, f64)> = vec![(t1, interp(t1))];
    nodes.extend(
        times
            .iter()
            .zip(bs)
            .filter(|(&t, _)| t > t1 && t < t2)
            .map(|(&t, &b)| (t, b)),
    );
    nodes.push((t2, interp(t2)));
    let area: f64 = nodes
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / (t2 - t1))
}

/// Index of prediction accuracy, `1 - ibs_model / ibs_reference`.
pub fn ipa(ibs_model: f64, ibs_reference: f64) -> Result<f64> {
    if !(ibs_reference > 0.0) {
        return Err(Error::InvalidParam("reference integrated Brier score must be > 0".into()));
    }
    Ok(1.0 - ibs_model / ibs_reference)
}

/// IPCW estimate of P(risk_case > risk_control) at horizon `t`: cases have
/// `T <= t` with an event and weight `1 / G(T-)`, controls have `T > t` and
/// weight `1 / G(t)`. Risk ties count one half.
pub fn td_c_statistic(risk: &[f64], time: &[f64], status: &[bool], t: f64, g: &KaplanMeier) -> Result<f64> {
    let n = risk.len();
    if time.len() != n || status.len() != n {
        return Err(Error::DimensionMismatch("risk and outcome lengths differ".into()));
    }
    let mut controls: Vec<f64> = (0..n).filter(|&j| time[j] > t).map(|j| risk[j]).collect();
    let has_case = (0..n).any(|i| time[i] <= t && status[i]);
    if controls.is_empty() || !has_case {
        return Err(Error::NoUsablePairs);
    }
    if !(g.surv_at(t) > 0.0) {
        return Err(Error::IpcwUndefined { horizon: t });
    }
    controls.sort_by(f64::total_cmp);
    let n_ctrl = controls.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (0..n).filter(|&i| time[i] <= t && status[i]) {
        let gi = g.surv_before(time[i]);
        if !(gi > 0.0) {
            return Err(Error::IpcwUndefined { horizon: t });
        }
        let wi = 1.0 / gi;
        let below = controls.partition_point(|&r| r < risk[i]);
        let upto = controls.partition_point(|&r| r <= risk[i]);
        num += wi * (below as f64 + 0.5 * (upto - below) as f64);
        den += wi * n_ctrl;
    }
    Ok(num / den)
}

/// Linear-interpolation (type 7) quantile of an ascending sample.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Metrics of one model on one test set. Values are on their natural scale;
/// [`EvalResult::scaled`] gives the ×100 presentation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub harrell_c: f64,
    pub td_c: f64,
    pub td_horizon: f64,
    pub bs_times: Vec<f64>,
    pub bs_values: Vec<f64>,
    pub ibs: f64,
    pub ibs_reference: f64,
    pub ipa: f64,
    pub t1: f64,
    pub t2: f64,
}

impl EvalResult {
    /// `(harrell_c, td_c, ipa)` multiplied by 100.
    pub fn scaled(&self) -> (f64, f64, f64) {
        (100.0 * self.harrell_c, 100.0 * self.td_c, 100.0 * self.ipa)
    }
}

/// Brier grid over `[t1, t2]`: the endpoints plus every unique event time
/// strictly between them.
pub fn brier_grid(time: &[f64], status: &[bool], t1: f64, t2: f64) -> Vec<f64> {
    let mut grid = vec![t1];
    grid.extend(unique_event_times(time, status).into_iter().filter(|&t| t > t1 && t < t2));
    grid.push(t2);
    grid
}

/// Evaluates predictions on a test set. `surv_at` returns the model's
/// `q × h` survival matrix at the given horizons; `reference` is the
/// training Kaplan–Meier curve used for the IPA baseline. The Brier window
/// runs between the 25th and 75th percentiles of test event times.
pub fn evaluate(
    time: &[f64],
    status: &[bool],
    risk: &[f64],
    surv_at: &dyn Fn(&[f64]) -> Result<Array2<f64>>,
    reference: &KaplanMeier,
    td_horizon: f64,
) -> Result<EvalResult> {
    let mut events: Vec<f64> = time.iter().zip(status).filter(|(_, &s)| s).map(|(&t, _)| t).collect();
    events.sort_by(f64::total_cmp);
    let t1 = quantile_type7(&events, 0.25);
    let t2 = quantile_type7(&events, 0.75);
    if !(t1 < t2) {
        return Err(Error::InvalidParam(
            "test event times do not span a Brier integration window".into(),
        ));
    }
    let g = censoring_km(time, status);
    let grid = brier_grid(time, status, t1, t2);
    let surv = surv_at(&grid)?;
    if surv.dim() != (time.len(), grid.len()) {
        return Err(Error::DimensionMismatch("survival matrix has the wrong shape".into()));
    }

    let mut bs_values = Vec::with_capacity(grid.len());
    let mut bs_reference = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let col: Vec<f64> = surv.column(k).to_vec();
        bs_values.push(brier_t(&col, time, status, t, &g)?);
        let s_ref = vec![reference.surv_at(t); time.len()];
        bs_reference.push(brier_t(&s_ref, time, status, t, &g)?);
    }
    let ibs = integrated_brier(&grid, &bs_values, t1, t2)?;
    let ibs_reference = integrated_brier(&grid, &bs_reference, t1, t2)?;
    Ok(EvalResult {
        harrell_c: harrell_c(time, status, risk)?,
        td_c: td_c_statistic(risk, time, status, td_horizon, &g)?,
        td_horizon,
        bs_times: grid,
        bs_values,
        ibs,
        ibs_reference,
        ipa: ipa(ibs, ibs_reference)?,
        t1,
        t2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harrell_extremes() {
        let time = [1.0, 2.0, 3.0, 4.0];
        let status = [true; 4];
        assert_eq!(harrell_c(&time, &status, &[4.0, 3.0, 2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(harrell_c(&time, &status, &[1.0; 4]).unwrap(), 0.5);
        assert_eq!(harrell_c(&time, &status, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn harrell_tied_time_event_vs_censored() {
        // only usable pair: row 0 (event) vs row 1 (censored at same time)
        let c = harrell_c(&[1.0, 1.0], &[true, false], &[2.0, 1.0]).unwrap();
        assert_eq!(c, 1.0);
        assert!(matches!(
            harrell_c(&[1.0, 2.0], &[false, false], &[0.0, 1.0]),
            Err(Error::NoUsablePairs)
        ));
    }

    #[test]
    fn censoring_km_hand_values() {
        let g = censoring_km(&[1.0, 2.0, 3.0], &[false; 3]);
        let expect = [2.0 / 3.0, 1.0 / 3.0, 0.0];
        for (a, b) in g.surv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let g = censoring_km(&[1.0, 2.0, 3.0], &[true; 3]);
        assert!(g.times.is_empty());
        assert_eq!(g.surv_at(5.0), 1.0);
    }

    #[test]
    fn brier_constant_and_oracle() {
        let time = [1.0, 2.0, 3.0, 4.0];
        let status = [true; 4];
        let g = censoring_km(&time, &status);
        assert_eq!(brier_t(&[0.5; 4], &time, &status, 2.5, &g).unwrap(), 0.25);
        assert_eq!(brier_t(&[0.0, 0.0, 1.0, 1.0], &time, &status, 2.5, &g).unwrap(), 0.0);
    }

    #[test]
    fn brier_zero_weight_errors() {
        // G = 0 from t = 2 onwards
        let g = censoring_km(&[1.0, 2.0], &[false, false]);
        let event_after = brier_t(&[0.5, 0.5], &[1.5, 3.0], &[true, true], 4.0, &g);
        assert!(matches!(event_after, Err(Error::IpcwUndefined { horizon }) if horizon == 4.0));
        let survivor = brier_t(&[0.5], &[5.0], &[true], 3.0, &g);
        assert!(matches!(survivor, Err(Error::IpcwUndefined { .. })));
        // censored before the horizon contributes nothing, so no weight is needed
        assert_eq!(brier_t(&[0.5], &[3.0], &[false], 4.0, &g).unwrap(), 0.0);
    }

    #[test]
    fn integrated_brier_quadrature() {
        let times = [0.0, 1.0, 2.0, 3.0];
        assert!((integrated_brier(&times, &[0.2; 4], 0.0, 3.0).unwrap() - 0.2).abs() < 1e-15);
        // linear curve b(t) = 0.1 t, mean over [0.5, 2.5] = 0.15
        let bs: Vec<f64> = times.iter().map(|t| 0.1 * t).collect();
        assert!((integrated_brier(&times, &bs, 0.5, 2.5).unwrap() - 0.15).abs() < 1e-15);
        assert!(integrated_brier(&[1.0], &[0.1], 0.0, 1.0).is_err());
        assert!(integrated_brier(&times, &bs, 2.0, 1.0).is_err());
        assert!(integrated_brier(&times, &bs, -1.0, 1.0).is_err());
    }

    #[test]
    fn ipa_arithmetic() {
        assert_eq!(ipa(0.2, 0.2).unwrap(), 0.0);
        assert_eq!(ipa(0.0, 0.2).unwrap(), 1.0);
        assert!((ipa(0.10, 0.20).unwrap() - 0.5).abs() < 1e-15);
        assert!(ipa(0.1, 0.0).is_err());
    }

    #[test]
    fn td_c_extremes() {
        let time = [1.0, 2.0, 3.0, 4.0];
        let status = [true; 4];
        let g = censoring_km(&time, &status);
        assert_eq!(td_c_statistic(&[4.0, 3.0, 2.0, 1.0], &time, &status, 2.5, &g).unwrap(), 1.0);
        assert_eq!(td_c_statistic(&[1.0; 4], &time, &status, 2.5, &g).unwrap(), 0.5);
        assert!(td_c_statistic(&[1.0; 4], &time, &status, 10.0, &g).is_err());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&s, 0.25), 1.75);
        assert_eq!(quantile_type7(&s, 0.5), 2.5);
        assert_eq!(quantile_type7(&s, 1.0), 4.0);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
    }
}
