//! Growing and querying a single accelerated oblique survival tree.
//!
//! Nodes are processed breadth-first. Each node samples `mtry` predictors,
//! fits a linear combination of them (one Newton–Raphson step by default),
//! and tests at most `n_split` cutpoints of the resulting linear predictor.
//! The first combination whose best cutpoint reaches `split_min_stat` is
//! accepted; otherwise another column sample is tried, up to `n_retry`
//! more times, before the node becomes a leaf.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coxscore::CoxData;
use crate::error::{Error, Result};
use crate::splitfind::{logrank_sorted, pick_best, sample_cutpoints_f64, LinearCombo, SplitCandidate};
use crate::survdata::{survival_order, SurvivalDataset};

/// Chi-square (1 df) critical value at p = 0.05.
pub const DEFAULT_SPLIT_MIN_STAT: f64 = 3.841459;

const CPH_MAX_ITER: usize = 20;
const CPH_EPSILON: f64 = 1e-9;

/// How the coefficients of a node's linear combination are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComboStrategy {
    /// One Newton–Raphson step from zero.
    Fast,
    /// Newton–Raphson iterated to convergence.
    Cph,
    /// Uniform coefficients on standardized columns.
    Random,
}

impl ComboStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ComboStrategy::Fast => "fast",
            ComboStrategy::Cph => "cph",
            ComboStrategy::Random => "random",
        }
    }
}

impl fmt::Display for ComboStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComboStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(ComboStrategy::Fast),
            "cph" => Ok(ComboStrategy::Cph),
            "random" => Ok(ComboStrategy::Random),
            other => Err(Error::InvalidParam(format!("unknown combo strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    pub mtry: usize,
    pub n_split: usize,
    pub n_retry: usize,
    pub split_min_stat: f64,
    pub split_min_obs: usize,
    pub split_min_events: usize,
    pub leaf_min_obs: usize,
    pub leaf_min_events: usize,
    pub combo_strategy: ComboStrategy,
}

impl GrowParams {
    /// Defaults for `p` predictors; `mtry` is `round(sqrt(p))`.
    pub fn for_predictors(p: usize) -> Self {
        Self {
            mtry: ((p as f64).sqrt().round() as usize).max(1),
            n_split: 5,
            n_retry: 3,
            split_min_stat: DEFAULT_SPLIT_MIN_STAT,
            split_min_obs: 10,
            split_min_events: 5,
            leaf_min_obs: 5,
            leaf_min_events: 1,
            combo_strategy: ComboStrategy::Fast,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParam(msg));
        if self.mtry < 1 {
            return fail("mtry must be ≥ 1".into());
        }
        if self.mtry > p {
            return fail(format!("mtry must be ≤ the number of predictors ({p})"));
        }
        if self.n_split < 1 {
            return fail("n_split must be ≥ 1".into());
        }
        if !(self.split_min_stat > 0.0) {
            return fail("split_min_stat must be > 0".into());
        }
        for (name, v) in [
            ("split_min_obs", self.split_min_obs),
            ("split_min_events", self.split_min_events),
            ("leaf_min_obs", self.leaf_min_obs),
            ("leaf_min_events", self.leaf_min_events),
        ] {
            if v < 1 {
                return fail(format!("{name} must be ≥ 1"));
            }
        }
        if self.leaf_min_obs > self.split_min_obs {
            return fail("leaf_min_obs must be ≤ split_min_obs".into());
        }
        if self.leaf_min_events > self.split_min_events {
            return fail("leaf_min_events must be ≤ split_min_events".into());
        }
        Ok(())
    }
}

/// Weighted Kaplan–Meier survival and Nelson–Aalen cumulative hazard at
/// each unique event time. Right-continuous step functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    pub times: Vec<f64>,
    pub surv: Vec<f64>,
    pub chf: Vec<f64>,
}

impl KaplanMeier {
    /// `S(t)`: 1 before the first event time.
    #[inline]
    pub fn surv_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            i => self.surv[i - 1],
        }
    }

    /// Left limit `S(t-)`.
    #[inline]
    pub fn surv_before(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s < t) {
            0 => 1.0,
            i => self.surv[i - 1],
        }
    }

    #[inline]
    pub fn chf_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            i => self.chf[i - 1],
        }
    }

    /// Sum of `chf_at(t)` over an ascending grid.
    pub fn chf_sum(&self, grid: &[f64]) -> f64 {
        let mut j = 0;
        let mut current = 0.0;
        let mut total = 0.0;
        for &t in grid {
            while j < self.times.len() && self.times[j] <= t {
                current = self.chf[j];
                j += 1;
            }
            total += current;
        }
        total
    }
}

pub fn kaplan_meier(time: &[f64], status: &[bool], weights: &[u32]) -> KaplanMeier {
    let order = survival_order(time, status);
    let t: Vec<f64> = order.iter().map(|&i| time[i]).collect();
    let s: Vec<bool> = order.iter().map(|&i| status[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| f64::from(weights[i])).collect();
    km_sorted(&t, &s, &w)
}

/// Kaplan–Meier for rows in survival order.
pub(crate) fn km_sorted(time: &[f64], status: &[bool], w: &[f64]) -> KaplanMeier {
    let mut at_risk: f64 = w.iter().sum();
    let mut km = KaplanMeier {
        times: Vec::new(),
        surv: Vec::new(),
        chf: Vec::new(),
    };
    let mut surv = 1.0;
    let mut chf = 0.0;
    let mut start = 0;
    while start < time.len() {
        let t = time[start];
        let mut end = start;
        let mut d = 0.0;
        let mut removed = 0.0;
        while end < time.len() && time[end] == t {
            removed += w[end];
            if status[end] {
                d += w[end];
            }
            end += 1;
        }
        if d > 0.0 {
            surv *= 1.0 - d / at_risk;
            chf += d / at_risk;
            km.times.push(t);
            km.surv.push(surv);
            km.chf.push(chf);
        }
        at_risk -= removed;
        start = end;
    }
    km
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub km: KaplanMeier,
    /// Weighted number of in-bag observations in the leaf.
    pub n_obs: f64,
    pub n_events: f64,
    /// Leaf cumulative hazard summed over the training event times.
    pub mortality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        combo: LinearCombo,
        cutpoint: f64,
        /// Log-rank statistic of the accepted split.
        stat: f64,
        /// Wald p-values of the combination coefficients, when the
        /// combination came from a Cox fit.
        pvalues: Option<Vec<f64>>,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObliqueTree {
    nodes: Vec<TreeNode>,
    max_depth_reached: usize,
    n_leaves: usize,
    #[serde(skip)]
    routes: RouteTable,
}

const LEAF_MARK: u32 = u32::MAX;

/// Flat copy of the split structure used for routing. Coefficients of all
/// nodes share one buffer; products are summed in the same order as
/// [`LinearCombo::eta`], so routing decisions are identical.
#[derive(Debug, Clone, PartialEq, Default)]
struct RouteTable {
    nodes: Vec<RouteNode>,
    cols: Vec<u32>,
    coefs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RouteNode {
    /// `LEAF_MARK` for leaves, whose `left` is the node id.
    start: u32,
    end: u32,
    cutpoint: f64,
    left: u32,
    right: u32,
}

impl RouteTable {
    fn build(nodes: &[TreeNode]) -> Self {
        let mut table = RouteTable::default();
        for (id, node) in nodes.iter().enumerate() {
            table.nodes.push(match node {
                TreeNode::Internal { combo, cutpoint, left, right, .. } => {
                    let start = table.cols.len() as u32;
                    table.cols.extend(combo.cols.iter().map(|&c| c as u32));
                    table.coefs.extend_from_slice(&combo.coefs);
                    RouteNode {
                        start,
                        end: table.cols.len() as u32,
                        cutpoint: *cutpoint,
                        left: *left as u32,
                        right: *right as u32,
                    }
                }
                TreeNode::Leaf(_) => RouteNode { start: LEAF_MARK, end: 0, cutpoint: 0.0, left: id as u32, right: 0 },
            });
        }
        table
    }

    #[inline]
    fn leaf_id(&self, row: &[f64], negated: Option<usize>) -> usize {
        let neg = negated.map_or(u32::MAX, |j| j as u32);
        let mut id = 0usize;
        loop {
            let node = self.nodes[id];
            if node.start == LEAF_MARK {
                return node.left as usize;
            }
            let (a, b) = (node.start as usize, node.end as usize);
            let eta: f64 = self.cols[a..b]
                .iter()
                .zip(&self.coefs[a..b])
                .map(|(&c, &w)| if c == neg { -w * row[c as usize] } else { w * row[c as usize] })
                .sum();
            id = if eta <= node.cutpoint { node.left as usize } else { node.right as usize };
        }
    }
}

impl ObliqueTree {
    /// Assembles a tree from a node list rooted at index 0, checking that the
    /// nodes form a binary tree in which every path ends in a leaf.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::MalformedModel("tree has no nodes".into()));
        }
        let mut parent_count = vec![0usize; nodes.len()];
        for node in &nodes {
            if let TreeNode::Internal { left, right, combo, .. } = node {
                if left == right || *left >= nodes.len() || *right >= nodes.len() || *left == 0 || *right == 0 {
                    return Err(Error::MalformedModel("invalid child ids".into()));
                }
                if combo.cols.len() != combo.coefs.len() {
                    return Err(Error::MalformedModel("combination length mismatch".into()));
                }
                parent_count[*left] += 1;
                parent_count[*right] += 1;
            }
        }
        if parent_count.iter().skip(1).any(|&c| c != 1) {
            return Err(Error::MalformedModel("node without exactly one parent".into()));
        }
        // single parent everywhere and a parentless root: walk to detect cycles/unreachable nodes
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![(0usize, 0usize)];
        let mut max_depth = 0;
        let mut n_leaves = 0;
        while let Some((id, depth)) = stack.pop() {
            if seen[id] {
                return Err(Error::MalformedModel("cycle in tree".into()));
            }
            seen[id] = true;
            max_depth = max_depth.max(depth);
            match &nodes[id] {
                TreeNode::Internal { left, right, .. } => {
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
                TreeNode::Leaf(_) => n_leaves += 1,
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::MalformedModel("unreachable node".into()));
        }
        Ok(Self {
            routes: RouteTable::build(&nodes),
            nodes,
            max_depth_reached: max_depth,
            n_leaves,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn max_depth_reached(&self) -> usize {
        self.max_depth_reached
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf(l) => Some(l),
            TreeNode::Internal { .. } => None,
        })
    }

    /// Every linear combination in the tree.
    pub fn combos(&self) -> impl Iterator<Item = (&LinearCombo, Option<&Vec<f64>>)> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Internal { combo, pvalues, .. } => Some((combo, pvalues.as_ref())),
            TreeNode::Leaf(_) => None,
        })
    }

    pub fn uses_column(&self, col: usize) -> bool {
        self.combos().any(|(c, _)| c.cols.contains(&col))
    }

    /// Routes a full predictor row to its leaf: left iff `eta <= cutpoint`.
    #[inline]
    pub fn leaf_for(&self, row: &[f64]) -> &Leaf {
        self.leaf_at(self.routes.leaf_id(row, None))
    }

    /// Routes as if every coefficient on column `negated` had its sign flipped.
    #[inline]
    pub fn leaf_for_negated(&self, row: &[f64], negated: usize) -> &Leaf {
        self.leaf_at(self.routes.leaf_id(row, Some(negated)))
    }

    #[inline]
    fn leaf_at(&self, id: usize) -> &Leaf {
        match &self.nodes[id] {
            TreeNode::Leaf(leaf) => leaf,
            TreeNode::Internal { .. } => unreachable!("route ends at a leaf"),
        }
    }
}

/// Leaf survival probabilities for one predictor row at ascending horizons.
pub fn predict_tree_survival(tree: &ObliqueTree, x: &[f64], horizon_times: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: 0,
            column: "<input>".into(),
        });
    }
    check_ascending(horizon_times)?;
    let leaf = tree.leaf_for(x);
    Ok(horizon_times.iter().map(|&t| leaf.km.surv_at(t)).collect())
}

pub(crate) fn check_ascending(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("horizon times must be finite and ascending".into()));
    }
    Ok(())
}

/// True iff the node holds at least `split_min_obs` weighted observations
/// and `split_min_events` weighted events.
pub fn is_splittable(weights_in_node: &[u32], status_in_node: &[bool], params: &GrowParams) -> bool {
    let obs: u64 = weights_in_node.iter().map(|&w| u64::from(w)).sum();
    let events: u64 = weights_in_node
        .iter()
        .zip(status_in_node)
        .filter(|(_, &s)| s)
        .map(|(&w, _)| u64::from(w))
        .sum();
    obs >= params.split_min_obs as u64 && events >= params.split_min_events as u64
}

/// Grows one tree on the rows of `ds` with positive `weights`.
pub fn grow_tree<R: Rng + ?Sized>(
    ds: &SurvivalDataset,
    weights: &[u32],
    params: &GrowParams,
    rng: &mut R,
) -> Result<ObliqueTree> {
    grow_tree_on_grid(ds, weights, params, &ds.event_times(), rng)
}

/// As [`grow_tree`], with leaf mortality summed over `grid`.
pub(crate) fn grow_tree_on_grid<R: Rng + ?Sized>(
    ds: &SurvivalDataset,
    weights: &[u32],
    params: &GrowParams,
    grid: &[f64],
    rng: &mut R,
) -> Result<ObliqueTree> {
    let n = ds.n_rows();
    let p = ds.n_cols();
    params.validate(p)?;
    if weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {n} rows",
            weights.len()
        )));
    }
    let total: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    let events: u64 = weights
        .iter()
        .zip(ds.status())
        .filter(|(_, &s)| s)
        .map(|(&w, _)| u64::from(w))
        .sum();
    if total == 0 {
        return Err(Error::InvalidParam("all bootstrap weights are zero".into()));
    }
    if events < params.leaf_min_events as u64 {
        return Err(Error::InvalidParam(format!(
            "in-bag data has {events} weighted events, fewer than leaf_min_events = {}",
            params.leaf_min_events
        )));
    }

    let grower = Grower {
        x: ds.x().as_slice().expect("dataset predictors are in standard layout"),
        p,
        time: ds.time(),
        status: ds.status(),
        w: weights.iter().map(|&v| f64::from(v)).collect(),
        params,
        grid,
    };
    let rows: Vec<usize> = ds.sort_index().iter().copied().filter(|&i| weights[i] > 0).collect();
    Ok(grower.grow(rows, rng))
}

struct Grower<'a> {
    x: &'a [f64],
    p: usize,
    time: &'a [f64],
    status: &'a [bool],
    w: Vec<f64>,
    params: &'a GrowParams,
    grid: &'a [f64],
}

struct AcceptedSplit {
    combo: LinearCombo,
    pvalues: Option<Vec<f64>>,
    best: SplitCandidate,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

impl Grower<'_> {
    fn grow<R: Rng + ?Sized>(&self, root_rows: Vec<usize>, rng: &mut R) -> ObliqueTree {
        let mut nodes: Vec<Option<TreeNode>> = vec![None];
        let mut queue = VecDeque::new();
        let mut max_depth = 0;
        if self.splittable(&root_rows) {
            queue.push_back((0usize, 0usize, root_rows));
        } else {
            nodes[0] = Some(self.leaf(&root_rows));
        }

        while let Some((id, depth, rows)) = queue.pop_front() {
            max_depth = max_depth.max(depth);
            match self.find_split(&rows, rng) {
                Some(split) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(None);
                    nodes.push(None);
                    nodes[id] = Some(TreeNode::Internal {
                        combo: split.combo,
                        cutpoint: split.best.cutpoint,
                        stat: split.best.stat,
                        pvalues: split.pvalues,
                        left,
                        right,
                    });
                    for (child, child_rows) in [(left, split.left_rows), (right, split.right_rows)] {
                        max_depth = max_depth.max(depth + 1);
                        if self.splittable(&child_rows) {
                            queue.push_back((child, depth + 1, child_rows));
                        } else {
                            nodes[child] = Some(self.leaf(&child_rows));
                        }
                    }
                }
                None => nodes[id] = Some(self.leaf(&rows)),
            }
        }

        let nodes: Vec<TreeNode> = nodes
            .into_iter()
            .map(|n| n.expect("every allocated node is filled"))
            .collect();
        let n_leaves = nodes.iter().filter(|n| matches!(n, TreeNode::Leaf(_))).count();
        ObliqueTree {
            routes: RouteTable::build(&nodes),
            nodes,
            max_depth_reached: max_depth,
            n_leaves,
        }
    }

    fn splittable(&self, rows: &[usize]) -> bool {
        let (obs, events) = self.counts(rows);
        obs >= self.params.split_min_obs as f64 && events >= self.params.split_min_events as f64
    }

    fn counts(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(o, e), &i| {
            let w = self.w[i];
            (o + w, if self.status[i] { e + w } else { e })
        })
    }

    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let time: Vec<f64> = rows.iter().map(|&i| self.time[i]).collect();
        let status: Vec<bool> = rows.iter().map(|&i| self.status[i]).collect();
        let w: Vec<f64> = rows.iter().map(|&i| self.w[i]).collect();
        let km = km_sorted(&time, &status, &w);
        let (n_obs, n_events) = self.counts(rows);
        let mortality = km.chf_sum(self.grid);
        TreeNode::Leaf(Leaf {
            km,
            n_obs,
            n_events,
            mortality,
        })
    }

    fn find_split<R: Rng + ?Sized>(&self, rows: &[usize], rng: &mut R) -> Option<AcceptedSplit> {
        let params = self.params;
        let m = rows.len();
        let k = params.mtry;
        let time: Vec<f64> = rows.iter().map(|&i| self.time[i]).collect();
        let status: Vec<bool> = rows.iter().map(|&i| self.status[i]).collect();
        let w: Vec<f64> = rows.iter().map(|&i| self.w[i]).collect();
        let mut x_sub = vec![0.0; m * k];
        let mut eta = vec![0.0; m];
        let mut left = vec![false; m];

        for _attempt in 0..=params.n_retry {
            let mut cols: Vec<usize> = rand::seq::index::sample(rng, self.p, k).into_vec();
            cols.sort_unstable();
            for (r, &i) in rows.iter().enumerate() {
                let src = &self.x[i * self.p..(i + 1) * self.p];
                let dst = &mut x_sub[r * k..(r + 1) * k];
                for (d, &c) in dst.iter_mut().zip(&cols) {
                    *d = src[c];
                }
            }
            let data = CoxData {
                x: &x_sub,
                k,
                time: &time,
                status: &status,
                weights: &w,
            };
            let Some((coefs, pvalues)) = self.coefficients(&data, rng) else {
                continue;
            };
            for (r, e) in eta.iter_mut().enumerate() {
                *e = x_sub[r * k..(r + 1) * k].iter().zip(&coefs).map(|(a, b)| a * b).sum();
            }
            let candidates = sample_cutpoints_f64(
                &eta,
                &w,
                &status,
                params.n_split,
                params.split_min_obs as f64,
                params.split_min_events as f64,
                rng,
            );
            let scored: Vec<SplitCandidate> = candidates
                .iter()
                .map(|&c| {
                    for (g, &e) in left.iter_mut().zip(&eta) {
                        *g = e <= c;
                    }
                    SplitCandidate {
                        cutpoint: c,
                        stat: logrank_sorted(&left, &time, &status, &w),
                    }
                })
                .collect();
            let Some(best) = pick_best(&scored) else {
                continue;
            };
            if best.stat >= params.split_min_stat {
                let (left_rows, right_rows): (Vec<_>, Vec<_>) = rows
                    .iter()
                    .zip(&eta)
                    .partition(|(_, &e)| e <= best.cutpoint);
                return Some(AcceptedSplit {
                    combo: LinearCombo { cols, coefs },
                    pvalues,
                    best,
                    left_rows: left_rows.into_iter().map(|(&i, _)| i).collect(),
                    right_rows: right_rows.into_iter().map(|(&i, _)| i).collect(),
                });
            }
        }
        None
    }

    /// Coefficients for the sampled columns, or `None` when the attempt fails
    /// (collinear or constant columns, no usable coefficient).
    fn coefficients<R: Rng + ?Sized>(
        &self,
        data: &CoxData<'_>,
        rng: &mut R,
    ) -> Option<(Vec<f64>, Option<Vec<f64>>)> {
        let (coefs, pvalues) = match self.params.combo_strategy {
            ComboStrategy::Fast => {
                let r = data.step(&vec![0.0; data.k]).ok()?;
                (r.beta, Some(r.pvalues))
            }
            ComboStrategy::Cph => {
                let r = data.fit(CPH_MAX_ITER, CPH_EPSILON).ok()?;
                (r.beta, Some(r.pvalues))
            }
            ComboStrategy::Random => (random_coefficients(data, rng), None),
        };
        if coefs.iter().any(|b| !b.is_finite()) || coefs.iter().all(|&b| b == 0.0) {
            return None;
        }
        Some((coefs, pvalues))
    }
}

/// Uniform(-1, 1) coefficients divided by each column's weighted SD;
/// constant columns get 0.
fn random_coefficients<R: Rng + ?Sized>(data: &CoxData<'_>, rng: &mut R) -> Vec<f64> {
    let k = data.k;
    let total: f64 = data.weights.iter().sum();
    (0..k)
        .map(|j| {
            let u: f64 = rng.random_range(-1.0..=1.0);
            let mean = data
                .x
                .chunks_exact(k)
                .zip(data.weights)
                .map(|(r, &w)| w * r[j])
                .sum::<f64>()
                / total;
            let var = data
                .x
                .chunks_exact(k)
                .zip(data.weights)
                .map(|(r, &w)| w * (r[j] - mean).powi(2))
                .sum::<f64>()
                / total;
            let sd = var.sqrt();
            if sd > 0.0 {
                u / sd
            } else {
                0.0
            }
        })
        .collect()
}
