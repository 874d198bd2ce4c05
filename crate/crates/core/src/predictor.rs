//! Pairwise sharing prediction: feature extraction over a feature window,
//! temporally split datasets, a linear classifier trained by full-batch
//! gradient descent, and a sweep over feature-family subsets.
//!
//! Every feature of a pair is a function of the events inside the feature
//! window only; labels come from a later, disjoint window.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::bucket_by_group;
use crate::error::{Error, Result};
use crate::graphing::{compute_groups, EncounterGraph, GroupId, GroupPartition};
use crate::influence::{build_sharing_forest, SharingForest};
use crate::netmetrics::local_clustering_at;
use crate::trace::{
    canonical_pair, Category, SharingEvent, TierIndex, Timestamp, Trace, UserId, SECONDS_PER_WEEK,
};
use crate::util::cosine;

pub const NUM_FEATURES: usize = 14;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "f1", "f2a", "f2b", "f2c", "f3a", "f3b", "f3c", "f4", "f4m", "f5a", "f5b", "f6a", "f6b", "f7",
];

/// Tree distance reported for users in different trees, and the cap for
/// users in the same tree.
pub const TREE_DISTANCE_CAP: usize = 16;

pub const DEFAULT_GPS_CELL_DEG: f64 = 0.01;

const HOURS_PER_DAY: usize = 24;

/// Groups of feature columns that are swept together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::F1,
        Family::F2,
        Family::F3,
        Family::F4,
        Family::F5,
        Family::F6,
        Family::F7,
    ];

    pub fn columns(self) -> Range<usize> {
        match self {
            Family::F1 => 0..1,
            Family::F2 => 1..4,
            Family::F3 => 4..7,
            Family::F4 => 7..9,
            Family::F5 => 9..11,
            Family::F6 => 11..13,
            Family::F7 => 13..14,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::F1 => "F1",
            Family::F2 => "F2",
            Family::F3 => "F3",
            Family::F4 => "F4",
            Family::F5 => "F5",
            Family::F6 => "F6",
            Family::F7 => "F7",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Family::F1 => "behavior similarity",
            Family::F2 => "content preference",
            Family::F3 => "meeting dynamics",
            Family::F4 => "trajectory similarity",
            Family::F5 => "social group",
            Family::F6 => "sharing tree",
            Family::F7 => "permission tier",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature family {s:?}")))
    }
}

/// Column indices of a set of families, in family order.
pub fn columns_of(families: &[Family]) -> Vec<usize> {
    let mut fams = families.to_vec();
    fams.sort();
    fams.dedup();
    fams.into_iter().flat_map(Family::columns).collect()
}

/// Raw (unstandardized) features of one pair, in `FEATURE_NAMES` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

/// Shannon entropy in bits of a probability vector.
pub fn shannon_entropy(dist: &[f64]) -> Result<f64> {
    if dist.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument(
            "distribution has negative or NaN entries".into(),
        ));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "distribution sums to {total}, not 1"
        )));
    }
    let h: f64 = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    Ok(h.max(0.0))
}

/// Half-open timestamp range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    /// Weeks `first..=last` (1-based) of a trace starting at `origin`.
    pub fn weeks(origin: Timestamp, first: u32, last: u32) -> Window {
        Window {
            start: origin + i64::from(first - 1) * SECONDS_PER_WEEK,
            end: origin + i64::from(last) * SECONDS_PER_WEEK,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct UserProfile {
    hours: [f64; HOURS_PER_DAY],
    categories: [f64; Category::ALL.len()],
    cells: BTreeSet<(i64, i64)>,
}

/// Everything needed to compute pair features, derived from the events of
/// one feature window.
pub struct FeatureContext<'a> {
    graph: EncounterGraph,
    partition: GroupPartition,
    forests: HashMap<GroupId, SharingForest>,
    profiles: HashMap<UserId, UserProfile>,
    encounters: HashMap<(UserId, UserId), Vec<Timestamp>>,
    tiers: &'a TierIndex,
}

impl<'a> FeatureContext<'a> {
    /// Builds the context from the events of `events` that fall in `window`.
    pub fn from_window(
        events: &[SharingEvent],
        window: Window,
        tiers: &'a TierIndex,
        gps_cell_deg: f64,
    ) -> Self {
        let inside: Vec<SharingEvent> = events
            .iter()
            .filter(|e| window.contains(e.timestamp))
            .cloned()
            .collect();
        Self::new(&inside, tiers, gps_cell_deg)
    }

    /// Builds the context treating all of `events` as the feature window.
    pub fn new(events: &[SharingEvent], tiers: &'a TierIndex, gps_cell_deg: f64) -> Self {
        let graph = EncounterGraph::build(events);
        let partition = compute_groups(&graph);
        let buckets = bucket_by_group(events, &partition);
        let forests: HashMap<GroupId, SharingForest> = partition
            .groups
            .par_iter()
            .map(|g| {
                let evs = buckets.get(&g.id).map(Vec::as_slice).unwrap_or(&[]);
                (g.id, build_sharing_forest(evs, g))
            })
            .collect();

        let mut profiles: HashMap<UserId, UserProfile> = HashMap::new();
        let mut encounters: HashMap<(UserId, UserId), Vec<Timestamp>> = HashMap::new();
        for e in events {
            let hour = (e.timestamp.rem_euclid(86_400) / 3_600) as usize;
            let cell = e.geo.map(|g| g.cell(gps_cell_deg));
            for u in [e.sender, e.receiver] {
                let p = profiles.entry(u).or_default();
                p.hours[hour] += 1.0;
                p.categories[e.category.index()] += 1.0;
                if let Some(c) = cell {
                    p.cells.insert(c);
                }
            }
            encounters.entry(e.pair()).or_default().push(e.timestamp);
        }
        encounters.values_mut().for_each(|ts| ts.sort_unstable());

        FeatureContext {
            graph,
            partition,
            forests,
            profiles,
            encounters,
            tiers,
        }
    }

    pub fn graph(&self) -> &EncounterGraph {
        &self.graph
    }

    /// Pairs with at least one event in the window, sorted.
    pub fn candidate_pairs(&self) -> Vec<(UserId, UserId)> {
        let mut pairs: Vec<_> = self.encounters.keys().copied().collect();
        pairs.sort_unstable();
        pairs
    }

    /// Features of the pair `{u, v}`. Both users must be active in the window.
    pub fn extract(&self, u: UserId, v: UserId) -> Result<FeatureVector> {
        let pu = self.profiles.get(&u).ok_or(Error::UnknownUser(u))?;
        let pv = self.profiles.get(&v).ok_or(Error::UnknownUser(v))?;
        let mut f = [0.0; NUM_FEATURES];

        f[0] = cosine(&pu.hours, &pv.hours);

        f[1] = preference_entropy(&pu.categories)?;
        f[2] = preference_entropy(&pv.categories)?;
        f[3] = cosine(&pu.categories, &pv.categories);

        let times = self
            .encounters
            .get(&canonical_pair(u, v))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let (count, mean_gap, cv) = meeting_dynamics(times);
        f[4] = count;
        f[5] = mean_gap;
        f[6] = cv;

        if pu.cells.is_empty() || pv.cells.is_empty() {
            f[7] = 0.0;
            f[8] = 1.0;
        } else {
            let common = pu.cells.intersection(&pv.cells).count();
            let union = pu.cells.len() + pv.cells.len() - common;
            f[7] = common as f64 / union as f64;
            f[8] = 0.0;
        }

        let gu = self.partition.group_of(u).ok_or(Error::UnknownUser(u))?;
        let gv = self.partition.group_of(v).ok_or(Error::UnknownUser(v))?;
        let group = self
            .partition
            .group(gu)
            .ok_or_else(|| Error::Invariant(format!("group {gu} missing")))?;
        f[9] = (group.size() as f64).ln();
        let topo = self.graph.topology();
        let lc = |x: UserId| {
            topo.index_of(x)
                .map(|i| local_clustering_at(topo, i))
                .unwrap_or(0.0)
        };
        f[10] = (lc(u) + lc(v)) / 2.0;

        let same_group = gu == gv;
        let forest = self.forests.get(&gu);
        let (distance, lca_depth) = match forest {
            Some(forest) if same_group => match forest.lowest_common_ancestor(u, v) {
                Some(lca) => (
                    forest
                        .tree_distance(u, v)
                        .unwrap_or(TREE_DISTANCE_CAP)
                        .min(TREE_DISTANCE_CAP),
                    forest.depth[&lca] as f64,
                ),
                None => (TREE_DISTANCE_CAP, -1.0),
            },
            _ => (TREE_DISTANCE_CAP, -1.0),
        };
        f[11] = distance as f64;
        f[12] = lca_depth;

        f[13] = f64::from(self.tiers.tier(u, v).ordinal());
        Ok(FeatureVector(f))
    }
}

/// Features of `{u, v}` given a prepared feature-window context.
pub fn extract_features(ctx: &FeatureContext<'_>, u: UserId, v: UserId) -> Result<FeatureVector> {
    ctx.extract(u, v)
}

fn preference_entropy(counts: &[f64]) -> Result<f64> {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let dist: Vec<f64> = counts.iter().map(|c| c / total).collect();
    shannon_entropy(&dist)
}

/// Encounter count, mean gap in hours, and coefficient of variation of the
/// gaps (population standard deviation over mean). Gap statistics are zero
/// when there are no gaps or the mean gap is zero.
fn meeting_dynamics(sorted_times: &[Timestamp]) -> (f64, f64, f64) {
    let count = sorted_times.len() as f64;
    if sorted_times.len() < 2 {
        return (count, 0.0, 0.0);
    }
    let gaps: Vec<f64> = sorted_times
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / 3_600.0)
        .collect();
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return (count, 0.0, 0.0);
    }
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    (count, mean, var.sqrt() / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub user_a: UserId,
    pub user_b: UserId,
    pub features: FeatureVector,
    pub label: u8,
}

/// Per-column affine map fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; NUM_FEATURES],
    /// Population standard deviation; 1 for constant columns.
    pub std: [f64; NUM_FEATURES],
}

impl Standardization {
    pub fn fit(rows: &[PairRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; NUM_FEATURES];
        let mut std = [0.0; NUM_FEATURES];
        for c in 0..NUM_FEATURES {
            mean[c] = rows.iter().map(|r| r.features.0[c]).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|r| (r.features.0[c] - mean[c]).powi(2))
                .sum::<f64>()
                / n;
            std[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardization { mean, std }
    }

    pub fn apply(&self, features: &FeatureVector, columns: &[usize]) -> Vec<f64> {
        columns
            .iter()
            .map(|&c| (features.0[c] - self.mean[c]) / self.std[c])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub feature_window: Window,
    pub label_window: Window,
    /// Sorted by pair.
    pub rows: Vec<PairRow>,
    pub standardization: Standardization,
}

impl PairDataset {
    /// Standardized design matrix restricted to `columns`.
    pub fn matrix(&self, columns: &[usize]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| self.standardization.apply(&r.features, columns))
            .collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.label == 1).count() as f64 / self.rows.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_weeks: u32,
    pub test_weeks: u32,
    pub gps_cell_deg: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_weeks: 6,
            test_weeks: 7,
            gps_cell_deg: DEFAULT_GPS_CELL_DEG,
        }
    }
}

/// Rows for one split: candidates are pairs with an event in
/// `feature_window`, labelled by whether they share in `label_window`.
pub fn build_rows(
    events: &[SharingEvent],
    feature_window: Window,
    label_window: Window,
    tiers: &TierIndex,
    gps_cell_deg: f64,
) -> Result<Vec<PairRow>> {
    if feature_window.end > label_window.start {
        return Err(Error::InvalidArgument(
            "feature window must precede the label window".into(),
        ));
    }
    let ctx = FeatureContext::from_window(events, feature_window, tiers, gps_cell_deg);
    let labelled: BTreeSet<(UserId, UserId)> = events
        .iter()
        .filter(|e| label_window.contains(e.timestamp))
        .map(SharingEvent::pair)
        .collect();
    ctx.candidate_pairs()
        .into_par_iter()
        .map(|(a, b)| {
            Ok(PairRow {
                user_a: a,
                user_b: b,
                features: ctx.extract(a, b)?,
                label: u8::from(labelled.contains(&(a, b))),
            })
        })
        .collect()
}

/// Train and test datasets. With the default 6 + 7 week split, train
/// features come from weeks 1-5 with week 6 labels, and test features from
/// weeks 7-12 with week 13 labels. Standardization is fitted on train.
pub fn build_dataset(
    trace: &Trace,
    tiers: &TierIndex,
    config: &DatasetConfig,
) -> Result<(PairDataset, PairDataset)> {
    if config.train_weeks < 2 || config.test_weeks < 2 {
        return Err(Error::InvalidArgument(
            "train and test spans need at least two weeks each".into(),
        ));
    }
    if !(config.gps_cell_deg > 0.0) {
        return Err(Error::InvalidArgument(
            "gps_cell_deg must be positive".into(),
        ));
    }
    let weeks = config.train_weeks + config.test_weeks;
    let origin = trace.header.min_ts;
    let needed_end = origin + i64::from(weeks) * SECONDS_PER_WEEK;
    if trace.header.max_ts < needed_end - 1 {
        return Err(Error::Insufficient(format!(
            "trace spans {} s, need {weeks} weeks",
            trace.header.max_ts - origin + 1
        )));
    }
    let (tw, all) = (config.train_weeks, weeks);
    let train_fw = Window::weeks(origin, 1, tw - 1);
    let train_lw = Window::weeks(origin, tw, tw);
    let test_fw = Window::weeks(origin, tw + 1, all - 1);
    let test_lw = Window::weeks(origin, all, all);

    let events = &trace.events;
    let train_rows = build_rows(events, train_fw, train_lw, tiers, config.gps_cell_deg)?;
    let test_rows = build_rows(events, test_fw, test_lw, tiers, config.gps_cell_deg)?;
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::Insufficient("empty candidate pair set".into()));
    }
    let standardization = Standardization::fit(&train_rows);
    Ok((
        PairDataset {
            feature_window: train_fw,
            label_window: train_lw,
            rows: train_rows,
            standardization: standardization.clone(),
        },
        PairDataset {
            feature_window: test_fw,
            label_window: test_lw,
            rows: test_rows,
            standardization,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Logistic,
    Hinge,
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Loss::Logistic),
            "hinge" => Ok(Loss::Hinge),
            _ => Err(Error::InvalidArgument(format!("unknown loss {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Loss,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Logistic,
            l2_lambda: 1e-3,
            epochs: 500,
            learning_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: Loss,
    pub l2_lambda: f64,
    /// Objective before each update, then after the last one.
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Score in (0, 1); positive predictions are scores >= 0.5.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Regularized mean loss and its gradient with respect to weights and bias.
/// The bias is not regularized.
pub fn objective(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[u8],
    loss: Loss,
    l2_lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len().max(1) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let z = dot(weights, row) + bias;
        let (l, dz) = match loss {
            Loss::Logistic => (softplus(-sign * z), -sign * sigmoid(-sign * z)),
            Loss::Hinge => {
                let m = 1.0 - sign * z;
                if m > 0.0 {
                    (m, -sign)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        total += l;
        for (g, xi) in grad.iter_mut().zip(row) {
            *g += dz * xi;
        }
        grad_b += dz;
    }
    let reg = 0.5 * l2_lambda * dot(weights, weights);
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    (total / n + reg, grad, grad_b / n)
}

/// Full-batch gradient descent from zero weights.
pub fn train(x: &[Vec<f64>], y: &[u8], config: &TrainConfig) -> Result<LinearModel> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if !(config.l2_lambda >= 0.0) || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "l2_lambda must be >= 0 and learning_rate > 0".into(),
        ));
    }
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Insufficient(
            "training data must contain both labels".into(),
        ));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidArgument("ragged design matrix".into()));
    }
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut history = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grad, grad_b) = objective(&weights, bias, x, y, config.loss, config.l2_lambda);
        history.push(loss);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_b;
    }
    history.push(objective(&weights, bias, x, y, config.loss, config.l2_lambda).0);
    Ok(LinearModel {
        weights,
        bias,
        loss: config.loss,
        l2_lambda: config.l2_lambda,
        loss_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub rows: usize,
    pub positives: usize,
}

/// Area under the ROC curve via the rank-sum statistic with midranks for
/// ties; 0.5 when either class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return 0.5;
    }
    // Twice the rank sum of positives, so midranks stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the midrank (i + j + 2) / 2.
        let twice_midrank = (i + j + 2) as u64;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        twice_rank_sum += pos_in_tie * twice_midrank;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - positives * (positives + 1);
    twice_u as f64 / (2 * positives * negatives) as f64
}

pub fn evaluate(model: &LinearModel, x: &[Vec<f64>], y: &[u8]) -> Metrics {
    let scores: Vec<f64> = x.iter().map(|r| model.margin(r)).collect();
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &label) in scores.iter().zip(y) {
        match (sigmoid(s) >= 0.5, label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Metrics {
        accuracy: ratio(tp + tn, y.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        auc: auc(&scores, y),
        rows: y.len(),
        positives: tp + fn_,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub families: Vec<Family>,
    pub columns: Vec<String>,
    pub train: Metrics,
    pub test: Metrics,
}

impl SweepRow {
    pub fn label(&self) -> String {
        self.families
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// All `k`-subsets of the families in lexicographic order.
pub fn family_combinations(k: usize) -> Vec<Vec<Family>> {
    fn extend(start: usize, k: usize, current: &mut Vec<Family>, out: &mut Vec<Vec<Family>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..Family::ALL.len() {
            current.push(Family::ALL[i]);
            extend(i + 1, k, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    extend(0, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Trains on `train` with the given families and evaluates on both splits.
pub fn evaluate_subset(
    train_set: &PairDataset,
    test_set: &PairDataset,
    families: &[Family],
    config: &TrainConfig,
) -> Result<SweepRow> {
    let columns = columns_of(families);
    let x_train = train_set.matrix(&columns);
    let y_train = train_set.labels();
    let model = train(&x_train, &y_train, config)?;
    let x_test = test_set.matrix(&columns);
    Ok(SweepRow {
        families: families.to_vec(),
        columns: columns
            .iter()
            .map(|&c| FEATURE_NAMES[c].to_string())
            .collect(),
        train: evaluate(&model, &x_train, &y_train),
        test: evaluate(&model, &x_test, &test_set.labels()),
    })
}

/// One row per family subset of each size in `sizes` (in the given order,
/// lexicographic within a size), followed by the full feature set.
pub fn feature_subset_sweep(
    train_set: &PairDataset,
    test_set: &PairDataset,
    sizes: &[usize],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let mut subsets: Vec<Vec<Family>> =
        sizes.iter().flat_map(|&k| family_combinations(k)).collect();
    subsets.push(Family::ALL.to_vec());
    subsets
        .par_iter()
        .map(|fams| evaluate_subset(train_set, test_set, fams, config))
        .collect()
}
