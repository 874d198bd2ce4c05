//! Complex-network metrics over groups and power-law fitting of group sizes.
//!
//! All metrics are computed on the simple unweighted graph; edge
//! multiplicities are ignored.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphing::{EncounterGraph, Group, GroupId, GroupPartition, Topology};
use crate::trace::UserId;
use crate::util::substream;

/// Groups above this size get sampled-source path statistics.
pub const EXACT_PATH_LIMIT: usize = 100_000;
pub const SAMPLED_SOURCES: usize = 256;

/// Number of triangles through node `i` (pairs of adjacent neighbours).
pub fn triangles_at(topo: &Topology, i: usize) -> u64 {
    let ni = topo.neighbors(i);
    let mut twice = 0u64;
    for &j in ni {
        let nj = topo.neighbors(j as usize);
        let (mut a, mut b) = (0, 0);
        while a < ni.len() && b < nj.len() {
            match ni[a].cmp(&nj[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    twice += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
    }
    twice / 2
}

pub fn local_clustering_at(topo: &Topology, i: usize) -> f64 {
    let d = topo.degree(i) as u64;
    if d < 2 {
        return 0.0;
    }
    (2 * triangles_at(topo, i)) as f64 / (d * (d - 1)) as f64
}

pub fn local_clustering(graph: &EncounterGraph, node: UserId) -> Result<f64> {
    let i = graph
        .topology()
        .index_of(node)
        .ok_or(Error::UnknownUser(node))?;
    Ok(local_clustering_at(graph.topology(), i))
}

pub fn mean_local_clustering(topo: &Topology) -> f64 {
    if topo.is_empty() {
        return 0.0;
    }
    let sum: f64 = (0..topo.len()).map(|i| local_clustering_at(topo, i)).sum();
    sum / topo.len() as f64
}

/// Transitivity: 3 * triangles / connected triples, 0 without triples.
pub fn transitivity(topo: &Topology) -> f64 {
    let (mut closed, mut triples) = (0u64, 0u64);
    for i in 0..topo.len() {
        let d = topo.degree(i) as u64;
        triples += d * d.saturating_sub(1) / 2;
        closed += triangles_at(topo, i);
    }
    // `closed` counts each triangle once per corner, i.e. 3 * triangles.
    if triples == 0 {
        0.0
    } else {
        closed as f64 / triples as f64
    }
}

pub fn global_clustering(graph: &EncounterGraph) -> f64 {
    transitivity(graph.topology())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    /// Mean distance over ordered pairs; `None` for fewer than two nodes.
    pub avg_path_length: Option<f64>,
    pub diameter: u32,
    /// False when sources were sampled; the diameter is then a lower bound.
    pub exact: bool,
}

fn bfs_from(topo: &Topology, src: usize, dist: &mut [u32]) -> (u64, u32, usize) {
    dist.fill(u32::MAX);
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    let (mut sum, mut ecc, mut reached) = (0u64, 0u32, 1usize);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x];
        for &y in topo.neighbors(x) {
            let y = y as usize;
            if dist[y] == u32::MAX {
                dist[y] = dx + 1;
                sum += u64::from(dx + 1);
                ecc = ecc.max(dx + 1);
                reached += 1;
                queue.push_back(y);
            }
        }
    }
    (sum, ecc, reached)
}

/// Unweighted all-pairs path statistics of a connected topology.
pub fn topology_path_stats(topo: &Topology, group_id: GroupId) -> Result<PathStats> {
    let n = topo.len();
    if n < 2 {
        return Ok(PathStats {
            avg_path_length: None,
            diameter: 0,
            exact: true,
        });
    }
    let exact = n <= EXACT_PATH_LIMIT;
    let sources: Vec<usize> = if exact {
        (0..n).collect()
    } else {
        let mut idx = sample(&mut substream(group_id, 0xD1A), n, SAMPLED_SOURCES).into_vec();
        idx.sort_unstable();
        idx
    };
    let per_source: Vec<(u64, u32, usize)> = sources
        .par_iter()
        .map_init(|| vec![u32::MAX; n], |dist, &s| bfs_from(topo, s, dist))
        .collect();
    if per_source.iter().any(|&(_, _, reached)| reached < n) {
        return Err(Error::Disconnected { group_id });
    }
    let total: u64 = per_source.iter().map(|p| p.0).sum();
    let diameter = per_source.iter().map(|p| p.1).max().unwrap_or(0);
    let pairs = sources.len() as u64 * (n as u64 - 1);
    Ok(PathStats {
        avg_path_length: Some(total as f64 / pairs as f64),
        diameter,
        exact,
    })
}

/// Path statistics of `group` within `graph`. Errors if the group is not
/// connected.
pub fn path_stats(graph: &EncounterGraph, group: &Group) -> Result<PathStats> {
    topology_path_stats(&graph.topology().induced(&group.members), group.id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group_id: GroupId,
    pub size: usize,
    pub global_clustering: f64,
    pub mean_local_clustering: f64,
    pub avg_path_length: Option<f64>,
    pub diameter: u32,
    pub exact: bool,
}

pub fn metrics_for_group(graph: &EncounterGraph, group: &Group) -> Result<GroupMetrics> {
    let topo = graph.topology().induced(&group.members);
    let paths = topology_path_stats(&topo, group.id)?;
    Ok(GroupMetrics {
        group_id: group.id,
        size: group.size(),
        global_clustering: transitivity(&topo),
        mean_local_clustering: mean_local_clustering(&topo),
        avg_path_length: paths.avg_path_length,
        diameter: paths.diameter,
        exact: paths.exact,
    })
}

/// Metrics for every group, ordered by group id.
pub fn group_metrics(
    graph: &EncounterGraph,
    partition: &GroupPartition,
) -> Result<Vec<GroupMetrics>> {
    partition
        .groups
        .par_iter()
        .map(|g| metrics_for_group(graph, g))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha_hat: f64,
    pub xmin: u64,
    pub n_tail: usize,
    pub ks_stat: f64,
}

/// `P(X <= x)` of the fitted discrete law, using the same half-integer
/// continuity correction as the estimator.
pub fn fitted_cdf(x: u64, xmin: u64, alpha: f64) -> f64 {
    if x < xmin {
        return 0.0;
    }
    1.0 - ((x as f64 + 0.5) / (xmin as f64 - 0.5)).powf(1.0 - alpha)
}

/// Approximate discrete power-law MLE at a fixed lower bound:
/// `alpha = 1 + n / sum(ln(x / (xmin - 1/2)))` over samples `x >= xmin`.
pub fn fit_powerlaw_mle(sizes: &[u64], xmin: u64) -> Result<PowerLawFit> {
    if xmin < 1 {
        return Err(Error::InvalidArgument("xmin must be >= 1".into()));
    }
    let mut tail: Vec<u64> = sizes.iter().copied().filter(|&x| x >= xmin).collect();
    if tail.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} samples >= xmin={xmin}, need at least 2",
            tail.len()
        )));
    }
    tail.sort_unstable();
    let shift = xmin as f64 - 0.5;
    let log_sum: f64 = tail.iter().map(|&x| (x as f64 / shift).ln()).sum();
    let n = tail.len();
    let alpha_hat = 1.0 + n as f64 / log_sum;

    let mut ks: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let x = tail[i];
        let mut j = i;
        while j < n && tail[j] == x {
            j += 1;
        }
        let emp = j as f64 / n as f64;
        ks = ks.max((emp - fitted_cdf(x, xmin, alpha_hat)).abs());
        // Empirical CDF is flat until the next observed value.
        if j < n && tail[j] > x + 1 {
            ks = ks.max((emp - fitted_cdf(tail[j] - 1, xmin, alpha_hat)).abs());
        }
        i = j;
    }
    Ok(PowerLawFit {
        alpha_hat,
        xmin,
        n_tail: n,
        ks_stat: ks.min(1.0),
    })
}

/// Scans candidate lower bounds and keeps the fit with the smallest KS
/// distance among those with at least `min_tail` tail samples.
pub fn fit_powerlaw_scan(sizes: &[u64], min_tail: usize) -> Result<PowerLawFit> {
    let mut candidates: Vec<u64> = sizes.iter().copied().filter(|&x| x >= 1).collect();
    candidates.sort_unstable();
    candidates.dedup();
    candidates
        .into_iter()
        .filter_map(|xmin| fit_powerlaw_mle(sizes, xmin).ok())
        .filter(|f| f.n_tail >= min_tail.max(2))
        .min_by(|a, b| a.ks_stat.total_cmp(&b.ks_stat).then(a.xmin.cmp(&b.xmin)))
        .ok_or_else(|| Error::Insufficient(format!("no xmin leaves {min_tail} tail samples")))
}

/// Expands a `size -> count` histogram into individual samples.
pub fn expand_histogram(hist: &BTreeMap<usize, usize>) -> Vec<u64> {
    hist.iter()
        .flat_map(|(&size, &count)| std::iter::repeat_n(size as u64, count))
        .collect()
}
