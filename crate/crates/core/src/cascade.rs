//! Replay of content propagation over later-half encounters.
//!
//! The seed holds the content at the split boundary. Events are processed
//! in `(timestamp, sender, receiver)` order; when exactly one endpoint holds
//! the content, the other acquires it if their relationship tier passes the
//! permission threshold and a Bernoulli(`transmission_prob`) draw succeeds.
//! One uniform draw is consumed per processed event (none when the
//! probability is 1), so runs at different probabilities share random
//! numbers event by event.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphing::{EncounterGraph, Group, GroupId, GroupPartition};
use crate::influence::{
    build_sharing_forest, select_seed, ReplayInput, SeedChoice, SeedContext, SeedStrategy,
};
use crate::trace::{
    permission_allows, split_by_time, SharingEvent, SplitBoundary, Tier, TierIndex, Timestamp,
    UserId,
};
use crate::util::{mix64, substream};

pub const SPLIT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub transmission_prob: f64,
    pub permission_threshold: Tier,
    pub rng_seed: u64,
}

impl Default for CascadeParams {
    fn default() -> Self {
        CascadeParams {
            transmission_prob: 1.0,
            permission_threshold: Tier::Stranger,
            rng_seed: 0,
        }
    }
}

impl CascadeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.transmission_prob) {
            return Err(Error::InvalidArgument(format!(
                "transmission_prob {} not in [0,1]",
                self.transmission_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub ts: Timestamp,
    pub from: UserId,
    pub to: UserId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationOutcome {
    pub group_id: GroupId,
    pub seed: UserId,
    /// Sorted ascending.
    pub infected: Vec<UserId>,
    /// `|infected| / |group|`.
    pub coverage: f64,
    /// `|infected| / |members seen in the replay events, plus the seed|`.
    pub encountered_coverage: f64,
    pub timeline: Vec<Transmission>,
}

pub fn replay_propagation(
    events: &[SharingEvent],
    group: &Group,
    seed: UserId,
    params: &CascadeParams,
    tiers: &TierIndex,
) -> Result<PropagationOutcome> {
    params.validate()?;
    if !group.contains(seed) {
        return Err(Error::InvalidArgument(format!(
            "seed {seed} not in group {}",
            group.id
        )));
    }
    let slot = |u: UserId| group.members.binary_search(&u).ok();
    let mut ordered: Vec<(&SharingEvent, usize, usize)> = events
        .iter()
        .filter_map(|e| Some((e, slot(e.sender)?, slot(e.receiver)?)))
        .collect();
    ordered.sort_by_key(|(e, _, _)| e.order_key());

    let n = group.members.len();
    let mut holds = vec![false; n];
    let mut seen = vec![false; n];
    holds[slot(seed).expect("checked above")] = true;
    seen[slot(seed).expect("checked above")] = true;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let draws = params.transmission_prob < 1.0;
    let mut timeline = Vec::new();
    for (e, s, r) in ordered {
        seen[s] = true;
        seen[r] = true;
        let u: f64 = if draws { rng.random() } else { 0.0 };
        if holds[s] == holds[r] {
            continue;
        }
        let (from, to, to_slot) = if holds[s] {
            (e.sender, e.receiver, r)
        } else {
            (e.receiver, e.sender, s)
        };
        if permission_allows(tiers, from, to, params.permission_threshold)
            && u < params.transmission_prob
        {
            holds[to_slot] = true;
            timeline.push(Transmission {
                ts: e.timestamp,
                from,
                to,
            });
        }
    }
    let infected: Vec<UserId> = group
        .members
        .iter()
        .zip(&holds)
        .filter_map(|(&u, &h)| h.then_some(u))
        .collect();
    let encountered = seen.iter().filter(|&&x| x).count();
    Ok(PropagationOutcome {
        group_id: group.id,
        seed,
        coverage: infected.len() as f64 / n as f64,
        encountered_coverage: infected.len() as f64 / encountered as f64,
        infected,
        timeline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub strategy: SeedStrategy,
    pub params: CascadeParams,
    pub sample_size: usize,
    pub min_group_size: usize,
    /// Drives group sampling and the random strategy.
    pub sample_seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            strategy: SeedStrategy::TreeRoot,
            params: CascadeParams::default(),
            sample_size: 100,
            min_group_size: 5,
            sample_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoverage {
    pub group_id: GroupId,
    pub size: usize,
    pub seed: UserId,
    pub coverage: f64,
    pub encountered_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub mean: f64,
    pub median: f64,
    /// `(x, F(x))` at each distinct coverage value.
    pub cdf: Vec<(f64, f64)>,
}

impl CoverageSummary {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return CoverageSummary {
                mean: 0.0,
                median: 0.0,
                cdf: Vec::new(),
            };
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let mut cdf: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in sorted.iter().enumerate() {
            let f = (i + 1) as f64 / n as f64;
            match cdf.last_mut() {
                Some(last) if last.0 == x => last.1 = f,
                _ => cdf.push((x, f)),
            }
        }
        CoverageSummary { mean, median, cdf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStudy {
    /// Ordered by group id.
    pub outcomes: Vec<GroupCoverage>,
    pub summary: CoverageSummary,
    pub encountered_summary: CoverageSummary,
}

fn group_params(params: &CascadeParams, group: GroupId) -> CascadeParams {
    CascadeParams {
        rng_seed: mix64(params.rng_seed ^ mix64(group)),
        ..*params
    }
}

/// Chooses the seed of one group from its first-half events. The second
/// half is only read by the exhaustive strategy.
pub fn seed_group(
    group: &Group,
    first_half: &[SharingEvent],
    second_half: &[SharingEvent],
    strategy: SeedStrategy,
    params: &CascadeParams,
    tiers: &TierIndex,
    sample_seed: u64,
) -> Result<SeedChoice> {
    let forest = build_sharing_forest(first_half, group);
    let graph = EncounterGraph::build(first_half);
    let group_params = group_params(params, group.id);
    let ctx = SeedContext {
        group,
        graph: &graph,
        replay: Some(ReplayInput {
            events: second_half,
            tiers,
            params: &group_params,
        }),
    };
    let mut rng = substream(sample_seed, group.id);
    select_seed(&forest, strategy, &ctx, &mut rng)
}

/// Seeds one group from its first-half events and replays its second half.
pub fn run_group(
    group: &Group,
    first_half: &[SharingEvent],
    second_half: &[SharingEvent],
    strategy: SeedStrategy,
    params: &CascadeParams,
    tiers: &TierIndex,
    sample_seed: u64,
) -> Result<PropagationOutcome> {
    let choice = seed_group(
        group,
        first_half,
        second_half,
        strategy,
        params,
        tiers,
        sample_seed,
    )?;
    replay_propagation(
        second_half,
        group,
        choice.seed,
        &group_params(params, group.id),
        tiers,
    )
}

/// Seed choice for every group, ordered by group id, splitting the trace
/// at `split_fraction` of its time span.
pub fn select_group_seeds(
    events: &[SharingEvent],
    partition: &GroupPartition,
    tiers: &TierIndex,
    strategy: SeedStrategy,
    params: &CascadeParams,
    sample_seed: u64,
    split_fraction: f64,
) -> Result<Vec<SeedChoice>> {
    params.validate()?;
    let (first, second) = split_by_time(events, SplitBoundary::Fraction(split_fraction))?;
    let first = bucket_by_group(&first, partition);
    let second = bucket_by_group(&second, partition);
    let empty = Vec::new();
    partition
        .groups
        .par_iter()
        .map(|g| {
            seed_group(
                g,
                first.get(&g.id).unwrap_or(&empty),
                second.get(&g.id).unwrap_or(&empty),
                strategy,
                params,
                tiers,
                sample_seed,
            )
        })
        .collect()
}

/// Events of each group, in input order.
pub fn bucket_by_group(
    events: &[SharingEvent],
    partition: &GroupPartition,
) -> HashMap<GroupId, Vec<SharingEvent>> {
    let mut out: HashMap<GroupId, Vec<SharingEvent>> = HashMap::new();
    for e in events {
        if let Some(g) = partition.group_of(e.sender) {
            if partition.group_of(e.receiver) == Some(g) {
                out.entry(g).or_default().push(e.clone());
            }
        }
    }
    out
}

/// Samples groups, seeds each from the first half of the trace and replays
/// the second half.
pub fn evaluate_coverage(
    events: &[SharingEvent],
    partition: &GroupPartition,
    tiers: &TierIndex,
    config: &CoverageConfig,
) -> Result<CoverageStudy> {
    config.params.validate()?;
    let eligible: Vec<&Group> = partition
        .groups
        .iter()
        .filter(|g| g.size() >= config.min_group_size)
        .collect();
    if eligible.len() < config.sample_size {
        return Err(Error::Insufficient(format!(
            "{} groups with at least {} members, need {}",
            eligible.len(),
            config.min_group_size,
            config.sample_size
        )));
    }
    let mut picked = sample(
        &mut substream(config.sample_seed, 0x5A3B1E),
        eligible.len(),
        config.sample_size,
    )
    .into_vec();
    picked.sort_unstable();
    let chosen: Vec<&Group> = picked.iter().map(|&i| eligible[i]).collect();

    let (first, second) = split_by_time(events, SplitBoundary::Fraction(SPLIT_FRACTION))?;
    let first = bucket_by_group(&first, partition);
    let second = bucket_by_group(&second, partition);
    let empty = Vec::new();
    let outcomes: Vec<GroupCoverage> = chosen
        .par_iter()
        .map(|g| {
            let out = run_group(
                g,
                first.get(&g.id).unwrap_or(&empty),
                second.get(&g.id).unwrap_or(&empty),
                config.strategy,
                &config.params,
                tiers,
                config.sample_seed,
            )?;
            Ok(GroupCoverage {
                group_id: g.id,
                size: g.size(),
                seed: out.seed,
                coverage: out.coverage,
                encountered_coverage: out.encountered_coverage,
            })
        })
        .collect::<Result<_>>()?;
    let cov: Vec<f64> = outcomes.iter().map(|o| o.coverage).collect();
    let enc: Vec<f64> = outcomes.iter().map(|o| o.encountered_coverage).collect();
    Ok(CoverageStudy {
        summary: CoverageSummary::from_values(&cov),
        encountered_summary: CoverageSummary::from_values(&enc),
        outcomes,
    })
}
