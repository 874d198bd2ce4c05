//! Per-group sharing forests and seed selection.
//!
//! A user's parent in the forest is the sender of the first event in which
//! the user appears as receiver, provided the user had not already appeared
//! as a sender. Users whose first appearance is as a sender, and users with
//! no events, are roots.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{replay_propagation, CascadeParams};
use crate::error::{Error, Result};
use crate::graphing::{EncounterGraph, Group, GroupId};
use crate::trace::{SharingEvent, TierIndex, Timestamp, UserId};

/// Largest group for which the exhaustive strategy is allowed.
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingForest {
    pub group_id: GroupId,
    pub parent: BTreeMap<UserId, Option<UserId>>,
    /// Children in attachment order.
    pub children: BTreeMap<UserId, Vec<UserId>>,
    /// Active roots in order of first appearance, then inactive members by id.
    pub roots: Vec<UserId>,
    pub subtree_size: BTreeMap<UserId, usize>,
    pub depth: BTreeMap<UserId, usize>,
    /// First timestamp at which each active member appears.
    pub first_activity: BTreeMap<UserId, Timestamp>,
}

impl SharingForest {
    pub fn root_of(&self, mut u: UserId) -> Option<UserId> {
        while let Some(p) = *self.parent.get(&u)? {
            u = p;
        }
        Some(u)
    }

    fn ancestors(&self, mut u: UserId) -> Vec<UserId> {
        let mut out = vec![u];
        while let Some(Some(p)) = self.parent.get(&u) {
            out.push(*p);
            u = *p;
        }
        out
    }

    /// Lowest common ancestor, if both users are in the same tree.
    pub fn lowest_common_ancestor(&self, u: UserId, v: UserId) -> Option<UserId> {
        if !self.parent.contains_key(&u) || !self.parent.contains_key(&v) {
            return None;
        }
        let mut a = self.ancestors(u);
        let mut b = self.ancestors(v);
        if a.last() != b.last() {
            return None;
        }
        let mut lca = None;
        while let (Some(x), Some(y)) = (a.pop(), b.pop()) {
            if x != y {
                break;
            }
            lca = Some(x);
        }
        lca
    }

    /// Hop distance through the tree, `None` across trees.
    pub fn tree_distance(&self, u: UserId, v: UserId) -> Option<usize> {
        let lca = self.lowest_common_ancestor(u, v)?;
        let d = |x: UserId| self.depth[&x];
        Some(d(u) + d(v) - 2 * d(lca))
    }
}

/// Builds the first-reception forest of `group` from `events` (typically the
/// first half of the trace). Events not internal to the group are ignored.
pub fn build_sharing_forest(events: &[SharingEvent], group: &Group) -> SharingForest {
    let mut ordered: Vec<&SharingEvent> = events
        .iter()
        .filter(|e| group.contains(e.sender) && group.contains(e.receiver))
        .collect();
    ordered.sort_by_key(|e| e.order_key());

    let mut parent: BTreeMap<UserId, Option<UserId>> = BTreeMap::new();
    let mut children: BTreeMap<UserId, Vec<UserId>> = BTreeMap::new();
    let mut first_activity = BTreeMap::new();
    let mut appearance: Vec<UserId> = Vec::new();
    let mut roots = Vec::new();
    for e in ordered {
        if let Entry::Vacant(slot) = parent.entry(e.sender) {
            slot.insert(None);
            first_activity.insert(e.sender, e.timestamp);
            appearance.push(e.sender);
            roots.push(e.sender);
        }
        if let Entry::Vacant(slot) = parent.entry(e.receiver) {
            slot.insert(Some(e.sender));
            first_activity.insert(e.receiver, e.timestamp);
            appearance.push(e.receiver);
            children.entry(e.sender).or_default().push(e.receiver);
        }
    }
    for &u in &group.members {
        if let Entry::Vacant(slot) = parent.entry(u) {
            slot.insert(None);
            roots.push(u);
        }
    }

    // Parents always appear before their children, so a reverse sweep over
    // appearance order accumulates subtree sizes bottom-up.
    let mut subtree_size: BTreeMap<UserId, usize> = group.members.iter().map(|&u| (u, 1)).collect();
    for &u in appearance.iter().rev() {
        if let Some(p) = parent[&u] {
            let s = subtree_size[&u];
            *subtree_size.get_mut(&p).expect("parent is a member") += s;
        }
    }
    let mut depth: BTreeMap<UserId, usize> = BTreeMap::new();
    for &u in &roots {
        depth.insert(u, 0);
    }
    for &u in &appearance {
        if let Some(p) = parent[&u] {
            let d = depth[&p] + 1;
            depth.insert(u, d);
        }
    }
    for &u in &group.members {
        children.entry(u).or_default();
    }
    SharingForest {
        group_id: group.id,
        parent,
        children,
        roots,
        subtree_size,
        depth,
        first_activity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStrategy {
    TreeRoot,
    MaxDegree,
    MaxStrength,
    Random,
    Exhaustive,
}

impl SeedStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedStrategy::TreeRoot => "tree_root",
            SeedStrategy::MaxDegree => "max_degree",
            SeedStrategy::MaxStrength => "max_strength",
            SeedStrategy::Random => "random",
            SeedStrategy::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for SeedStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeedStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SeedStrategy::TreeRoot,
            SeedStrategy::MaxDegree,
            SeedStrategy::MaxStrength,
            SeedStrategy::Random,
            SeedStrategy::Exhaustive,
        ]
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedChoice {
    pub group_id: GroupId,
    pub seed: UserId,
    pub strategy: SeedStrategy,
}

/// Later-half events needed by the exhaustive strategy.
#[derive(Debug, Clone, Copy)]
pub struct ReplayInput<'a> {
    pub events: &'a [SharingEvent],
    pub tiers: &'a TierIndex,
    pub params: &'a CascadeParams,
}

#[derive(Debug, Clone, Copy)]
pub struct SeedContext<'a> {
    pub group: &'a Group,
    /// Encounter graph the degree-based strategies read from.
    pub graph: &'a EncounterGraph,
    pub replay: Option<ReplayInput<'a>>,
}

fn argmax_by_key<K: Ord>(members: &[UserId], key: impl Fn(UserId) -> K) -> UserId {
    // `members` is sorted, so keeping the first maximum picks the smallest id.
    let mut best = members[0];
    let mut best_key = key(best);
    for &u in &members[1..] {
        let k = key(u);
        if k > best_key {
            best = u;
            best_key = k;
        }
    }
    best
}

pub fn select_seed<R: Rng + ?Sized>(
    forest: &SharingForest,
    strategy: SeedStrategy,
    ctx: &SeedContext<'_>,
    rng: &mut R,
) -> Result<SeedChoice> {
    let members = &ctx.group.members;
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "group {} is empty",
            ctx.group.id
        )));
    }
    let seed = match strategy {
        SeedStrategy::TreeRoot => {
            let key = |u: UserId| {
                let first = forest
                    .first_activity
                    .get(&u)
                    .copied()
                    .unwrap_or(Timestamp::MAX);
                (
                    forest.subtree_size.get(&u).copied().unwrap_or(1),
                    std::cmp::Reverse(first),
                    std::cmp::Reverse(u),
                )
            };
            *forest
                .roots
                .iter()
                .max_by_key(|&&u| key(u))
                .ok_or_else(|| Error::Invariant("forest has no roots".into()))?
        }
        SeedStrategy::MaxDegree => argmax_by_key(members, |u| ctx.graph.degree(u)),
        SeedStrategy::MaxStrength => argmax_by_key(members, |u| ctx.graph.strength(u)),
        SeedStrategy::Random => members[rng.random_range(0..members.len())],
        SeedStrategy::Exhaustive => {
            if members.len() > EXHAUSTIVE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "exhaustive seeding limited to {EXHAUSTIVE_LIMIT} members, group {} has {}",
                    ctx.group.id,
                    members.len()
                )));
            }
            let replay = ctx.replay.ok_or_else(|| {
                Error::InvalidArgument("exhaustive seeding needs replay events".into())
            })?;
            let mut covered: HashMap<UserId, usize> = HashMap::new();
            for &u in members {
                let out =
                    replay_propagation(replay.events, ctx.group, u, replay.params, replay.tiers)?;
                covered.insert(u, out.infected.len());
            }
            argmax_by_key(members, |u| covered[&u])
        }
    };
    Ok(SeedChoice {
        group_id: ctx.group.id,
        seed,
        strategy,
    })
}
