//! Deterministic synthetic sharing traces with a ground-truth ledger.
//!
//! The model: group sizes follow a discrete power law; inside each group the
//! contact topology is a rewired ring lattice (small world); every topology
//! edge carries a Poisson number of sharing events spread uniformly over the
//! span both endpoints are active; files are drawn Zipf-popular from
//! per-category catalog partitions. Users carry a log-normal activity level
//! that scales the rate of their edges, how often they are the sender, and
//! how long they stay active before going quiet. Groups are generated on
//! independent RNG substreams, so the output does not depend on scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphing::{GroupId, UnionFind};
use crate::trace::{
    Category, GeoPoint, RelationshipTier, SharingEvent, Tier, Timestamp, Trace, TraceHeader,
    UserId, SECONDS_PER_WEEK,
};
use crate::util::{mix64, substream};

/// First timestamp of every synthetic trace (2016-08-01T00:00:00Z).
pub const TRACE_START: i64 = 1_470_009_600;

/// Standard deviation of the log of per-user activity levels.
pub const ACTIVITY_LOG_SD: f64 = 1.0;
/// Exponent scale linking a user's activity to how long they stay active.
pub const RETENTION_SHAPE: f64 = 3.0;

/// Refuse to materialise more users than this.
pub const MAX_TOTAL_USERS: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraGroupTopology {
    #[default]
    RingLatticeRewire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub rng_seed: u64,
    pub num_groups: usize,
    pub size_alpha: f64,
    pub size_xmin: u64,
    pub weeks: u32,
    pub events_per_user_week: f64,
    pub catalog_size: u64,
    pub zipf_s: f64,
    pub category_mix: BTreeMap<Category, f64>,
    pub intra_group_topology: IntraGroupTopology,
    pub rewire_prob: f64,
    pub mean_degree: usize,
    pub tier_mix: BTreeMap<Tier, f64>,
    pub gps_cell_deg: f64,
    pub gps_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            rng_seed: 2016,
            num_groups: 2000,
            size_alpha: 2.5,
            size_xmin: 2,
            weeks: 13,
            events_per_user_week: 3.0,
            catalog_size: 50_000,
            zipf_s: 1.0,
            category_mix: BTreeMap::from([
                (Category::App, 0.35),
                (Category::Video, 0.30),
                (Category::Music, 0.15),
                (Category::Image, 0.15),
                (Category::Other, 0.05),
            ]),
            intra_group_topology: IntraGroupTopology::RingLatticeRewire,
            rewire_prob: 0.15,
            mean_degree: 4,
            tier_mix: BTreeMap::from([
                (Tier::Stranger, 0.5),
                (Tier::Friend, 0.35),
                (Tier::Family, 0.15),
            ]),
            gps_cell_deg: 0.01,
            gps_rate: 0.2,
        }
    }
}

fn check_distribution<K: std::fmt::Debug>(name: &str, map: &BTreeMap<K, f64>) -> Result<()> {
    if map.values().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Config(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = map.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_groups == 0 {
            return fail("num_groups must be positive");
        }
        if !(self.size_alpha > 1.0) {
            return fail("size_alpha must be > 1");
        }
        if self.size_xmin < 2 {
            return fail("size_xmin must be >= 2");
        }
        if self.weeks == 0 {
            return fail("weeks must be positive");
        }
        if !(self.events_per_user_week > 0.0 && self.events_per_user_week.is_finite()) {
            return fail("events_per_user_week must be positive");
        }
        if !(self.zipf_s > 0.0) {
            return fail("zipf_s must be positive");
        }
        if !(0.0..=1.0).contains(&self.rewire_prob) {
            return fail("rewire_prob must be in [0,1]");
        }
        if self.mean_degree == 0 || !self.mean_degree.is_multiple_of(2) {
            return fail("mean_degree must be even and positive");
        }
        if !(self.gps_cell_deg > 0.0) {
            return fail("gps_cell_deg must be positive");
        }
        if !(0.0..=1.0).contains(&self.gps_rate) {
            return fail("gps_rate must be in [0,1]");
        }
        check_distribution("category_mix", &self.category_mix)?;
        check_distribution("tier_mix", &self.tier_mix)?;
        let parts = catalog_partitions(self.catalog_size);
        for (c, p) in &self.category_mix {
            if *p > 0.0 && parts[c.index()].1 == 0 {
                return fail("catalog_size too small for the categories in category_mix");
            }
        }
        Ok(())
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            min_ts: TRACE_START,
            max_ts: TRACE_START + i64::from(self.weeks) * SECONDS_PER_WEEK - 1,
        }
    }
}

/// `(first file id, file count)` for each category, in [`Category::ALL`] order.
fn catalog_partitions(catalog_size: u64) -> [(u64, u64); 5] {
    let base = catalog_size / 5;
    let extra = catalog_size % 5;
    let mut out = [(0, 0); 5];
    let mut start = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        let len = base + u64::from((i as u64) < extra);
        *slot = (start, len);
        start += len;
    }
    out
}

/// Deterministic size of a file, uniform within its category's range.
pub fn file_size(rng_seed: u64, file: u64, category: Category) -> u64 {
    let (lo, hi): (u64, u64) = match category {
        Category::App => (2 << 20, 60 << 20),
        Category::Video => (10 << 20, 400 << 20),
        Category::Music => (2 << 20, 12 << 20),
        Category::Image => (100 << 10, 6 << 20),
        Category::Other => (10 << 10, 20 << 20),
    };
    lo + mix64(file ^ mix64(rng_seed ^ 0xF11E)) % (hi - lo)
}

/// I.i.d. discrete power-law sizes `P(k) ∝ k^-alpha`, `k >= xmin`, via the
/// continuous inverse transform with half-integer rounding:
/// `floor((xmin - 1/2) (1-u)^(-1/(alpha-1)) + 1/2)`.
pub fn sample_powerlaw_sizes<R: Rng + ?Sized>(
    n: usize,
    alpha: f64,
    xmin: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!("alpha={alpha} must be > 1")));
    }
    if xmin < 1 {
        return Err(Error::InvalidArgument("xmin must be >= 1".into()));
    }
    let scale = xmin as f64 - 0.5;
    let exponent = -1.0 / (alpha - 1.0);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let x = (scale * (1.0 - u).powf(exponent) + 0.5).floor();
            // `as` saturates for huge draws.
            (x as u64).max(xmin)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub group_of: BTreeMap<UserId, GroupId>,
    pub group_sizes: Vec<u64>,
    pub tiers: Vec<RelationshipTier>,
    pub home_cell: BTreeMap<GroupId, GeoPoint>,
    pub event_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    /// Events sorted by `(timestamp, sender, receiver, file)`.
    pub trace: Trace,
    pub ledger: GroundTruthLedger,
}

/// Undirected contact edges `(i, j)` with `i < j` over local indices.
fn group_topology(
    n: usize,
    mean_degree: usize,
    rewire_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    if n <= mean_degree + 1 {
        return (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let half = mean_degree / 2;
    for i in 0..n {
        for d in 1..=half {
            let j = (i + d) % n;
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    // Watts-Strogatz: rewire the far endpoint of each lattice edge.
    for d in 1..=half {
        for i in 0..n {
            let j = (i + d) % n;
            if !adj[i].contains(&j) || !rng.random_bool(rewire_prob) {
                continue;
            }
            if adj[i].len() + 1 >= n {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != i && !adj[i].contains(&w) {
                    break w;
                }
            };
            adj[i].remove(&j);
            adj[j].remove(&i);
            adj[i].insert(w);
            adj[w].insert(i);
        }
    }
    // Rewiring can strand nodes; bridge components by their smallest members.
    let mut uf = UnionFind::new(n);
    for (i, nb) in adj.iter().enumerate() {
        for &j in nb {
            uf.union(i, j);
        }
    }
    let mut reps: Vec<usize> = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 0..n {
        if seen.insert(uf.find(i)) {
            reps.push(i);
        }
    }
    for w in reps.windows(2) {
        adj[w[0]].insert(w[1]);
        adj[w[1]].insert(w[0]);
    }
    adj.iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .collect()
}

struct GroupOutput {
    events: Vec<SharingEvent>,
    tiers: Vec<RelationshipTier>,
    home: GeoPoint,
}

struct Samplers {
    category: WeightedIndex<f64>,
    tier: WeightedIndex<f64>,
    zipf: [Option<Zipf<f64>>; 5],
    parts: [(u64, u64); 5],
}

impl Samplers {
    fn new(config: &GeneratorConfig) -> Result<Self> {
        let weight = |c: &Category| config.category_mix.get(c).copied().unwrap_or(0.0);
        let category = WeightedIndex::new(Category::ALL.iter().map(weight))
            .map_err(|e| Error::Config(format!("category_mix: {e}")))?;
        let tier = WeightedIndex::new(
            Tier::ALL
                .iter()
                .map(|t| config.tier_mix.get(t).copied().unwrap_or(0.0)),
        )
        .map_err(|e| Error::Config(format!("tier_mix: {e}")))?;
        let parts = catalog_partitions(config.catalog_size);
        let mut zipf = [None; 5];
        for (slot, &(_, len)) in zipf.iter_mut().zip(parts.iter()) {
            if len > 0 {
                *slot = Some(
                    Zipf::new(len as f64, config.zipf_s)
                        .map_err(|e| Error::Config(format!("zipf: {e}")))?,
                );
            }
        }
        Ok(Samplers {
            category,
            tier,
            zipf,
            parts,
        })
    }
}

fn generate_group(
    config: &GeneratorConfig,
    samplers: &Samplers,
    header: &TraceHeader,
    index: usize,
    first_user: UserId,
    size: usize,
) -> Result<GroupOutput> {
    let mut rng = substream(config.rng_seed, index as u64);
    let edges = group_topology(size, config.mean_degree, config.rewire_prob, &mut rng);

    let log_normal =
        Normal::new(0.0, ACTIVITY_LOG_SD).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut activity: Vec<f64> = (0..size)
        .map(|_| log_normal.sample(&mut rng).exp())
        .collect();
    let mean_activity = activity.iter().sum::<f64>() / size.max(1) as f64;
    activity.iter_mut().for_each(|a| *a /= mean_activity);

    // A user with activity `a` is still active at span fraction `t` with
    // probability 1 - t^(RETENTION_SHAPE * a).
    let span = (header.max_ts - header.min_ts) as f64;
    let last_active: Vec<Timestamp> = activity
        .iter()
        .map(|&a| {
            header.min_ts
                + (span * rng.random::<f64>().powf(1.0 / (RETENTION_SHAPE * a))) as Timestamp
        })
        .collect();
    let cell = config.gps_cell_deg;
    let home_lat = ((rng.random_range(-60.0..60.0) / cell).floor() + 0.5) * cell;
    let home_lon = ((rng.random_range(-180.0..180.0) / cell).floor() + 0.5) * cell;
    let home = GeoPoint::new(round6(home_lat), round6(home_lon))
        .ok_or_else(|| Error::Invariant("home cell out of bounds".into()))?;
    let jitter = Normal::new(0.0, cell / 2.0).map_err(|e| Error::Config(e.to_string()))?;

    // Each user takes part in `events_per_user_week` events per week on
    // average; each event involves two users. An edge's intensity is the
    // product of its endpoints' activity over their shared active span.
    let shared_end = |i: usize, j: usize| last_active[i].min(last_active[j]);
    let weight = |i: usize, j: usize| {
        (shared_end(i, j) - header.min_ts + 1) as f64 * activity[i] * activity[j]
    };
    let weight_sum: f64 = edges.iter().map(|&(i, j)| weight(i, j)).sum();
    let group_rate = size as f64 * config.events_per_user_week / 2.0 * f64::from(config.weeks);

    let mut events = Vec::new();
    let mut tiers = Vec::with_capacity(edges.len());
    for &(i, j) in &edges {
        let (u, v) = (first_user + i as u64, first_user + j as u64);
        tiers.push(
            RelationshipTier::new(u, v, Tier::ALL[samplers.tier.sample(&mut rng)])
                .ok_or_else(|| Error::Invariant("self edge in topology".into()))?,
        );
        let lambda = group_rate * weight(i, j) / weight_sum;
        let count = Poisson::new(lambda)
            .map_err(|e| Error::Invariant(format!("poisson rate {lambda}: {e}")))?
            .sample(&mut rng) as u64;
        let p_i_sends = activity[i] / (activity[i] + activity[j]);
        // Forced event keeps every topology edge observable.
        for _ in 0..count.max(1) {
            let timestamp = rng.random_range(header.min_ts..=shared_end(i, j));
            let (sender, receiver) = if rng.random_bool(p_i_sends) {
                (u, v)
            } else {
                (v, u)
            };
            let category = Category::ALL[samplers.category.sample(&mut rng)];
            let (base, _) = samplers.parts[category.index()];
            let rank = samplers.zipf[category.index()]
                .as_ref()
                .ok_or_else(|| Error::Invariant("empty catalog partition".into()))?
                .sample(&mut rng) as u64;
            let file = base + rank - 1;
            let geo = if rng.random_bool(config.gps_rate) {
                let lat = (home.lat + jitter.sample(&mut rng)).clamp(-90.0, 90.0);
                let lon = (home.lon + jitter.sample(&mut rng)).clamp(-180.0, 180.0);
                GeoPoint::new(round6(lat), round6(lon))
            } else {
                None
            };
            events.push(SharingEvent {
                timestamp,
                sender,
                receiver,
                file,
                size_bytes: file_size(config.rng_seed, file, category),
                category,
                geo,
            });
        }
    }
    Ok(GroupOutput {
        events,
        tiers,
        home,
    })
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Generates a trace with power-law group sizes drawn from the config seed.
pub fn generate_trace(config: &GeneratorConfig) -> Result<SyntheticTrace> {
    config.validate()?;
    let mut rng = substream(config.rng_seed, u64::MAX);
    let sizes = sample_powerlaw_sizes(
        config.num_groups,
        config.size_alpha,
        config.size_xmin,
        &mut rng,
    )?;
    generate_trace_with_sizes(config, &sizes)
}

/// Generates a trace with explicitly given group sizes (any size >= 1).
/// User ids are assigned consecutively, group by group.
pub fn generate_trace_with_sizes(
    config: &GeneratorConfig,
    sizes: &[u64],
) -> Result<SyntheticTrace> {
    let total: u64 = sizes.iter().fold(0u64, |acc, &s| acc.saturating_add(s));
    if total > MAX_TOTAL_USERS {
        return Err(Error::Config(format!(
            "{total} users exceeds the limit of {MAX_TOTAL_USERS}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config("group sizes must be positive".into()));
    }
    let samplers = Samplers::new(config)?;
    let header = config.header();
    let mut first_user = Vec::with_capacity(sizes.len());
    let mut next = 0u64;
    for &s in sizes {
        first_user.push(next);
        next += s;
    }
    let groups: Vec<GroupOutput> = (0..sizes.len())
        .into_par_iter()
        .map(|g| {
            generate_group(
                config,
                &samplers,
                &header,
                g,
                first_user[g],
                sizes[g] as usize,
            )
        })
        .collect::<Result<_>>()?;

    let mut ledger = GroundTruthLedger {
        group_of: BTreeMap::new(),
        group_sizes: sizes.to_vec(),
        tiers: Vec::new(),
        home_cell: BTreeMap::new(),
        event_count: 0,
    };
    let mut events = Vec::with_capacity(groups.iter().map(|g| g.events.len()).sum());
    for (g, out) in groups.into_iter().enumerate() {
        let gid = first_user[g];
        for u in gid..gid + sizes[g] {
            ledger.group_of.insert(u, gid);
        }
        ledger.home_cell.insert(gid, out.home);
        ledger.tiers.extend(out.tiers);
        events.extend(out.events);
    }
    events.par_sort_by_key(|e| (e.timestamp, e.sender, e.receiver, e.file));
    ledger.tiers.sort_by_key(|t| (t.user_a, t.user_b));
    ledger.event_count = events.len() as u64;
    Ok(SyntheticTrace {
        trace: Trace { header, events },
        ledger,
    })
}
