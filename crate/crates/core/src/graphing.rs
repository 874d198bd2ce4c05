//! Encounter graph construction and grouping by encounter components.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::trace::{canonical_pair, SharingEvent, Timestamp, UserId};

pub type GroupId = UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub event_count: u64,
    pub total_bytes: u64,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
}

impl EdgeStats {
    fn from_event(ev: &SharingEvent) -> Self {
        EdgeStats {
            event_count: 1,
            total_bytes: ev.size_bytes,
            first_ts: ev.timestamp,
            last_ts: ev.timestamp,
        }
    }

    fn merge(&mut self, other: &EdgeStats) {
        self.event_count += other.event_count;
        self.total_bytes += other.total_bytes;
        self.first_ts = self.first_ts.min(other.first_ts);
        self.last_ts = self.last_ts.max(other.last_ts);
    }
}

/// Simple undirected graph over dense indices `0..n`, with the user id of
/// each index. Ids are sorted ascending and adjacency lists are sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    ids: Vec<UserId>,
    index: HashMap<UserId, u32>,
    adj: Vec<Vec<u32>>,
}

impl Topology {
    /// Builds a topology from node ids and undirected edges. Self-loops and
    /// duplicate edges are dropped; edge endpoints are added as nodes.
    pub fn from_edges<N, E>(nodes: N, edges: E) -> Self
    where
        N: IntoIterator<Item = UserId>,
        E: IntoIterator<Item = (UserId, UserId)>,
    {
        let edges: Vec<(UserId, UserId)> = edges.into_iter().filter(|(u, v)| u != v).collect();
        let mut ids: Vec<UserId> = nodes.into_iter().collect();
        ids.extend(edges.iter().flat_map(|&(u, v)| [u, v]));
        ids.sort_unstable();
        ids.dedup();
        let index: HashMap<UserId, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as u32))
            .collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for (u, v) in edges {
            let (a, b) = (index[&u], index[&v]);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Topology { ids, index, adj }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[UserId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> UserId {
        self.ids[i]
    }

    pub fn index_of(&self, u: UserId) -> Option<usize> {
        self.index.get(&u).map(|&i| i as usize)
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&(j as u32)).is_ok()
    }

    /// Induced subgraph on `members` (ids not in the topology are kept as
    /// isolated nodes).
    pub fn induced(&self, members: &[UserId]) -> Topology {
        let mut edges = Vec::new();
        for &u in members {
            if let Some(i) = self.index_of(u) {
                for &j in &self.adj[i] {
                    let v = self.ids[j as usize];
                    if u < v && members.binary_search(&v).is_ok() {
                        edges.push((u, v));
                    }
                }
            }
        }
        Topology::from_edges(members.iter().copied(), edges)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EncounterGraph {
    topology: Topology,
    edges: HashMap<(UserId, UserId), EdgeStats>,
}

impl EncounterGraph {
    /// Aggregates events into one edge per unordered user pair.
    pub fn build(events: &[SharingEvent]) -> Self {
        let edges = events
            .par_chunks(1 << 14)
            .map(|chunk| {
                let mut map: HashMap<(UserId, UserId), EdgeStats> = HashMap::new();
                for ev in chunk.iter().filter(|e| e.sender != e.receiver) {
                    let stats = EdgeStats::from_event(ev);
                    map.entry(ev.pair())
                        .and_modify(|s| s.merge(&stats))
                        .or_insert(stats);
                }
                map
            })
            .reduce(HashMap::new, |a, b| {
                let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
                for (k, s) in small {
                    big.entry(k).and_modify(|e| e.merge(&s)).or_insert(s);
                }
                big
            });
        let topology = Topology::from_edges(std::iter::empty(), edges.keys().copied());
        EncounterGraph { topology, edges }
    }

    /// Graph with unit edge stats, for callers that only need topology.
    pub fn from_edges<N, E>(nodes: N, edges: E) -> Self
    where
        N: IntoIterator<Item = UserId>,
        E: IntoIterator<Item = (UserId, UserId)>,
    {
        let mut map = HashMap::new();
        for (u, v) in edges.into_iter().filter(|(u, v)| u != v) {
            map.insert(
                canonical_pair(u, v),
                EdgeStats {
                    event_count: 1,
                    total_bytes: 0,
                    first_ts: 0,
                    last_ts: 0,
                },
            );
        }
        let topology = Topology::from_edges(nodes, map.keys().copied());
        EncounterGraph {
            topology,
            edges: map,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn nodes(&self) -> &[UserId] {
        self.topology.ids()
    }

    pub fn contains(&self, u: UserId) -> bool {
        self.topology.index_of(u).is_some()
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, u: UserId, v: UserId) -> Option<&EdgeStats> {
        self.edges.get(&canonical_pair(u, v))
    }

    /// Edges sorted by pair.
    pub fn sorted_edges(&self) -> Vec<((UserId, UserId), EdgeStats)> {
        let mut out: Vec<_> = self.edges.iter().map(|(&k, &v)| (k, v)).collect();
        out.sort_unstable_by_key(|(k, _)| *k);
        out
    }

    pub fn neighbors(&self, u: UserId) -> impl Iterator<Item = UserId> + '_ {
        let list: &[u32] = match self.topology.index_of(u) {
            Some(i) => self.topology.neighbors(i),
            None => &[],
        };
        list.iter().map(|&j| self.topology.id(j as usize))
    }

    pub fn degree(&self, u: UserId) -> usize {
        self.topology
            .index_of(u)
            .map_or(0, |i| self.topology.degree(i))
    }

    /// Sum of event counts over incident edges.
    pub fn strength(&self, u: UserId) -> u64 {
        self.neighbors(u)
            .map(|v| self.edges[&canonical_pair(u, v)].event_count)
            .sum()
    }
}

/// Disjoint-set forest with union by size and full path compression.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    /// Sorted ascending; `id` is the first member.
    pub members: Vec<UserId>,
}

impl Group {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, u: UserId) -> bool {
        self.members.binary_search(&u).is_ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupPartition {
    /// Sorted by group id.
    pub groups: Vec<Group>,
    pub group_of: HashMap<UserId, GroupId>,
}

impl GroupPartition {
    pub fn group(&self, id: GroupId) -> Option<&Group> {
        self.groups
            .binary_search_by_key(&id, |g| g.id)
            .ok()
            .map(|i| &self.groups[i])
    }

    pub fn group_of(&self, u: UserId) -> Option<GroupId> {
        self.group_of.get(&u).copied()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Connected components of the encounter graph, via union-find.
/// Group ids are the smallest member id; groups are ordered by id.
pub fn compute_groups(graph: &EncounterGraph) -> GroupPartition {
    let topo = graph.topology();
    let n = topo.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for &j in topo.neighbors(i) {
            if (j as usize) > i {
                uf.union(i, j as usize);
            }
        }
    }
    // Ids are sorted, so the first index seen for a root is its smallest member.
    let mut slot_of_root: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        let slot = *slot_of_root.entry(root).or_insert_with(|| {
            groups.push(Group {
                id: topo.id(i),
                members: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].members.push(topo.id(i));
    }
    let group_of = groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |&u| (u, g.id)))
        .collect();
    GroupPartition { groups, group_of }
}

pub fn group_size_histogram(partition: &GroupPartition) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for g in &partition.groups {
        *hist.entry(g.size()).or_insert(0) += 1;
    }
    hist
}
