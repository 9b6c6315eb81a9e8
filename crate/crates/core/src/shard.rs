//! Transaction grouping (G1-G4), the seeded hash-ranking node selector,
//! and the horizontal shard map with periodic redistribution.
//!
//! The selector is a pure function of (seed, cycle, tag, pool): nodes are
//! ranked by `digest(seed || cycle || tag || node_id)` and the k smallest
//! win. Replaying a scenario reproduces every assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{hash_parts, AccountId, Digest, LedgerError, NodeId, PayloadKind,
    SignedTransaction};

/// The four transaction/node partitions: smart-contract accounts,
/// transfers, receipts, others.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum GroupId {
    G1,
    G2,
    G3,
    G4,
}

pub const ALL_GROUPS: [GroupId; 4] = [GroupId::G1, GroupId::G2, GroupId::G3, GroupId::G4];

impl GroupId {
    pub fn tag(self) -> u8 {
        match self {
            GroupId::G1 => 1,
            GroupId::G2 => 2,
            GroupId::G3 => 3,
            GroupId::G4 => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<GroupId, LedgerError> {
        Ok(match tag {
            1 => GroupId::G1,
            2 => GroupId::G2,
            3 => GroupId::G3,
            4 => GroupId::G4,
            other => return Err(LedgerError::Decode(format!("bad group tag {other}"))),
        })
    }

    pub fn index(self) -> usize {
        self.tag() as usize - 1
    }
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "G{}", self.tag())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShardError {
    #[error("selector needs {need} nodes but only {have} are available")]
    InsufficientNodes { need: usize, have: usize },
}

/// Total classification: contract targets to G1, plain transfers to G2,
/// receipt payloads to G3, everything else to G4.
pub fn classify_group(
    tx: &SignedTransaction,
    is_contract: impl Fn(&AccountId) -> bool,
) -> GroupId {
    if is_contract(&tx.to) || tx.payload.kind == PayloadKind::ContractCall {
        GroupId::G1
    } else if tx.payload.kind == PayloadKind::Transfer {
        GroupId::G2
    } else if tx.payload.kind == PayloadKind::Receipt {
        GroupId::G3
    } else {
        GroupId::G4
    }
}

/// Ranking digest for one node within one (seed, cycle, tag) draw.
pub fn selector_rank(seed: u64, cycle: u64, tag: &[u8], node: &NodeId) -> Digest {
    hash_parts(&[
        &seed.to_be_bytes(),
        &cycle.to_be_bytes(),
        tag,
        node.0.as_bytes(),
    ])
}

/// Deterministic custom random node selector: k lowest-ranked nodes.
pub fn select_validators(
    seed: u64,
    cycle: u64,
    tag: &[u8],
    nodes: &[NodeId],
    k: usize,
) -> Result<Vec<NodeId>, ShardError> {
    if nodes.is_empty() || k > nodes.len() {
        return Err(ShardError::InsufficientNodes {
            need: k.max(1),
            have: nodes.len(),
        });
    }
    let mut ranked: Vec<(Digest, &NodeId)> = nodes
        .iter()
        .map(|n| (selector_rank(seed, cycle, tag, n), n))
        .collect();
    ranked.sort();
    Ok(ranked.into_iter().take(k).map(|(_, n)| n.clone()).collect())
}

/// Per-cycle disjoint validator sets for the four groups.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GroupAssignment {
    pub cycle: u64,
    pub group_map: BTreeMap<GroupId, Vec<NodeId>>,
}

impl GroupAssignment {
    pub fn group_sizes(&self) -> [usize; 4] {
        let mut sizes = [0usize; 4];
        for (g, members) in &self.group_map {
            sizes[g.index()] = members.len();
        }
        sizes
    }
}

/// Partition the active set into four disjoint groups of equal size via
/// sequential selector draws (surplus nodes sit the cycle out).
pub fn assign_groups(
    seed: u64,
    cycle: u64,
    active: &[NodeId],
    min_size: usize,
) -> Result<GroupAssignment, ShardError> {
    let per_group = active.len() / ALL_GROUPS.len();
    if per_group < min_size {
        return Err(ShardError::InsufficientNodes {
            need: min_size * ALL_GROUPS.len(),
            have: active.len(),
        });
    }
    let mut pool: Vec<NodeId> = active.to_vec();
    let mut group_map = BTreeMap::new();
    for g in ALL_GROUPS {
        let chosen = select_validators(seed, cycle, &[b'g', g.tag()], &pool, per_group)?;
        pool.retain(|n| !chosen.contains(n));
        group_map.insert(g, chosen);
    }
    Ok(GroupAssignment { cycle, group_map })
}

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
pub struct ShardId(pub u32);

impl std::fmt::Display for ShardId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// Digest-prefix range partition with replicated shard homes.
///
/// Ranges partition the 16-bit digest prefix space with no gaps or
/// overlaps; every shard has exactly `replication` homes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ShardMap {
    /// (start_prefix_inclusive, end_prefix_exclusive, shard); ordered,
    /// bounds in 0..=65536.
    pub ranges: Vec<(u32, u32, ShardId)>,
    pub shard_homes: BTreeMap<ShardId, Vec<NodeId>>,
    pub replication: usize,
}

impl ShardMap {
    /// Even prefix partition into `count` shards; homes drawn from the
    /// node list via the selector at cycle 0.
    pub fn new(count: u32, replication: usize, seed: u64, nodes: &[NodeId]) -> Result<ShardMap, ShardError> {
        assert!(count > 0);
        let space = 1u32 << 16;
        let mut ranges = Vec::with_capacity(count as usize);
        for i in 0..count {
            let start = (u64::from(i) * u64::from(space) / u64::from(count)) as u32;
            let end = (u64::from(i + 1) * u64::from(space) / u64::from(count)) as u32;
            ranges.push((start, end, ShardId(i)));
        }
        let mut map = ShardMap {
            ranges,
            shard_homes: BTreeMap::new(),
            replication,
        };
        map.shard_homes = draw_homes(seed, 0, &map, nodes)?;
        Ok(map)
    }
}

fn draw_homes(
    seed: u64,
    cycle: u64,
    map: &ShardMap,
    nodes: &[NodeId],
) -> Result<BTreeMap<ShardId, Vec<NodeId>>, ShardError> {
    let mut homes = BTreeMap::new();
    for &(_, _, shard) in &map.ranges {
        let mut tag = b"shard".to_vec();
        tag.extend_from_slice(&shard.0.to_be_bytes());
        homes.insert(
            shard,
            select_validators(seed, cycle, &tag, nodes, map.replication)?,
        );
    }
    Ok(homes)
}

/// The unique range containing the key's 16-bit prefix.
pub fn shard_for_key(key: &Digest, map: &ShardMap) -> ShardId {
    let prefix = u32::from(u16::from_be_bytes([key.0[0], key.0[1]]));
    for &(start, end, shard) in &map.ranges {
        if prefix >= start && prefix < end {
            return shard;
        }
    }
    // unreachable by the partition invariant; the last range is [.., 65536)
    map.ranges.last().map(|r| r.2).unwrap_or(ShardId(0))
}

/// One scheduled data move produced by a rebalance.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ShardMove {
    pub shard: ShardId,
    pub from: NodeId,
    pub to: NodeId,
}

pub type RedistributionPlan = Vec<ShardMove>;

/// Re-draw shard homes at a rebalance boundary; the range partition is
/// left untouched, only homes move.
pub fn rebalance(
    seed: u64,
    cycle: u64,
    map: &ShardMap,
    nodes: &[NodeId],
) -> Result<(ShardMap, RedistributionPlan), ShardError> {
    let new_homes = draw_homes(seed, cycle, map, nodes)?;
    let mut plan = Vec::new();
    for (&shard, new) in &new_homes {
        let old = map.shard_homes.get(&shard).cloned().unwrap_or_default();
        let departing: Vec<&NodeId> = old.iter().filter(|n| !new.contains(n)).collect();
        let arriving: Vec<&NodeId> = new.iter().filter(|n| !old.contains(n)).collect();
        for (from, to) in departing.iter().zip(arriving.iter()) {
            plan.push(ShardMove {
                shard,
                from: (*from).clone(),
                to: (*to).clone(),
            });
        }
    }
    let mut new_map = map.clone();
    new_map.shard_homes = new_homes;
    Ok((new_map, plan))
}
