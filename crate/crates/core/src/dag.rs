//! Blockless DAG mempool: admits signed transactions as vertices, keeps
//! the cycle counter, and maintains the four indexed views (global state,
//! transaction, storage, parsing) as consistent projections of the single
//! vertex store.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ledger::{hash_transaction, verify_signature, AccountId, Digest, SignedTransaction};
use crate::shard::{GroupId, ShardId};

pub type VertexId = usize;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum VertexStatus {
    Pending,
    Assigned,
    Validated,
    Finalized,
    Rejected,
}

impl VertexStatus {
    pub fn transition_allowed(self, next: VertexStatus) -> bool {
        use VertexStatus::*;
        matches!(
            (self, next),
            (Pending, Assigned)
                | (Assigned, Validated)
                | (Validated, Finalized)
                | (Pending, Rejected)
                | (Assigned, Rejected)
                | (Validated, Rejected)
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            VertexStatus::Pending => "pending",
            VertexStatus::Assigned => "assigned",
            VertexStatus::Validated => "validated",
            VertexStatus::Finalized => "finalized",
            VertexStatus::Rejected => "rejected",
        }
    }
}

/// A transaction's position in the blockless DAG.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DagVertex {
    pub id: VertexId,
    pub tx_hash: Digest,
    pub parents: Vec<VertexId>,
    /// Cycle counter at admission.
    pub cycle: u64,
    pub group: GroupId,
    pub status: VertexStatus,
    pub sender: AccountId,
    pub to: AccountId,
    pub shard: ShardId,
    pub validated_cycle: Option<u64>,
    pub finalized_cycle: Option<u64>,
    pub rejected_cycle: Option<u64>,
}

/// The four indexed projections of the vertex store.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct DagViews {
    /// account -> hash of the latest admitted transaction touching it.
    pub global_state_view: BTreeMap<AccountId, Digest>,
    pub tx_view: BTreeMap<Digest, VertexId>,
    pub storage_view: BTreeMap<ShardId, Vec<Digest>>,
    /// cycle -> state-change entries ordered by (vertex id, stage).
    pub parsing_index: BTreeMap<u64, Vec<(VertexId, VertexStatus)>>,
}

impl DagViews {
    fn record_admission(&mut self, v: &DagVertex) {
        self.global_state_view.insert(v.sender, v.tx_hash);
        self.global_state_view.insert(v.to, v.tx_hash);
        self.tx_view.insert(v.tx_hash, v.id);
        let keys = self.storage_view.entry(v.shard).or_default();
        match keys.binary_search(&v.tx_hash) {
            Ok(_) => {}
            Err(pos) => keys.insert(pos, v.tx_hash),
        }
    }

    fn record_state_change(&mut self, cycle: u64, id: VertexId, stage: VertexStatus) {
        let entries = self.parsing_index.entry(cycle).or_default();
        let key = (id, stage);
        match entries.binary_search(&key) {
            Ok(_) => {}
            Err(pos) => entries.insert(pos, key),
        }
    }
}

/// Per-cycle batch of newly assigned vertices, partitioned by group.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CycleBatch {
    pub cycle: u64,
    pub groups: BTreeMap<GroupId, Vec<VertexId>>,
}

impl CycleBatch {
    pub fn is_empty(&self) -> bool {
        self.groups.values().all(|v| v.is_empty())
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(|v| v.len()).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("transaction already present in the pool")]
    DuplicateTransaction,
    #[error("transaction signature does not verify")]
    BadSignature,
    #[error("nonce gap: expected {expected}, got {got}")]
    NonceGap { expected: u64, got: u64 },
    #[error("illegal status transition {from:?} -> {to:?}")]
    IllegalTransition { from: VertexStatus, to: VertexStatus },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
}

#[derive(Clone, Debug, Default)]
pub struct DagPool {
    vertices: Vec<DagVertex>,
    cycle: u64,
    views: DagViews,
    children: Vec<Vec<VertexId>>,
    validated_children: Vec<usize>,
}

impl DagPool {
    pub fn new() -> DagPool {
        DagPool::default()
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&DagVertex> {
        self.vertices.get(id)
    }

    pub fn vertices(&self) -> &[DagVertex] {
        &self.vertices
    }

    pub fn views(&self) -> &DagViews {
        &self.views
    }

    pub fn vertex_by_hash(&self, tx_hash: &Digest) -> Option<&DagVertex> {
        self.views
            .tx_view
            .get(tx_hash)
            .and_then(|&id| self.vertices.get(id))
    }

    /// Admit a verified transaction as a new Pending vertex. Parents are
    /// up to two unvalidated tips, oldest admission index first.
    pub fn insert_transaction(
        &mut self,
        tx: &SignedTransaction,
        expected_nonce: u64,
        group: GroupId,
        shard: ShardId,
    ) -> Result<VertexId, DagError> {
        if !verify_signature(tx) {
            return Err(DagError::BadSignature);
        }
        let tx_hash = hash_transaction(tx);
        if self.views.tx_view.contains_key(&tx_hash) {
            return Err(DagError::DuplicateTransaction);
        }
        if tx.nonce != expected_nonce {
            return Err(DagError::NonceGap {
                expected: expected_nonce,
                got: tx.nonce,
            });
        }
        let parents = self.frontier(2);
        let id = self.vertices.len();
        let vertex = DagVertex {
            id,
            tx_hash,
            parents,
            cycle: self.cycle,
            group,
            status: VertexStatus::Pending,
            sender: tx.sender,
            to: tx.to,
            shard,
            validated_cycle: None,
            finalized_cycle: None,
            rejected_cycle: None,
        };
        self.views.record_admission(&vertex);
        self.vertices.push(vertex);
        self.children.push(Vec::new());
        self.validated_children.push(0);
        for p in self.vertices[id].parents.clone() {
            self.children[p].push(id);
        }
        debug_assert!(self.is_acyclic_from(id));
        Ok(id)
    }

    /// The k oldest non-rejected vertices with no validated children.
    pub fn frontier(&self, k: usize) -> Vec<VertexId> {
        let mut out = Vec::with_capacity(k);
        for v in &self.vertices {
            if out.len() == k {
                break;
            }
            if v.status != VertexStatus::Rejected && self.validated_children[v.id] == 0 {
                out.push(v.id);
            }
        }
        out
    }

    /// Advance the cycle counter and hand out every Pending vertex,
    /// marked Assigned and partitioned by group.
    pub fn advance_cycle(&mut self) -> CycleBatch {
        self.cycle += 1;
        let mut groups: BTreeMap<GroupId, Vec<VertexId>> = BTreeMap::new();
        let pending: Vec<VertexId> = self
            .vertices
            .iter()
            .filter(|v| v.status == VertexStatus::Pending)
            .map(|v| v.id)
            .collect();
        for id in pending {
            self.vertices[id].status = VertexStatus::Assigned;
            groups.entry(self.vertices[id].group).or_default().push(id);
        }
        CycleBatch {
            cycle: self.cycle,
            groups,
        }
    }

    pub fn mark_status(&mut self, id: VertexId, status: VertexStatus) -> Result<&DagVertex, DagError> {
        let current = self
            .vertices
            .get(id)
            .ok_or(DagError::UnknownVertex(id))?
            .status;
        if !current.transition_allowed(status) {
            return Err(DagError::IllegalTransition {
                from: current,
                to: status,
            });
        }
        let cycle = self.cycle;
        match status {
            VertexStatus::Validated => {
                self.vertices[id].validated_cycle = Some(cycle);
                self.views.record_state_change(cycle, id, status);
                for p in self.vertices[id].parents.clone() {
                    self.validated_children[p] += 1;
                }
            }
            VertexStatus::Finalized => {
                self.vertices[id].finalized_cycle = Some(cycle);
                self.views.record_state_change(cycle, id, status);
            }
            VertexStatus::Rejected => {
                self.vertices[id].rejected_cycle = Some(cycle);
                // a vertex validated then vetoed no longer counts as a
                // validated child for tip purposes
                if self.vertices[id].validated_cycle.is_some() {
                    for p in self.vertices[id].parents.clone() {
                        self.validated_children[p] -= 1;
                    }
                }
            }
            _ => {}
        }
        self.vertices[id].status = status;
        Ok(&self.vertices[id])
    }

    /// Depth-first walk over parents; terminates iff acyclic.
    fn is_acyclic_from(&self, id: VertexId) -> bool {
        let mut stack = vec![id];
        let mut visited = vec![false; self.vertices.len()];
        while let Some(v) = stack.pop() {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            for &p in &self.vertices[v].parents {
                // parents always precede children in admission order
                if p >= v {
                    return false;
                }
                stack.push(p);
            }
        }
        true
    }

    /// Recompute all four views from the vertex store alone.
    pub fn rebuild_views(&self) -> DagViews {
        let mut views = DagViews::default();
        for v in &self.vertices {
            views.record_admission(v);
        }
        for v in &self.vertices {
            if let Some(c) = v.validated_cycle {
                views.record_state_change(c, v.id, VertexStatus::Validated);
            }
            if let Some(c) = v.finalized_cycle {
                views.record_state_change(c, v.id, VertexStatus::Finalized);
            }
        }
        views
    }

    /// Line-oriented debug export for golden-trace tests:
    /// `vertex_id parent_ids cycle group status tx_hash`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let parents = if v.parents.is_empty() {
                "-".to_string()
            } else {
                v.parents
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                v.id,
                parents,
                v.cycle,
                v.group,
                v.status.label(),
                v.tx_hash
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{hash_parts, sign_transaction, Keypair, TxPayload};

    struct TestChain {
        key: Keypair,
        nonce: u64,
    }

    impl TestChain {
        fn new(tag: u8) -> TestChain {
            TestChain {
                key: Keypair::from_seed(&hash_parts(&[b"dag-test", &[tag]])),
                nonce: 0,
            }
        }

        fn tx(&mut self) -> (SignedTransaction, u64) {
            let nonce = self.nonce;
            self.nonce += 1;
            let tx = SignedTransaction::new(
                self.key.account_id(),
                Keypair::from_seed(&hash_parts(&[b"dest"])).account_id(),
                1 + nonce,
                nonce,
                TxPayload::transfer(),
                None,
            );
            (sign_transaction(tx, &self.key).unwrap(), nonce)
        }
    }

    fn insert(pool: &mut DagPool, sender: &mut TestChain, group: GroupId) -> VertexId {
        let (tx, nonce) = sender.tx();
        pool.insert_transaction(&tx, nonce, group, ShardId(0)).unwrap()
    }

    /// Brute-force tip oracle: non-rejected vertices with no validated
    /// children, oldest first.
    fn frontier_oracle(pool: &DagPool, k: usize) -> Vec<VertexId> {
        let vs = pool.vertices();
        let mut out = Vec::new();
        for v in vs {
            if v.status == VertexStatus::Rejected {
                continue;
            }
            let has_validated_child = vs.iter().any(|c| {
                c.parents.contains(&v.id)
                    && matches!(c.status, VertexStatus::Validated | VertexStatus::Finalized)
            });
            if !has_validated_child {
                out.push(v.id);
            }
            if out.len() == k {
                break;
            }
        }
        out
    }

    #[test]
    fn first_insert_has_no_parents() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let id = insert(&mut pool, &mut s, GroupId::G2);
        assert!(pool.vertex(id).unwrap().parents.is_empty());
    }

    #[test]
    fn third_insert_takes_two_earliest_tips() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let v0 = insert(&mut pool, &mut s, GroupId::G2);
        let v1 = insert(&mut pool, &mut s, GroupId::G2);
        let v2 = insert(&mut pool, &mut s, GroupId::G2);
        // hand-traced: both earlier vertices are still unvalidated tips
        assert_eq!(pool.vertex(v1).unwrap().parents, vec![v0]);
        assert_eq!(pool.vertex(v2).unwrap().parents, vec![v0, v1]);
    }

    #[test]
    fn duplicate_insert_rejected() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let (tx, nonce) = s.tx();
        pool.insert_transaction(&tx, nonce, GroupId::G2, ShardId(0)).unwrap();
        assert_eq!(
            pool.insert_transaction(&tx, nonce + 1, GroupId::G2, ShardId(0)),
            Err(DagError::DuplicateTransaction)
        );
    }

    #[test]
    fn unsigned_insert_rejected() {
        let mut pool = DagPool::new();
        let s = TestChain::new(0);
        let tx = SignedTransaction::new(
            s.key.account_id(),
            s.key.account_id(),
            1,
            0,
            TxPayload::transfer(),
            None,
        );
        assert_eq!(
            pool.insert_transaction(&tx, 0, GroupId::G2, ShardId(0)),
            Err(DagError::BadSignature)
        );
    }

    #[test]
    fn nonce_gap_rejected() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let (tx, _) = s.tx();
        assert_eq!(
            pool.insert_transaction(&tx, 5, GroupId::G2, ShardId(0)),
            Err(DagError::NonceGap { expected: 5, got: 0 })
        );
    }

    #[test]
    fn empty_pool_batch_still_increments_cycle() {
        let mut pool = DagPool::new();
        let batch = pool.advance_cycle();
        assert!(batch.is_empty());
        assert_eq!(batch.cycle, 1);
        assert_eq!(pool.cycle(), 1);
    }

    #[test]
    fn batch_partitions_pending_by_group() {
        let mut pool = DagPool::new();
        let mut a = TestChain::new(0);
        let mut b = TestChain::new(1);
        // hand trace: 3 into G1, 2 into G2
        let g1: Vec<VertexId> = (0..3).map(|_| insert(&mut pool, &mut a, GroupId::G1)).collect();
        let g2: Vec<VertexId> = (0..2).map(|_| insert(&mut pool, &mut b, GroupId::G2)).collect();
        let batch = pool.advance_cycle();
        assert_eq!(batch.groups[&GroupId::G1], g1);
        assert_eq!(batch.groups[&GroupId::G2], g2);
        for id in g1.iter().chain(&g2) {
            assert_eq!(pool.vertex(*id).unwrap().status, VertexStatus::Assigned);
        }
    }

    #[test]
    fn second_batch_without_inserts_is_empty() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        insert(&mut pool, &mut s, GroupId::G2);
        assert_eq!(pool.advance_cycle().len(), 1);
        assert!(pool.advance_cycle().is_empty());
        assert_eq!(pool.cycle(), 2);
    }

    #[test]
    fn status_lattice_enforced() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let id = insert(&mut pool, &mut s, GroupId::G2);
        pool.mark_status(id, VertexStatus::Assigned).unwrap();
        pool.mark_status(id, VertexStatus::Validated).unwrap();
        // constructor veto path
        pool.mark_status(id, VertexStatus::Rejected).unwrap();
        assert_eq!(
            pool.mark_status(id, VertexStatus::Pending),
            Err(DagError::IllegalTransition {
                from: VertexStatus::Rejected,
                to: VertexStatus::Pending
            })
        );
    }

    #[test]
    fn finalized_cannot_regress() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let id = insert(&mut pool, &mut s, GroupId::G2);
        pool.mark_status(id, VertexStatus::Assigned).unwrap();
        pool.mark_status(id, VertexStatus::Validated).unwrap();
        pool.mark_status(id, VertexStatus::Finalized).unwrap();
        assert!(pool.mark_status(id, VertexStatus::Pending).is_err());
        assert!(pool.mark_status(id, VertexStatus::Rejected).is_err());
    }

    #[test]
    fn frontier_empty_and_single() {
        let mut pool = DagPool::new();
        assert!(pool.frontier(3).is_empty());
        let mut s = TestChain::new(0);
        let id = insert(&mut pool, &mut s, GroupId::G2);
        assert_eq!(pool.frontier(3), vec![id]);
    }

    #[test]
    fn frontier_matches_brute_force_on_crafted_dag() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let ids: Vec<VertexId> = (0..6).map(|_| insert(&mut pool, &mut s, GroupId::G2)).collect();
        pool.advance_cycle();
        // validate v2 (child of v0, v1): v0 and v1 drop out of the frontier
        pool.mark_status(ids[2], VertexStatus::Validated).unwrap();
        assert_eq!(pool.frontier(6), frontier_oracle(&pool, 6));
        // reject v3: it drops out as well
        pool.mark_status(ids[3], VertexStatus::Rejected).unwrap();
        assert_eq!(pool.frontier(6), frontier_oracle(&pool, 6));
        assert_eq!(pool.frontier(2), frontier_oracle(&pool, 2));
    }

    #[test]
    fn views_rebuild_consistently_after_op_sequence() {
        let mut pool = DagPool::new();
        let mut a = TestChain::new(0);
        let mut b = TestChain::new(1);
        for i in 0..10 {
            let group = if i % 2 == 0 { GroupId::G2 } else { GroupId::G3 };
            let chain = if i % 3 == 0 { &mut a } else { &mut b };
            let (tx, nonce) = chain.tx();
            pool.insert_transaction(&tx, nonce, group, ShardId(i % 4)).unwrap();
        }
        let batch = pool.advance_cycle();
        for ids in batch.groups.values() {
            for &id in ids {
                pool.mark_status(id, VertexStatus::Validated).unwrap();
            }
        }
        pool.advance_cycle();
        for v in 0..pool.len() {
            if pool.vertex(v).unwrap().status == VertexStatus::Validated && v % 2 == 0 {
                pool.mark_status(v, VertexStatus::Finalized).unwrap();
            }
        }
        assert_eq!(*pool.views(), pool.rebuild_views());
    }

    #[test]
    fn every_vertex_lands_in_exactly_one_batch() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let mut batched: Vec<VertexId> = Vec::new();
        for round in 0..4 {
            for _ in 0..=round {
                insert(&mut pool, &mut s, GroupId::G2);
            }
            let batch = pool.advance_cycle();
            for ids in batch.groups.values() {
                batched.extend(ids);
            }
        }
        batched.sort_unstable();
        let expected: Vec<VertexId> = (0..pool.len()).collect();
        assert_eq!(batched, expected);
    }

    #[test]
    fn dump_format() {
        let mut pool = DagPool::new();
        let mut s = TestChain::new(0);
        let id = insert(&mut pool, &mut s, GroupId::G2);
        let dump = pool.dump();
        let line = dump.lines().next().unwrap();
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], id.to_string());
        assert_eq!(fields[1], "-");
        assert_eq!(fields[3], "G2");
        assert_eq!(fields[4], "pending");
    }
}
