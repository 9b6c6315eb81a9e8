//! A single simulated chain instance: transaction intake, per-cycle
//! orchestration of grouping, segmented validation, block construction,
//! and the token-economy loop, plus the block archive used for replay
//! audits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consensus::{
    aggregate_votes, construct_block, segment_count, segment_transaction, state_root,
    validate_segment, BlockInput, ConsensusError, SegmentVote, ValidationContext,
    ValidationResult, ValidatorSet, Verdict, VoteReason,
};
use crate::consensus::Block;
use crate::dag::{DagError, DagPool, VertexId, VertexStatus};
use crate::ledger::{
    hash_parts, hash_transaction, issue_certificate, stamp_difficulty, Account, AccountId,
    CertStage, Certificate, Digest, LedgerError, NodeId, SignedTransaction,
};
use crate::shard::{
    assign_groups, classify_group, select_validators, shard_for_key, GroupAssignment,
    ShardError, ShardMap, ALL_GROUPS,
};
use crate::tokenomics::{
    charge_friction, distribute_rewards, mint_inflation, resource_units, update_friction,
    CycleMetrics, FrictionState,
};

/// Behavioral class of a simulated participant during a cycle.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum FaultClass {
    Honest,
    /// Emits no votes at all.
    Crash,
    /// Sends conflicting verdicts for the same segment.
    Equivocate,
    /// Flips a byte of the segment before validating it.
    TamperSegment,
}

/// A participant's view for one cycle, as the network layer sees it.
#[derive(Clone, PartialEq, Debug)]
pub struct NodeCtx {
    pub id: NodeId,
    /// Resource units this node can validate per cycle.
    pub capacity: u64,
    /// Duty-cycle fraction, feeding the supply metric.
    pub availability: f64,
    pub fault: FaultClass,
}

impl NodeCtx {
    pub fn honest(id: NodeId, capacity: u64) -> NodeCtx {
        NodeCtx {
            id,
            capacity,
            availability: 1.0,
            fault: FaultClass::Honest,
        }
    }
}

/// Static knobs of one chain instance.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ChainConfig {
    pub seed: u64,
    pub groups_min_size: usize,
    /// Redraw validator groups every n cycles (n = 1: every cycle).
    pub selector_redraw_every: u64,
    pub shards_count: u32,
    pub shards_replication: usize,
    pub shards_rebalance_every: u64,
    pub friction_initial: f64,
    pub friction_min: f64,
    pub friction_max: f64,
    pub friction_alpha: f64,
    /// Inflation minted into the pool per cycle boundary, in basis
    /// points of total supply. Default 0: strict conservation.
    pub inflation_bps: u64,
    /// Base leading-zero bits for certificate anti-spam stamps.
    pub stamp_base_bits: u32,
    /// Sliding window (cycles) for the velocity metric.
    pub velocity_window: usize,
    /// Cycles a transaction may wait for a vote quorum before it is
    /// dropped as undecidable.
    pub max_defer_cycles: u64,
}

impl Default for ChainConfig {
    fn default() -> ChainConfig {
        ChainConfig {
            seed: 0,
            groups_min_size: 2,
            selector_redraw_every: 1,
            shards_count: 4,
            shards_replication: 2,
            shards_rebalance_every: 16,
            friction_initial: 1.0,
            friction_min: 1.0,
            friction_max: 1e6,
            friction_alpha: 0.5,
            inflation_bps: 0,
            stamp_base_bits: 0,
            velocity_window: 32,
            max_defer_cycles: 8,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Shard(#[from] ShardError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("conservation violated at cycle {cycle}: ledger {ledger}, expected {expected}")]
    ConservationViolated {
        cycle: u64,
        ledger: u64,
        expected: u64,
    },
    #[error("account lacks funds: need {need}, have {have}")]
    InsufficientFunds { need: u64, have: u64 },
}

/// What one run_cycle call did, for reports and tests.
#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub assigned: usize,
    pub validated: usize,
    pub finalized: usize,
    pub rejected: usize,
    pub deferred: usize,
    pub block_height: u64,
    pub block_hash: String,
    pub fees: u64,
    pub minted: u64,
    pub distributed: u64,
    pub friction: f64,
    pub supply: f64,
    pub demand: f64,
    pub velocity: f64,
    pub pool: u64,
    /// Set when the cycle could not run (e.g. too few nodes); the chain
    /// state is unchanged apart from the cycle counter.
    pub skipped: Option<String>,
}

/// One finalized transaction as archived for replay: the transaction,
/// its group, the fee charged, the size of the committee that voted,
/// and the three stage certificates.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ArchiveTx {
    pub tx: SignedTransaction,
    pub group: crate::shard::GroupId,
    pub fee: u64,
    pub committee: u32,
    pub certs: [Certificate; 3],
}

/// Full block payload archived for replay: pool credits applied since
/// the previous block, the block itself, its transactions in order, and
/// the economy step (mint and reward payouts) that followed it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockArchive {
    pub block: Block,
    /// Out-of-band debits into the pool (swap settlement fees) applied
    /// between the previous block and this one.
    pub pre_pool_credits: Vec<(AccountId, u64)>,
    pub entries: Vec<ArchiveTx>,
    pub minted: u64,
    pub payouts: Vec<(NodeId, u64)>,
}

fn take_len(buf: &[u8], pos: &mut usize) -> Result<usize, LedgerError> {
    if *pos + 4 > buf.len() {
        return Err(LedgerError::Decode("short archive buffer".into()));
    }
    let mut a = [0u8; 4];
    a.copy_from_slice(&buf[*pos..*pos + 4]);
    *pos += 4;
    Ok(u32::from_be_bytes(a) as usize)
}

fn take_chunk<'a>(buf: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8], LedgerError> {
    if *pos + len > buf.len() {
        return Err(LedgerError::Decode("short archive buffer".into()));
    }
    let s = &buf[*pos..*pos + len];
    *pos += len;
    Ok(s)
}

fn take_u64(buf: &[u8], pos: &mut usize) -> Result<u64, LedgerError> {
    let chunk = take_chunk(buf, pos, 8)?;
    let mut a = [0u8; 8];
    a.copy_from_slice(chunk);
    Ok(u64::from_be_bytes(a))
}

impl BlockArchive {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let block = self.block.encode();
        out.extend_from_slice(&(block.len() as u32).to_be_bytes());
        out.extend_from_slice(&block);
        out.extend_from_slice(&(self.pre_pool_credits.len() as u32).to_be_bytes());
        for (id, amount) in &self.pre_pool_credits {
            out.extend_from_slice(id.0.as_bytes());
            out.extend_from_slice(&amount.to_be_bytes());
        }
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        for entry in &self.entries {
            out.push(entry.group.tag());
            out.extend_from_slice(&entry.fee.to_be_bytes());
            out.extend_from_slice(&entry.committee.to_be_bytes());
            let bytes = crate::ledger::canonical_encode(&entry.tx);
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
            for c in &entry.certs {
                let cb = c.encode();
                out.extend_from_slice(&(cb.len() as u32).to_be_bytes());
                out.extend_from_slice(&cb);
            }
        }
        out.extend_from_slice(&self.minted.to_be_bytes());
        out.extend_from_slice(&(self.payouts.len() as u32).to_be_bytes());
        for (node, amount) in &self.payouts {
            let name = node.0.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_be_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&amount.to_be_bytes());
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<(BlockArchive, usize), LedgerError> {
        let mut pos = 0usize;
        let blen = take_len(buf, &mut pos)?;
        let bbytes = take_chunk(buf, &mut pos, blen)?;
        let (block, used) = Block::decode(bbytes)?;
        if used != blen {
            return Err(LedgerError::Decode("trailing block bytes".into()));
        }
        let nc = take_len(buf, &mut pos)?;
        let mut pre_pool_credits = Vec::with_capacity(nc);
        for _ in 0..nc {
            let raw = take_chunk(buf, &mut pos, 32)?;
            let mut arr = [0u8; 32];
            arr.copy_from_slice(raw);
            let amount = take_u64(buf, &mut pos)?;
            pre_pool_credits.push((AccountId(Digest(arr)), amount));
        }
        let n = take_len(buf, &mut pos)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let tag = take_chunk(buf, &mut pos, 1)?[0];
            let group = crate::shard::GroupId::from_tag(tag)?;
            let fee = take_u64(buf, &mut pos)?;
            let committee = take_len(buf, &mut pos)? as u32;
            let tlen = take_len(buf, &mut pos)?;
            let tx = crate::ledger::canonical_decode(take_chunk(buf, &mut pos, tlen)?)?;
            let mut triple = Vec::with_capacity(3);
            for _ in 0..3 {
                let clen = take_len(buf, &mut pos)?;
                let cbytes = take_chunk(buf, &mut pos, clen)?;
                let (cert, cused) = Certificate::decode(cbytes)?;
                if cused != clen {
                    return Err(LedgerError::Decode("trailing certificate bytes".into()));
                }
                triple.push(cert);
            }
            let certs: [Certificate; 3] = triple
                .try_into()
                .map_err(|_| LedgerError::Decode("bad certificate triple".into()))?;
            entries.push(ArchiveTx {
                tx,
                group,
                fee,
                committee,
                certs,
            });
        }
        let minted = take_u64(buf, &mut pos)?;
        let np = take_len(buf, &mut pos)?;
        let mut payouts = Vec::with_capacity(np);
        for _ in 0..np {
            let nlen = take_len(buf, &mut pos)?;
            let name = std::str::from_utf8(take_chunk(buf, &mut pos, nlen)?)
                .map_err(|_| LedgerError::Decode("payout node name is not utf-8".into()))?
                .to_string();
            let amount = take_u64(buf, &mut pos)?;
            payouts.push((NodeId(name), amount));
        }
        Ok((
            BlockArchive {
                block,
                pre_pool_credits,
                entries,
                minted,
                payouts,
            },
            pos,
        ))
    }
}

/// Deterministic account for a node's reward payouts.
pub fn node_reward_account(node: &NodeId) -> AccountId {
    AccountId(hash_parts(&[b"node-reward", node.0.as_bytes()]))
}

/// Hash anchoring the chain: height-0 predecessor of the first block.
pub fn genesis_hash(chain_id: &str, accounts: &BTreeMap<AccountId, Account>) -> Digest {
    hash_parts(&[
        b"genesis",
        chain_id.as_bytes(),
        state_root(accounts, 0).as_bytes(),
    ])
}

struct InFlight {
    tx: SignedTransaction,
    initiator_cert: Certificate,
    validator_cert: Option<Certificate>,
    first_assigned_cycle: Option<u64>,
}

pub struct ChainInstance {
    pub id: String,
    pub config: ChainConfig,
    pub accounts: BTreeMap<AccountId, Account>,
    pub pool: u64,
    pub initial_supply: u64,
    pub minted_total: u64,
    pub friction: FrictionState,
    pub dag: DagPool,
    pub blocks: Vec<Block>,
    pub archives: Vec<BlockArchive>,
    pub shard_map: Option<ShardMap>,
    /// Participation counters for the reward split, per cycle.
    pub participation_total: BTreeMap<NodeId, u64>,
    pub trace: Vec<String>,
    pub reports: Vec<CycleReport>,
    pub last_assignment: Option<GroupAssignment>,
    in_flight: BTreeMap<Digest, InFlight>,
    next_nonce: BTreeMap<AccountId, u64>,
    /// Pool credits made since the last block, queued for the next
    /// archive so a replay can reproduce them.
    pending_pool_credits: Vec<(AccountId, u64)>,
    /// Per-cycle transferred value, for the velocity window.
    transfer_log: Vec<u64>,
    finalized_count: u64,
    rejected_count: u64,
}

impl ChainInstance {
    pub fn new(
        id: impl Into<String>,
        config: ChainConfig,
        genesis: BTreeMap<AccountId, Account>,
    ) -> ChainInstance {
        let initial_supply = genesis.values().map(|a| a.balance).sum();
        let friction = FrictionState::new(
            config.friction_initial,
            config.friction_min,
            config.friction_max,
            config.friction_alpha,
        );
        ChainInstance {
            id: id.into(),
            config,
            accounts: genesis,
            pool: 0,
            initial_supply,
            minted_total: 0,
            friction,
            dag: DagPool::new(),
            blocks: Vec::new(),
            archives: Vec::new(),
            shard_map: None,
            participation_total: BTreeMap::new(),
            trace: Vec::new(),
            reports: Vec::new(),
            last_assignment: None,
            in_flight: BTreeMap::new(),
            next_nonce: BTreeMap::new(),
            pending_pool_credits: Vec::new(),
            transfer_log: Vec::new(),
            finalized_count: 0,
            rejected_count: 0,
        }
    }

    pub fn finalized_count(&self) -> u64 {
        self.finalized_count
    }

    pub fn rejected_count(&self) -> u64 {
        self.rejected_count
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks
            .last()
            .map(|b| b.hash())
            .unwrap_or_else(|| genesis_hash(&self.id, &self.accounts))
    }

    pub fn balance(&self, id: &AccountId) -> u64 {
        self.accounts.get(id).map(|a| a.balance).unwrap_or(0)
    }

    /// Next nonce a well-formed submission from `sender` should carry
    /// (committed nonce plus in-flight submissions).
    pub fn next_nonce(&self, sender: &AccountId) -> u64 {
        self.next_nonce
            .get(sender)
            .copied()
            .max(self.accounts.get(sender).map(|a| a.nonce))
            .unwrap_or(0)
    }

    pub fn is_contract(&self, id: &AccountId) -> bool {
        self.accounts.get(id).map(|a| a.is_contract).unwrap_or(false)
    }

    /// Admit a signed transaction: classify, issue the creator's
    /// initiator certificate, and insert it into the DAG.
    pub fn submit(&mut self, tx: SignedTransaction, creator: &NodeId) -> Result<VertexId, ChainError> {
        let group = tx
            .node_groups_hint
            .unwrap_or_else(|| classify_group(&tx, |a| self.is_contract(a)));
        let tx_hash = hash_transaction(&tx);
        let shard = match &self.shard_map {
            Some(map) => shard_for_key(&tx_hash, map),
            None => crate::shard::ShardId(0),
        };
        let expected = self.next_nonce(&tx.sender);
        let id = self.dag.insert_transaction(&tx, expected, group, shard)?;
        self.next_nonce.insert(tx.sender, expected + 1);
        let difficulty = stamp_difficulty(self.config.stamp_base_bits, 0);
        let initiator_cert = issue_certificate(
            CertStage::Initiator,
            tx_hash,
            vec![creator.clone()],
            self.dag.cycle(),
            tx.hash_data,
            1,
            difficulty,
        )?;
        self.in_flight.insert(
            tx_hash,
            InFlight {
                tx,
                initiator_cert,
                validator_cert: None,
                first_assigned_cycle: None,
            },
        );
        Ok(id)
    }

    /// Declared resource demand over pending plus assigned transactions.
    pub fn pending_demand(&self) -> f64 {
        self.dag
            .vertices()
            .iter()
            .filter(|v| {
                matches!(v.status, VertexStatus::Pending | VertexStatus::Assigned)
            })
            .filter_map(|v| self.in_flight.get(&v.tx_hash))
            .map(|f| resource_units(&f.tx) as f64)
            .sum()
    }

    fn ledger_total(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum::<u64>() + self.pool
    }

    fn check_conservation(&self, cycle: u64) -> Result<(), ChainError> {
        let ledger = self.ledger_total();
        let expected = self.initial_supply + self.minted_total;
        if ledger != expected {
            return Err(ChainError::ConservationViolated {
                cycle,
                ledger,
                expected,
            });
        }
        Ok(())
    }

    /// Run one full consensus cycle with the given participant set.
    pub fn run_cycle(&mut self, nodes: &[NodeCtx]) -> Result<CycleReport, ChainError> {
        let batch = self.dag.advance_cycle();
        let cycle = self.dag.cycle();
        let mut report = CycleReport {
            cycle,
            assigned: batch.len(),
            friction: self.friction.friction,
            pool: self.pool,
            block_hash: self.tip_hash().to_hex(),
            block_height: self.blocks.len() as u64,
            ..CycleReport::default()
        };

        let mut active: Vec<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
        active.sort();
        let by_id: BTreeMap<&NodeId, &NodeCtx> = nodes.iter().map(|n| (&n.id, n)).collect();

        // storage layer: build at first use, redistribute periodically
        if self.shard_map.is_none() && !active.is_empty() {
            let replication = self.config.shards_replication.min(active.len());
            self.shard_map = Some(ShardMap::new(
                self.config.shards_count,
                replication,
                self.config.seed,
                &active,
            )?);
        } else if let Some(map) = &self.shard_map {
            if self.config.shards_rebalance_every > 0
                && cycle % self.config.shards_rebalance_every == 0
                && !active.is_empty()
            {
                let (new_map, _plan) =
                    crate::shard::rebalance(self.config.seed, cycle, map, &active)?;
                self.shard_map = Some(new_map);
            }
        }

        // validator groups, redrawn every n cycles
        let redraw = self.config.selector_redraw_every.max(1);
        let assignment = match &self.last_assignment {
            Some(a) if (cycle - a.cycle) < redraw && cycle % redraw != 0 => a.clone(),
            _ => match assign_groups(self.config.seed, cycle, &active, self.config.groups_min_size)
            {
                Ok(a) => a,
                Err(e) => {
                    report.skipped = Some(e.to_string());
                    self.reports.push(report.clone());
                    return Ok(report);
                }
            },
        };
        self.last_assignment = Some(assignment.clone());

        let mut participation: BTreeMap<NodeId, u64> = BTreeMap::new();
        let mut validated_inputs: Vec<BlockInput> = Vec::new();
        let mut committee_sizes: BTreeMap<crate::shard::GroupId, u32> = BTreeMap::new();

        for group in ALL_GROUPS {
            let members = assignment.group_map.get(&group).cloned().unwrap_or_default();
            if members.is_empty() {
                continue;
            }
            committee_sizes.insert(group, members.len() as u32);
            let set = ValidatorSet::new(group, cycle, members.clone());
            let k = segment_count(set.members.len());
            let mut budget: u64 = members
                .iter()
                .filter_map(|m| by_id.get(m))
                .map(|n| n.capacity)
                .sum();

            // assigned-and-undecided vertices of this group, oldest first
            let work: Vec<VertexId> = self
                .dag
                .vertices()
                .iter()
                .filter(|v| v.status == VertexStatus::Assigned && v.group == group)
                .map(|v| v.id)
                .collect();

            for vid in work {
                let tx_hash = self.dag.vertex(vid).unwrap().tx_hash;
                let Some(flight) = self.in_flight.get_mut(&tx_hash) else {
                    continue;
                };
                let units = resource_units(&flight.tx);
                if budget < units {
                    report.deferred += 1;
                    continue;
                }
                if flight.first_assigned_cycle.is_none() {
                    flight.first_assigned_cycle = Some(cycle);
                }
                budget -= units;

                let segments = segment_transaction(&flight.tx, k);
                let vctx = ValidationContext {
                    accounts: &self.accounts,
                    friction: self.friction.friction,
                    shard_map: None,
                };
                let mut votes: Vec<SegmentVote> = Vec::new();
                for member in &set.members {
                    let fault = by_id
                        .get(member)
                        .map(|n| n.fault)
                        .unwrap_or(FaultClass::Honest);
                    if fault == FaultClass::Crash {
                        continue;
                    }
                    for (si, seg) in segments.iter().enumerate() {
                        let observed = if fault == FaultClass::TamperSegment {
                            let mut t = seg.clone();
                            if let Some(b) = t.first_mut() {
                                *b ^= 0x01;
                            }
                            t
                        } else {
                            seg.clone()
                        };
                        let vote =
                            validate_segment(member, &flight.tx, si, k, &observed, &vctx)?;
                        if fault == FaultClass::Equivocate {
                            // conflicting verdict sent to other peers
                            let flipped = match vote.verdict {
                                Verdict::Approve => SegmentVote::new(
                                    member.clone(),
                                    tx_hash,
                                    si,
                                    Verdict::Reject,
                                    Some(VoteReason::HashMismatch),
                                ),
                                Verdict::Reject => SegmentVote::new(
                                    member.clone(),
                                    tx_hash,
                                    si,
                                    Verdict::Approve,
                                    None,
                                ),
                            };
                            votes.push(flipped);
                        }
                        votes.push(vote);
                        *participation.entry(member.clone()).or_default() += 1;
                    }
                }

                let decision =
                    aggregate_votes(&votes, &set, flight.initiator_cert.cert_hash, k)?;
                match decision {
                    ValidationResult::Validated(cert) => {
                        flight.validator_cert = Some(cert.clone());
                        let order = (self.dag.vertex(vid).unwrap().cycle, vid);
                        validated_inputs.push(BlockInput {
                            tx: flight.tx.clone(),
                            order,
                            group,
                            initiator_cert: flight.initiator_cert.clone(),
                            validator_cert: cert,
                        });
                        self.dag.mark_status(vid, VertexStatus::Validated)?;
                        report.validated += 1;
                    }
                    ValidationResult::Rejected { .. } => {
                        let reject_quorum = votes
                            .iter()
                            .filter(|v| v.verdict == Verdict::Reject)
                            .map(|v| &v.voter)
                            .collect::<std::collections::BTreeSet<_>>()
                            .len()
                            >= set.quorum;
                        let waited = flight
                            .first_assigned_cycle
                            .map(|c| cycle - c)
                            .unwrap_or(0);
                        if reject_quorum || waited >= self.config.max_defer_cycles {
                            self.dag.mark_status(vid, VertexStatus::Rejected)?;
                            self.in_flight.remove(&tx_hash);
                            self.rejected_count += 1;
                            report.rejected += 1;
                            self.trace.push(format!(
                                "{cycle} {} {} {} rejected",
                                self.blocks.len(),
                                tx_hash,
                                group
                            ));
                        } else {
                            report.deferred += 1;
                        }
                    }
                }
            }
        }

        // constructor phase: a fifth selector draw over all active nodes
        let ctor_size = assignment
            .group_map
            .values()
            .map(|m| m.len())
            .max()
            .unwrap_or(1)
            .min(active.len())
            .max(1);
        let constructors =
            select_validators(self.config.seed, cycle, b"constructor", &active, ctor_size)?;
        let height = self.blocks.len() as u64 + 1;
        let outcome = construct_block(
            validated_inputs,
            &self.accounts,
            self.pool,
            self.friction.friction,
            self.tip_hash(),
            height,
            cycle,
            &constructors,
            stamp_difficulty(self.config.stamp_base_bits, 0),
        )?;

        let mut transferred: u64 = 0;
        let mut applied_units: u64 = 0;
        let mut archive_entries = Vec::new();
        for applied in &outcome.applied {
            let vid = self
                .dag
                .vertex_by_hash(&applied.tx_hash)
                .map(|v| v.id)
                .expect("applied tx is in the DAG");
            self.dag.mark_status(vid, VertexStatus::Finalized)?;
            let flight = self
                .in_flight
                .remove(&applied.tx_hash)
                .expect("applied tx is in flight");
            transferred += flight.tx.value;
            applied_units += resource_units(&flight.tx);
            self.finalized_count += 1;
            self.trace.push(format!(
                "{cycle} {height} {} {} finalized",
                applied.tx_hash, applied.group
            ));
            archive_entries.push(ArchiveTx {
                tx: flight.tx,
                group: applied.group,
                fee: applied.fee,
                committee: committee_sizes.get(&applied.group).copied().unwrap_or(0),
                certs: [
                    flight.initiator_cert,
                    flight.validator_cert.clone().expect("validated before apply"),
                    applied.constructor_cert.clone(),
                ],
            });
        }
        for (_, tx_hash, _) in &outcome.vetoed {
            if let Some(v) = self.dag.vertex_by_hash(tx_hash) {
                let vid = v.id;
                self.dag.mark_status(vid, VertexStatus::Rejected)?;
            }
            self.in_flight.remove(tx_hash);
            self.rejected_count += 1;
            report.rejected += 1;
            self.trace
                .push(format!("{cycle} {height} {tx_hash} - vetoed"));
        }
        report.finalized = outcome.applied.len();
        report.fees = outcome.fees_collected;
        self.accounts = outcome.accounts;
        self.pool = outcome.pool;
        self.blocks.push(outcome.block.clone());
        report.block_height = height;
        report.block_hash = self.blocks.last().unwrap().hash().to_hex();

        // token economy: metrics, friction, inflation, rewards
        self.transfer_log.push(transferred);
        let window = self.config.velocity_window.max(1);
        let window_sum: u64 = self
            .transfer_log
            .iter()
            .rev()
            .take(window)
            .sum();
        let mean_balance = if self.accounts.is_empty() {
            0.0
        } else {
            self.accounts.values().map(|a| a.balance as f64).sum::<f64>()
                / self.accounts.len() as f64
        };
        let velocity = if mean_balance > 0.0 {
            window_sum as f64 / mean_balance
        } else {
            0.0
        };
        let supply: f64 = nodes
            .iter()
            .map(|n| n.capacity as f64 * n.availability)
            .sum();
        let demand = self.pending_demand() + applied_units as f64;
        let metrics = CycleMetrics {
            cycle,
            group_sizes: assignment.group_sizes(),
            tx_count: report.finalized as u64,
            resource_units: applied_units,
            velocity,
            supply,
            demand,
        };
        self.friction = update_friction(&self.friction, &metrics);
        report.supply = supply;
        report.demand = demand;
        report.velocity = velocity;

        let minted = mint_inflation(self.initial_supply + self.minted_total, self.config.inflation_bps);
        self.minted_total += minted;
        self.pool += minted;
        report.minted = minted;

        for (node, count) in &participation {
            *self.participation_total.entry(node.clone()).or_default() += count;
        }
        let (payouts, remainder) = distribute_rewards(self.pool, &participation);
        let mut distributed = 0u64;
        for (node, amount) in &payouts {
            let acct = node_reward_account(node);
            self.accounts
                .entry(acct)
                .or_insert_with(|| Account::new(acct, 0))
                .balance += amount;
            distributed += amount;
        }
        self.pool = remainder;
        report.distributed = distributed;
        report.friction = self.friction.friction;
        report.pool = self.pool;

        self.archives.push(BlockArchive {
            block: outcome.block,
            pre_pool_credits: std::mem::take(&mut self.pending_pool_credits),
            entries: archive_entries,
            minted,
            payouts: payouts.into_iter().collect(),
        });

        self.check_conservation(cycle)?;
        self.reports.push(report.clone());
        Ok(report)
    }

    /// Protocol-level fee routing: debit an account straight into the
    /// reward pool (used by swap settlement). Conservation-neutral.
    pub fn transfer_to_pool(&mut self, from: &AccountId, amount: u64) -> Result<(), ChainError> {
        let have = self.balance(from);
        if have < amount {
            return Err(ChainError::InsufficientFunds { need: amount, have });
        }
        let account = self.accounts.get_mut(from).expect("balance checked above");
        account.balance -= amount;
        self.pool += amount;
        self.pending_pool_credits.push((*from, amount));
        Ok(())
    }

    /// Value plus quoted fees of this sender's submitted-but-undecided
    /// transactions; workload generators subtract it before admitting
    /// more spend.
    pub fn pending_spend(&self, sender: &AccountId) -> u64 {
        self.in_flight
            .values()
            .filter(|f| f.tx.sender == *sender)
            .map(|f| f.tx.value.saturating_add(self.quote_fee(&f.tx)))
            .sum()
    }

    /// Fee a submitter should budget for a transaction right now.
    pub fn quote_fee(&self, tx: &SignedTransaction) -> u64 {
        charge_friction(resource_units(tx), self.friction.friction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{sign_transaction, Keypair, TxPayload, BASE_UNITS_PER_COIN};

    fn keys(n: usize) -> Vec<Keypair> {
        (0..n)
            .map(|i| Keypair::from_seed(&hash_parts(&[b"chain-test", &(i as u64).to_be_bytes()])))
            .collect()
    }

    fn nodes(n: usize) -> Vec<NodeCtx> {
        (0..n)
            .map(|i| NodeCtx::honest(NodeId::new(format!("n{i:02}")), 100))
            .collect()
    }

    fn genesis(keys: &[Keypair], balance: u64) -> BTreeMap<AccountId, Account> {
        keys.iter()
            .map(|k| (k.account_id(), Account::new(k.account_id(), balance)))
            .collect()
    }

    fn chain(ks: &[Keypair]) -> ChainInstance {
        ChainInstance::new(
            "test",
            ChainConfig::default(),
            genesis(ks, 100 * BASE_UNITS_PER_COIN),
        )
    }

    fn transfer(from: &Keypair, to: &Keypair, value: u64, nonce: u64) -> SignedTransaction {
        let tx = SignedTransaction::new(
            from.account_id(),
            to.account_id(),
            value,
            nonce,
            TxPayload::transfer(),
            None,
        );
        sign_transaction(tx, from).unwrap()
    }

    #[test]
    fn empty_cycle_produces_empty_block() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let report = c.run_cycle(&nodes(8)).unwrap();
        assert_eq!(report.finalized, 0);
        assert_eq!(report.block_height, 1);
        assert!(c.blocks[0].tx_hashes.is_empty());
        assert!(report.skipped.is_none());
    }

    #[test]
    fn single_transfer_finalizes_with_three_chained_certs() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let creator = NodeId::new("n00");
        let tx = transfer(&ks[0], &ks[1], 5, 0);
        let tx_hash = hash_transaction(&tx);
        c.submit(tx, &creator).unwrap();
        let report = c.run_cycle(&nodes(8)).unwrap();
        assert_eq!(report.finalized, 1);
        let archive = &c.archives[0];
        assert_eq!(archive.entries.len(), 1);
        assert!(archive.entries[0].committee > 0);
        let [init, val, cons] = &archive.entries[0].certs;
        assert_eq!(init.stage, CertStage::Initiator);
        assert_eq!(init.subject, tx_hash);
        assert_eq!(val.stage, CertStage::Validator);
        assert_eq!(val.subject, init.cert_hash);
        assert_eq!(cons.stage, CertStage::Constructor);
        assert_eq!(cons.subject, val.cert_hash);
        assert_eq!(c.dag.vertex_by_hash(&tx_hash).unwrap().status, VertexStatus::Finalized);
    }

    #[test]
    fn balances_and_conservation_after_transfer() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let supply = c.initial_supply;
        let tx = transfer(&ks[0], &ks[1], 5_000, 0);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        let report = c.run_cycle(&nodes(8)).unwrap();
        assert_eq!(c.balance(&ks[1].account_id()), 100 * BASE_UNITS_PER_COIN + 5_000);
        assert!(report.fees >= 1);
        let total: u64 = c.accounts.values().map(|a| a.balance).sum();
        assert_eq!(total + c.pool, supply);
    }

    #[test]
    fn too_few_nodes_skips_cycle() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let report = c.run_cycle(&nodes(4)).unwrap();
        assert!(report.skipped.is_some());
        assert!(c.blocks.is_empty());
    }

    #[test]
    fn bad_balance_transaction_is_rejected_not_finalized() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let tx = transfer(&ks[0], &ks[1], 200 * BASE_UNITS_PER_COIN, 0);
        let tx_hash = hash_transaction(&tx);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        let report = c.run_cycle(&nodes(8)).unwrap();
        assert_eq!(report.finalized, 0);
        assert_eq!(report.rejected, 1);
        assert_eq!(c.dag.vertex_by_hash(&tx_hash).unwrap().status, VertexStatus::Rejected);
    }

    #[test]
    fn one_tamper_fault_of_four_still_finalizes() {
        let ks = keys(2);
        let mut c = ChainInstance::new(
            "t",
            ChainConfig {
                groups_min_size: 4,
                ..ChainConfig::default()
            },
            genesis(&ks, 100 * BASE_UNITS_PER_COIN),
        );
        let mut ns = nodes(16);
        // fault one node per class position; groups are drawn from all 16
        ns[3].fault = FaultClass::TamperSegment;
        let tx = transfer(&ks[0], &ks[1], 5, 0);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        let report = c.run_cycle(&ns).unwrap();
        assert_eq!(report.finalized + report.deferred, 1);
        assert_eq!(report.rejected, 0);
    }

    #[test]
    fn crashed_committee_defers_then_drops() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let mut ns = nodes(8);
        for n in &mut ns {
            n.fault = FaultClass::Crash;
        }
        let tx = transfer(&ks[0], &ks[1], 5, 0);
        let tx_hash = hash_transaction(&tx);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        for _ in 0..=c.config.max_defer_cycles {
            c.run_cycle(&ns).unwrap();
        }
        // never finalized under a fully crashed roster
        assert_eq!(c.finalized_count(), 0);
        let status = c.dag.vertex_by_hash(&tx_hash).unwrap().status;
        assert_ne!(status, VertexStatus::Finalized);
    }

    #[test]
    fn deterministic_block_chain_for_same_seed() {
        let run = || {
            let ks = keys(4);
            let mut c = chain(&ks);
            for i in 0..4u64 {
                let tx = transfer(&ks[0], &ks[1], 100 + i, i);
                c.submit(tx, &NodeId::new("n00")).unwrap();
                c.run_cycle(&nodes(8)).unwrap();
            }
            c.tip_hash()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rewards_flow_to_participants() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let tx = transfer(&ks[0], &ks[1], 5_000, 0);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        let report = c.run_cycle(&nodes(8)).unwrap();
        assert!(report.fees > 0);
        assert_eq!(report.distributed + report.pool, report.fees + 0);
        assert!(!c.participation_total.is_empty());
    }

    #[test]
    fn inflation_mints_into_pool_and_accounting_holds() {
        let ks = keys(2);
        let mut c = ChainInstance::new(
            "i",
            ChainConfig {
                inflation_bps: 100,
                ..ChainConfig::default()
            },
            genesis(&ks, 100 * BASE_UNITS_PER_COIN),
        );
        let r1 = c.run_cycle(&nodes(8)).unwrap();
        assert_eq!(r1.minted, 2 * BASE_UNITS_PER_COIN);
        let total: u64 = c.accounts.values().map(|a| a.balance).sum();
        assert_eq!(total + c.pool, c.initial_supply + c.minted_total);
    }

    #[test]
    fn archive_round_trip() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let tx = transfer(&ks[0], &ks[1], 5, 0);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        c.run_cycle(&nodes(8)).unwrap();
        let bytes = c.archives[0].encode();
        let (decoded, used) = BlockArchive::decode(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(decoded, c.archives[0]);
    }

    #[test]
    fn trace_lines_have_five_fields() {
        let ks = keys(2);
        let mut c = chain(&ks);
        let tx = transfer(&ks[0], &ks[1], 5, 0);
        c.submit(tx, &NodeId::new("n00")).unwrap();
        c.run_cycle(&nodes(8)).unwrap();
        assert_eq!(c.trace.len(), 1);
        let fields: Vec<&str> = c.trace[0].split_whitespace().collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[4], "finalized");
    }
}
