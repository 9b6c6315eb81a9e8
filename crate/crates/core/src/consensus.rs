//! Proof-of-Participation validation: transaction segmenting, validator
//! voting and quorum aggregation, the 4-way certificate trie, and the
//! constructor phase that applies transactions and emits blocks.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ledger::{
    canonical_encode, hash_parts, issue_certificate, Account, AccountId,
    CertStage, Certificate, Digest, LedgerError, NodeId, SignedTransaction,
};
use crate::merkle::{merkle_prove, merkle_root, merkle_verify, MerkleError, MerkleProof};
use crate::shard::{shard_for_key, GroupId, ShardId, ShardMap};
use crate::tokenomics::{charge_friction, resource_units};

/// Two-thirds quorum over a committee of n.
pub fn quorum_for(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

/// One cycle's committee for a group, with its vote threshold.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValidatorSet {
    pub group: GroupId,
    pub cycle: u64,
    pub members: Vec<NodeId>,
    pub quorum: usize,
}

impl ValidatorSet {
    pub fn new(group: GroupId, cycle: u64, members: Vec<NodeId>) -> ValidatorSet {
        let quorum = quorum_for(members.len());
        ValidatorSet {
            group,
            cycle,
            members,
            quorum,
        }
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.members.contains(node)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VoteReason {
    HashMismatch,
    InsufficientBalance,
    BadNonce,
}

/// A validator's vote on one segment of one transaction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SegmentVote {
    pub voter: NodeId,
    pub tx_hash: Digest,
    pub segment_index: usize,
    pub verdict: Verdict,
    pub reason: Option<VoteReason>,
    pub signature: Digest,
}

impl SegmentVote {
    pub fn new(
        voter: NodeId,
        tx_hash: Digest,
        segment_index: usize,
        verdict: Verdict,
        reason: Option<VoteReason>,
    ) -> SegmentVote {
        let signature = vote_signature(&voter, &tx_hash, segment_index, verdict, reason);
        SegmentVote {
            voter,
            tx_hash,
            segment_index,
            verdict,
            reason,
            signature,
        }
    }
}

fn vote_signature(
    voter: &NodeId,
    tx_hash: &Digest,
    segment_index: usize,
    verdict: Verdict,
    reason: Option<VoteReason>,
) -> Digest {
    let verdict_tag = match verdict {
        Verdict::Approve => 0u8,
        Verdict::Reject => 1u8,
    };
    let reason_tag = match reason {
        None => 0u8,
        Some(VoteReason::HashMismatch) => 1,
        Some(VoteReason::InsufficientBalance) => 2,
        Some(VoteReason::BadNonce) => 3,
    };
    hash_parts(&[
        b"vote",
        voter.0.as_bytes(),
        tx_hash.as_bytes(),
        &(segment_index as u64).to_be_bytes(),
        &[verdict_tag, reason_tag],
    ])
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("vote from {0} outside the validator set")]
    ForeignVote(NodeId),
    #[error("node {node} does not hold shard {shard}")]
    NotHolder { node: NodeId, shard: ShardId },
    #[error("transaction {0} lacks a matching validator certificate")]
    MissingValidatorCert(Digest),
    #[error("replayed state root differs from the block's state root")]
    StateRootMismatch,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
}

/// Segments per transaction: bounded by the committee size and 4.
pub fn segment_count(set_size: usize) -> usize {
    set_size.min(4).max(1)
}

/// Split the canonical encoding into k contiguous, length-balanced
/// segments (sizes differ by at most one byte, longer segments first).
pub fn segment_transaction(tx: &SignedTransaction, k: usize) -> Vec<Vec<u8>> {
    assert!(k >= 1);
    let bytes = canonical_encode(tx);
    segment_bytes(&bytes, k)
}

pub fn segment_bytes(bytes: &[u8], k: usize) -> Vec<Vec<u8>> {
    let base = bytes.len() / k;
    let extra = bytes.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut pos = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(bytes[pos..pos + len].to_vec());
        pos += len;
    }
    out
}

/// What a validator consults when judging a segment.
pub struct ValidationContext<'a> {
    pub accounts: &'a BTreeMap<AccountId, Account>,
    /// Friction level used to price the fee alongside the value check.
    pub friction: f64,
    /// When present, voters must be storage homes of the segment's shard;
    /// committee members that received the segment with their assignment
    /// validate without the holder check.
    pub shard_map: Option<&'a ShardMap>,
}

/// Judge one observed segment against the transaction's declared
/// encoding; segment 0 additionally carries the balance and nonce check.
pub fn validate_segment(
    voter: &NodeId,
    tx: &SignedTransaction,
    segment_index: usize,
    k: usize,
    observed: &[u8],
    ctx: &ValidationContext<'_>,
) -> Result<SegmentVote, ConsensusError> {
    let expected = segment_transaction(tx, k);
    let tx_hash = crate::ledger::hash_transaction(tx);
    if let Some(map) = ctx.shard_map {
        let shard = shard_for_key(&hash_parts(&[observed]), map);
        let holds = map
            .shard_homes
            .get(&shard)
            .is_some_and(|homes| homes.contains(voter));
        if !holds {
            return Err(ConsensusError::NotHolder {
                node: voter.clone(),
                shard,
            });
        }
    }
    if observed != expected[segment_index].as_slice() {
        return Ok(SegmentVote::new(
            voter.clone(),
            tx_hash,
            segment_index,
            Verdict::Reject,
            Some(VoteReason::HashMismatch),
        ));
    }
    if segment_index == 0 {
        let fee = charge_friction(resource_units(tx), ctx.friction);
        let (balance, nonce) = ctx
            .accounts
            .get(&tx.sender)
            .map(|a| (a.balance, a.nonce))
            .unwrap_or((0, 0));
        // a stale nonce is a replay; higher nonces may be queued behind
        // earlier transactions of the same sender and are ordered (or
        // vetoed) by the constructor
        if tx.nonce < nonce {
            return Ok(SegmentVote::new(
                voter.clone(),
                tx_hash,
                segment_index,
                Verdict::Reject,
                Some(VoteReason::BadNonce),
            ));
        }
        if balance < tx.value.saturating_add(fee) {
            return Ok(SegmentVote::new(
                voter.clone(),
                tx_hash,
                segment_index,
                Verdict::Reject,
                Some(VoteReason::InsufficientBalance),
            ));
        }
    }
    Ok(SegmentVote::new(
        voter.clone(),
        tx_hash,
        segment_index,
        Verdict::Approve,
        None,
    ))
}

/// Outcome of quorum aggregation for one transaction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ValidationResult {
    Validated(Certificate),
    Rejected { reasons: Vec<VoteReason> },
}

/// Aggregate segment votes under the committee's quorum rule.
///
/// Votes must come from set members. A voter emitting conflicting
/// verdicts for the same segment (equivocation) has all of that
/// segment's votes discarded. Validated iff every segment collects at
/// least `quorum` approvals; the resulting validator certificate covers
/// `subject` (the initiator certificate hash) and is signed by the
/// approving members.
pub fn aggregate_votes(
    votes: &[SegmentVote],
    set: &ValidatorSet,
    subject: Digest,
    k: usize,
) -> Result<ValidationResult, ConsensusError> {
    for v in votes {
        if !set.contains(&v.voter) {
            return Err(ConsensusError::ForeignVote(v.voter.clone()));
        }
    }
    // (segment, voter) -> verdicts seen; equivocators are dropped.
    let mut by_slot: BTreeMap<(usize, &NodeId), Vec<&SegmentVote>> = BTreeMap::new();
    for v in votes {
        by_slot.entry((v.segment_index, &v.voter)).or_default().push(v);
    }
    let mut approvals: Vec<usize> = vec![0; k];
    let mut approvers: Vec<NodeId> = Vec::new();
    let mut reasons: Vec<VoteReason> = Vec::new();
    for ((segment, voter), slot_votes) in by_slot {
        let equivocated = slot_votes
            .iter()
            .any(|v| v.verdict != slot_votes[0].verdict);
        if equivocated || segment >= k {
            continue;
        }
        match slot_votes[0].verdict {
            Verdict::Approve => {
                approvals[segment] += 1;
                if !approvers.contains(voter) {
                    approvers.push(voter.clone());
                }
            }
            Verdict::Reject => {
                if let Some(r) = slot_votes[0].reason {
                    if !reasons.contains(&r) {
                        reasons.push(r);
                    }
                }
            }
        }
    }
    if approvals.iter().all(|&a| a >= set.quorum) {
        approvers.sort();
        let proof = votes_proof(votes);
        let cert = issue_certificate(
            CertStage::Validator,
            subject,
            approvers,
            set.cycle,
            proof,
            set.quorum,
            0,
        )?;
        Ok(ValidationResult::Validated(cert))
    } else {
        Ok(ValidationResult::Rejected { reasons })
    }
}

/// Digest of the vote evidence carried in the certificate's proof field.
pub fn votes_proof(votes: &[SegmentVote]) -> Digest {
    let mut sigs: Vec<&Digest> = votes.iter().map(|v| &v.signature).collect();
    sigs.sort();
    let parts: Vec<&[u8]> = sigs.iter().map(|d| &d.0[..]).collect();
    hash_parts(&parts)
}

/// 4-way commitment trie over stage certificates, keyed by group.
///
/// Leaves are `digest(group tag || cert_hash)` in insertion order; the
/// root is the 4-ary Merkle root over them, so the root changes iff any
/// leaf changes and membership proofs verify against it.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TrieCommitment {
    pub entries: Vec<(GroupId, Digest)>,
}

impl TrieCommitment {
    pub fn insert(&mut self, group: GroupId, cert_hash: Digest) {
        self.entries.push((group, cert_hash));
    }

    fn leaves(&self) -> Vec<Digest> {
        self.entries
            .iter()
            .map(|(g, h)| hash_parts(&[&[g.tag()], h.as_bytes()]))
            .collect()
    }

    pub fn root(&self) -> Digest {
        merkle_root(&self.leaves())
    }

    pub fn prove(&self, index: usize) -> Result<MerkleProof, MerkleError> {
        merkle_prove(&self.leaves(), index)
    }

    pub fn verify(&self, index: usize, proof: &MerkleProof) -> bool {
        let leaves = self.leaves();
        match leaves.get(index) {
            Some(leaf) => merkle_verify(&self.root(), leaf, proof),
            None => false,
        }
    }
}

/// Finalized batch: ordered transaction hashes plus commitments.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub cycle: u64,
    pub tx_hashes: Vec<Digest>,
    pub state_root: Digest,
    /// Merkle root over all three certificate stages of the block's txs.
    pub cert_root: Digest,
    pub constructor_cert: Certificate,
}

impl Block {
    pub fn hash(&self) -> Digest {
        hash_parts(&[&self.header_bytes()])
    }

    fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128 + 32 * self.tx_hashes.len());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(self.prev_hash.as_bytes());
        out.extend_from_slice(&self.cycle.to_be_bytes());
        out.extend_from_slice(&(self.tx_hashes.len() as u32).to_be_bytes());
        for h in &self.tx_hashes {
            out.extend_from_slice(h.as_bytes());
        }
        out.extend_from_slice(self.state_root.as_bytes());
        out.extend_from_slice(self.cert_root.as_bytes());
        out.extend_from_slice(self.constructor_cert.cert_hash.as_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        let cert = self.constructor_cert.encode();
        out.extend_from_slice(&(cert.len() as u32).to_be_bytes());
        out.extend_from_slice(&cert);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<(Block, usize), LedgerError> {
        let need = |pos: usize, n: usize| -> Result<(), LedgerError> {
            if pos + n > buf.len() {
                Err(LedgerError::Decode("short block buffer".into()))
            } else {
                Ok(())
            }
        };
        let mut pos = 0;
        let take_u64 = |pos: &mut usize| -> Result<u64, LedgerError> {
            need(*pos, 8)?;
            let mut a = [0u8; 8];
            a.copy_from_slice(&buf[*pos..*pos + 8]);
            *pos += 8;
            Ok(u64::from_be_bytes(a))
        };
        let take_digest = |pos: &mut usize| -> Result<Digest, LedgerError> {
            need(*pos, 32)?;
            let mut a = [0u8; 32];
            a.copy_from_slice(&buf[*pos..*pos + 32]);
            *pos += 32;
            Ok(Digest(a))
        };
        let take_u32 = |pos: &mut usize| -> Result<u32, LedgerError> {
            need(*pos, 4)?;
            let mut a = [0u8; 4];
            a.copy_from_slice(&buf[*pos..*pos + 4]);
            *pos += 4;
            Ok(u32::from_be_bytes(a))
        };
        let height = take_u64(&mut pos)?;
        let prev_hash = take_digest(&mut pos)?;
        let cycle = take_u64(&mut pos)?;
        let n = take_u32(&mut pos)? as usize;
        let mut tx_hashes = Vec::with_capacity(n);
        for _ in 0..n {
            tx_hashes.push(take_digest(&mut pos)?);
        }
        let state_root = take_digest(&mut pos)?;
        let cert_root = take_digest(&mut pos)?;
        let _cert_hash = take_digest(&mut pos)?;
        let cert_len = take_u32(&mut pos)? as usize;
        need(pos, cert_len)?;
        let (constructor_cert, used) = Certificate::decode(&buf[pos..pos + cert_len])?;
        if used != cert_len {
            return Err(LedgerError::Decode("trailing certificate bytes".into()));
        }
        pos += cert_len;
        Ok((
            Block {
                height,
                prev_hash,
                cycle,
                tx_hashes,
                state_root,
                cert_root,
                constructor_cert,
            },
            pos,
        ))
    }
}

/// Commitment to the full account map plus the reward pool.
pub fn state_root(accounts: &BTreeMap<AccountId, Account>, pool: u64) -> Digest {
    let mut leaves: Vec<Digest> = accounts
        .values()
        .map(|a| {
            hash_parts(&[
                a.id.0.as_bytes(),
                &a.balance.to_be_bytes(),
                &a.nonce.to_be_bytes(),
                &[u8::from(a.is_contract), u8::from(a.governance_flag)],
            ])
        })
        .collect();
    leaves.push(hash_parts(&[b"pool", &pool.to_be_bytes()]));
    merkle_root(&leaves)
}

/// One validated transaction entering the constructor phase.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockInput {
    pub tx: SignedTransaction,
    /// (cycle, admission index) ordering key within the block.
    pub order: (u64, usize),
    pub group: GroupId,
    pub initiator_cert: Certificate,
    pub validator_cert: Certificate,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VetoReason {
    InsufficientBalance,
    BadNonce,
}

/// One applied transaction's bookkeeping inside a block outcome.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AppliedTx {
    pub tx_hash: Digest,
    pub order: (u64, usize),
    pub group: GroupId,
    pub fee: u64,
    pub constructor_cert: Certificate,
}

/// Result of the constructor phase for one cycle.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlockOutcome {
    pub block: Block,
    pub applied: Vec<AppliedTx>,
    pub vetoed: Vec<((u64, usize), Digest, VetoReason)>,
    pub accounts: BTreeMap<AccountId, Account>,
    pub pool: u64,
    pub fees_collected: u64,
}

/// Apply validated transactions in (cycle, admission index) order and
/// emit the block with its constructor certificate.
///
/// Transactions that overdraw or mis-nonce only because of earlier
/// in-block transactions are vetoed here, not applied. Fees are charged
/// at `friction` per resource unit and credited to the reward pool.
#[allow(clippy::too_many_arguments)]
pub fn construct_block(
    mut inputs: Vec<BlockInput>,
    accounts: &BTreeMap<AccountId, Account>,
    pool: u64,
    friction: f64,
    prev_hash: Digest,
    height: u64,
    cycle: u64,
    constructors: &[NodeId],
    stamp_difficulty: u32,
) -> Result<BlockOutcome, ConsensusError> {
    let quorum = quorum_for(constructors.len());
    let mut accounts = accounts.clone();
    let mut pool = pool;
    let mut fees_collected = 0u64;
    inputs.sort_by_key(|i| i.order);

    let mut applied = Vec::new();
    let mut vetoed = Vec::new();
    let mut trie = TrieCommitment::default();

    for input in inputs {
        let tx = &input.tx;
        let tx_hash = crate::ledger::hash_transaction(tx);
        if input.validator_cert.stage != CertStage::Validator
            || input.validator_cert.subject != input.initiator_cert.cert_hash
            || input.initiator_cert.subject != tx_hash
        {
            return Err(ConsensusError::MissingValidatorCert(tx_hash));
        }
        let fee = charge_friction(resource_units(tx), friction);
        let sender = accounts
            .entry(tx.sender)
            .or_insert_with(|| Account::new(tx.sender, 0));
        let veto = if tx.nonce != sender.nonce {
            Some(VetoReason::BadNonce)
        } else if sender.balance < tx.value.saturating_add(fee) {
            Some(VetoReason::InsufficientBalance)
        } else {
            None
        };
        if let Some(reason) = veto {
            vetoed.push((input.order, tx_hash, reason));
            continue;
        }
        sender.balance -= tx.value + fee;
        sender.nonce += 1;
        accounts
            .entry(tx.to)
            .or_insert_with(|| Account::new(tx.to, 0))
            .balance += tx.value;
        pool += fee;
        fees_collected += fee;

        let cert = issue_certificate(
            CertStage::Constructor,
            input.validator_cert.cert_hash,
            constructors.to_vec(),
            cycle,
            votes_proof(&[]),
            quorum,
            stamp_difficulty,
        )?;
        trie.insert(input.group, input.initiator_cert.cert_hash);
        trie.insert(input.group, input.validator_cert.cert_hash);
        trie.insert(input.group, cert.cert_hash);
        applied.push(AppliedTx {
            tx_hash,
            order: input.order,
            group: input.group,
            fee,
            constructor_cert: cert,
        });
    }

    let new_root = state_root(&accounts, pool);
    let cert_root = trie.root();
    // block-level constructor certificate over the certificate roll-up
    let block_subject = hash_parts(&[
        b"block",
        &height.to_be_bytes(),
        cert_root.as_bytes(),
        new_root.as_bytes(),
    ]);
    let constructor_cert = issue_certificate(
        CertStage::Constructor,
        block_subject,
        constructors.to_vec(),
        cycle,
        cert_root,
        quorum,
        stamp_difficulty,
    )?;
    let block = Block {
        height,
        prev_hash,
        cycle,
        tx_hashes: applied.iter().map(|a| a.tx_hash).collect(),
        state_root: new_root,
        cert_root,
        constructor_cert,
    };
    Ok(BlockOutcome {
        block,
        applied,
        vetoed,
        accounts,
        pool,
        fees_collected,
    })
}
