//! Cross-chain flash-contract protocol: atomic value exchange between
//! two chain instances through the initiate -> lock -> flash (match) ->
//! sync -> publish phase machine, with custody escrow and a
//! timeout/refund discipline that makes every terminal state symmetric.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::{ChainError, ChainInstance, NodeCtx};
use crate::dag::VertexStatus;
use crate::ledger::{
    hash_parts, hash_transaction, sign_transaction, verify_signature, AccountId, Digest, Keypair,
    LedgerError, NodeId, SignedTransaction, TxPayload,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SwapPhase {
    Initiated,
    LockedA,
    Matched,
    LockedBoth,
    Synced,
    Published,
    Refunded,
    Aborted,
}

impl SwapPhase {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            SwapPhase::Published | SwapPhase::Refunded | SwapPhase::Aborted
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            SwapPhase::Initiated => "initiated",
            SwapPhase::LockedA => "locked_a",
            SwapPhase::Matched => "matched",
            SwapPhase::LockedBoth => "locked_both",
            SwapPhase::Synced => "synced",
            SwapPhase::Published => "published",
            SwapPhase::Refunded => "refunded",
            SwapPhase::Aborted => "aborted",
        }
    }

    fn tag(self) -> u8 {
        match self {
            SwapPhase::Initiated => 0,
            SwapPhase::LockedA => 1,
            SwapPhase::Matched => 2,
            SwapPhase::LockedBoth => 3,
            SwapPhase::Synced => 4,
            SwapPhase::Published => 5,
            SwapPhase::Refunded => 6,
            SwapPhase::Aborted => 7,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwapError {
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(SwapPhase),
    #[error("party balance {have} below required {need}")]
    InsufficientBalance { need: u64, have: u64 },
    #[error("offer signature does not verify")]
    BadSignature,
    #[error("offer already initiated (same swap id)")]
    DuplicateOffer,
    #[error("unknown signing key for {0:?}")]
    UnknownKey(AccountId),
    #[error("pipeline failure: {0}")]
    Pipeline(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl From<ChainError> for SwapError {
    fn from(e: ChainError) -> SwapError {
        SwapError::Pipeline(e.to_string())
    }
}

/// A signed swap offer: what A gives on chain A, what A wants on chain B.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SwapOffer {
    pub party_a: AccountId,
    pub chain_a: String,
    pub chain_b: String,
    pub amount_a: u64,
    pub amount_b: u64,
    pub timeout_cycles: u64,
    pub fee_bps: u64,
    /// 32-byte public key followed by a 64-byte signature over the
    /// offer bytes with this field empty.
    pub signature: Vec<u8>,
}

impl SwapOffer {
    fn bytes_for_signing(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        out.extend_from_slice(self.party_a.0.as_bytes());
        out.extend_from_slice(&(self.chain_a.len() as u32).to_be_bytes());
        out.extend_from_slice(self.chain_a.as_bytes());
        out.extend_from_slice(&(self.chain_b.len() as u32).to_be_bytes());
        out.extend_from_slice(self.chain_b.as_bytes());
        out.extend_from_slice(&self.amount_a.to_be_bytes());
        out.extend_from_slice(&self.amount_b.to_be_bytes());
        out.extend_from_slice(&self.timeout_cycles.to_be_bytes());
        out.extend_from_slice(&self.fee_bps.to_be_bytes());
        out
    }

    pub fn swap_id(&self) -> Digest {
        hash_parts(&[b"swap", &self.bytes_for_signing()])
    }

    pub fn sign(mut self, key: &Keypair) -> Result<SwapOffer, SwapError> {
        if key.account_id() != self.party_a {
            return Err(SwapError::BadSignature);
        }
        // reuse the transaction signing path by wrapping the offer bytes
        let carrier = SignedTransaction::new(
            self.party_a,
            self.party_a,
            0,
            0,
            TxPayload {
                kind: crate::ledger::PayloadKind::Other,
                data: self.bytes_for_signing(),
            },
            None,
        );
        let signed = sign_transaction(carrier, key).map_err(SwapError::Ledger)?;
        self.signature = signed.signature;
        Ok(self)
    }

    pub fn verify(&self) -> bool {
        let mut carrier = SignedTransaction::new(
            self.party_a,
            self.party_a,
            0,
            0,
            TxPayload {
                kind: crate::ledger::PayloadKind::Other,
                data: self.bytes_for_signing(),
            },
            None,
        );
        carrier.signature = self.signature.clone();
        verify_signature(&carrier)
    }
}

/// Finalized-lock evidence for one chain.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LockReceipt {
    pub chain: String,
    pub party: AccountId,
    pub amount: u64,
    pub block_height: u64,
    pub tx_hash: Digest,
}

impl LockReceipt {
    fn bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96);
        out.extend_from_slice(self.chain.as_bytes());
        out.extend_from_slice(self.party.0.as_bytes());
        out.extend_from_slice(&self.amount.to_be_bytes());
        out.extend_from_slice(&self.block_height.to_be_bytes());
        out.extend_from_slice(self.tx_hash.as_bytes());
        out
    }
}

/// Per-chain escrow: the custody account's per-swap ledger entries.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct CustodyLedger {
    pub entries: BTreeMap<Digest, u64>,
}

impl CustodyLedger {
    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }
}

/// Deterministic custody keypair/account for a chain.
pub fn custody_keypair(chain_id: &str) -> Keypair {
    Keypair::from_seed(&hash_parts(&[b"custody-key", chain_id.as_bytes()]))
}

pub fn custody_account(chain_id: &str) -> AccountId {
    custody_keypair(chain_id).account_id()
}

/// The cross-chain flash-contract state machine instance.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SwapContract {
    pub swap_id: Digest,
    pub chain_a: String,
    pub chain_b: String,
    pub party_a: AccountId,
    pub party_b: Option<AccountId>,
    pub amount_a: u64,
    pub amount_b: u64,
    pub phase: SwapPhase,
    pub lock_receipts: BTreeMap<String, LockReceipt>,
    /// Checksums transmitted at lock time, per chain; sync recomputes
    /// and compares them.
    pub checksums: BTreeMap<String, Digest>,
    /// Cycle deadline for the non-committed phases.
    pub timeout_at: u64,
    pub fee_bps: u64,
}

impl SwapContract {
    fn checksum_for(&self, chain: &str) -> Option<Digest> {
        let receipt = self.lock_receipts.get(chain)?;
        Some(hash_parts(&[
            &receipt.bytes(),
            self.swap_id.as_bytes(),
            &[self.phase_tag_for_checksum()],
        ]))
    }

    fn phase_tag_for_checksum(&self) -> u8 {
        SwapPhase::LockedBoth.tag()
    }
}

/// Drives one swap across two chain instances; owns the simulation's
/// key registry so custody releases and refunds can be signed.
#[derive(Debug)]
pub struct SwapEngine {
    pub contract: SwapContract,
    pub trace: Vec<String>,
    keys: BTreeMap<AccountId, Keypair>,
    pub custody: BTreeMap<String, CustodyLedger>,
    /// Cycles a pipeline transaction may take before the engine treats
    /// it as failed.
    pub finality_bound: u64,
}

/// How many cycles the engine drives a chain while waiting for one
/// transaction to finalize.
const DEFAULT_FINALITY_BOUND: u64 = 4;

impl SwapEngine {
    /// Validate and admit an offer. The key registry starts with the
    /// custody keys of both chains; party keys are registered as they
    /// appear.
    pub fn initiate(
        offer: &SwapOffer,
        chain_a: &ChainInstance,
        now_cycle: u64,
    ) -> Result<SwapEngine, SwapError> {
        if !offer.verify() {
            return Err(SwapError::BadSignature);
        }
        let have = chain_a.balance(&offer.party_a);
        if have < offer.amount_a {
            return Err(SwapError::InsufficientBalance {
                need: offer.amount_a,
                have,
            });
        }
        let contract = SwapContract {
            swap_id: offer.swap_id(),
            chain_a: offer.chain_a.clone(),
            chain_b: offer.chain_b.clone(),
            party_a: offer.party_a,
            party_b: None,
            amount_a: offer.amount_a,
            amount_b: offer.amount_b,
            phase: SwapPhase::Initiated,
            lock_receipts: BTreeMap::new(),
            checksums: BTreeMap::new(),
            timeout_at: now_cycle + offer.timeout_cycles,
            fee_bps: offer.fee_bps,
        };
        let mut keys = BTreeMap::new();
        for chain in [&offer.chain_a, &offer.chain_b] {
            let k = custody_keypair(chain);
            keys.insert(k.account_id(), k);
        }
        let mut custody = BTreeMap::new();
        custody.insert(offer.chain_a.clone(), CustodyLedger::default());
        custody.insert(offer.chain_b.clone(), CustodyLedger::default());
        let mut engine = SwapEngine {
            contract,
            trace: Vec::new(),
            keys,
            custody,
            finality_bound: DEFAULT_FINALITY_BOUND,
        };
        engine.log(&offer.chain_a, now_cycle, "initiated");
        Ok(engine)
    }

    pub fn register_key(&mut self, key: Keypair) {
        self.keys.insert(key.account_id(), key);
    }

    fn log(&mut self, chain: &str, at: u64, detail: &str) {
        self.trace.push(format!(
            "{} {} {} {} {}",
            self.contract.swap_id,
            self.contract.phase.label(),
            at,
            chain,
            detail
        ));
    }

    /// Submit a signed transfer and drive the chain until it finalizes.
    fn run_transfer(
        &mut self,
        chain: &mut ChainInstance,
        from: AccountId,
        to: AccountId,
        value: u64,
        nodes: &[NodeCtx],
    ) -> Result<(u64, Digest), SwapError> {
        let key = self
            .keys
            .get(&from)
            .ok_or(SwapError::UnknownKey(from))?;
        let tx = SignedTransaction::new(
            from,
            to,
            value,
            chain.next_nonce(&from),
            TxPayload::transfer(),
            None,
        );
        let tx = sign_transaction(tx, key).map_err(SwapError::Ledger)?;
        let tx_hash = hash_transaction(&tx);
        let creator = nodes
            .first()
            .map(|n| n.id.clone())
            .unwrap_or_else(|| NodeId::new("relay"));
        chain.submit(tx, &creator)?;
        for _ in 0..self.finality_bound {
            chain.run_cycle(nodes)?;
            match chain.dag.vertex_by_hash(&tx_hash).map(|v| v.status) {
                Some(VertexStatus::Finalized) => {
                    return Ok((chain.blocks.len() as u64, tx_hash));
                }
                Some(VertexStatus::Rejected) => {
                    return Err(SwapError::Pipeline(format!(
                        "transaction {tx_hash} rejected"
                    )));
                }
                _ => {}
            }
        }
        Err(SwapError::Pipeline(format!(
            "transaction {tx_hash} not finalized within bound"
        )))
    }

    /// Phase Initiated: party A locks its asset into chain A custody.
    pub fn lock_a(
        &mut self,
        chain_a: &mut ChainInstance,
        nodes: &[NodeCtx],
    ) -> Result<LockReceipt, SwapError> {
        if self.contract.phase != SwapPhase::Initiated {
            return Err(SwapError::WrongPhase(self.contract.phase));
        }
        self.lock_leg(chain_a, self.contract.party_a, self.contract.amount_a, nodes)?;
        self.contract.phase = SwapPhase::LockedA;
        let chain_id = self.contract.chain_a.clone();
        self.log(&chain_id, chain_a.dag.cycle(), "lock-finalized");
        Ok(self.contract.lock_receipts[&chain_id].clone())
    }

    /// Phase Matched: the bound acceptor locks on chain B.
    pub fn lock_b(
        &mut self,
        chain_b: &mut ChainInstance,
        nodes: &[NodeCtx],
    ) -> Result<LockReceipt, SwapError> {
        if self.contract.phase != SwapPhase::Matched {
            return Err(SwapError::WrongPhase(self.contract.phase));
        }
        let party = self.contract.party_b.expect("matched phase has a party");
        self.lock_leg(chain_b, party, self.contract.amount_b, nodes)?;
        self.contract.phase = SwapPhase::LockedBoth;
        let chain_id = self.contract.chain_b.clone();
        self.log(&chain_id, chain_b.dag.cycle(), "lock-finalized");
        Ok(self.contract.lock_receipts[&chain_id].clone())
    }

    fn lock_leg(
        &mut self,
        chain: &mut ChainInstance,
        party: AccountId,
        amount: u64,
        nodes: &[NodeCtx],
    ) -> Result<(), SwapError> {
        let fee = chain.quote_fee(&SignedTransaction::new(
            party,
            party,
            amount,
            0,
            TxPayload::transfer(),
            None,
        ));
        let have = chain.balance(&party);
        if have < amount + fee {
            return Err(SwapError::InsufficientBalance {
                need: amount + fee,
                have,
            });
        }
        let chain_id = chain.id.clone();
        let custody = custody_account(&chain_id);
        let (height, tx_hash) = self.run_transfer(chain, party, custody, amount, nodes)?;
        let receipt = LockReceipt {
            chain: chain_id.clone(),
            party,
            amount,
            block_height: height,
            tx_hash,
        };
        self.custody
            .get_mut(&chain_id)
            .expect("custody ledger exists")
            .entries
            .insert(self.contract.swap_id, amount);
        self.contract.lock_receipts.insert(chain_id.clone(), receipt);
        Ok(())
    }

    /// Phase LockedA: bind the first sufficient candidate (lowest
    /// account digest) whose chain B balance covers the wanted asset
    /// plus the lock fee. None leaves the contract waiting.
    pub fn flash_match(
        &mut self,
        candidates: &[AccountId],
        chain_b: &ChainInstance,
    ) -> Result<Option<AccountId>, SwapError> {
        if self.contract.phase != SwapPhase::LockedA {
            return Err(SwapError::WrongPhase(self.contract.phase));
        }
        let fee = chain_b.quote_fee(&SignedTransaction::new(
            self.contract.party_a,
            self.contract.party_a,
            self.contract.amount_b,
            0,
            TxPayload::transfer(),
            None,
        ));
        let mut sorted: Vec<AccountId> = candidates.to_vec();
        sorted.sort();
        sorted.dedup();
        for candidate in sorted {
            if chain_b.balance(&candidate) >= self.contract.amount_b + fee {
                self.contract.party_b = Some(candidate);
                self.contract.phase = SwapPhase::Matched;
                let chain_id = self.contract.chain_b.clone();
                self.log(&chain_id, chain_b.dag.cycle(), "acceptor-bound");
                return Ok(Some(candidate));
            }
        }
        Ok(None)
    }

    /// Phase LockedBoth: exchange and verify lock-receipt checksums.
    /// A mismatch aborts the swap and refunds both legs.
    pub fn sync_settle(
        &mut self,
        chain_a: &mut ChainInstance,
        chain_b: &mut ChainInstance,
        nodes_a: &[NodeCtx],
        nodes_b: &[NodeCtx],
    ) -> Result<SwapPhase, SwapError> {
        if self.contract.phase != SwapPhase::LockedBoth {
            return Err(SwapError::WrongPhase(self.contract.phase));
        }
        let mut ok = true;
        for chain_id in [self.contract.chain_a.clone(), self.contract.chain_b.clone()] {
            let recomputed = self.contract.checksum_for(&chain_id);
            let transmitted = self.contract.checksums.get(&chain_id).copied();
            match (recomputed, transmitted) {
                (Some(r), Some(t)) if r == t => {}
                _ => ok = false,
            }
        }
        if ok {
            self.contract.phase = SwapPhase::Synced;
            let chain_id = self.contract.chain_a.clone();
            self.log(&chain_id, chain_a.dag.cycle(), "checksums-agree");
            Ok(SwapPhase::Synced)
        } else {
            let chain_id = self.contract.chain_a.clone();
            self.log(&chain_id, chain_a.dag.cycle(), "checksum-mismatch");
            self.refund_all(chain_a, chain_b, nodes_a, nodes_b, SwapPhase::Aborted)?;
            Ok(SwapPhase::Aborted)
        }
    }

    /// Record the transmitted checksum for a chain (sent with the lock
    /// announcement message).
    pub fn transmit_checksum(&mut self, chain_id: &str) {
        if let Some(c) = self.contract.checksum_for(chain_id) {
            self.contract.checksums.insert(chain_id.to_string(), c);
        }
    }

    /// Test/fault hook: tamper a stored lock receipt after transmission
    /// so recomputation no longer matches.
    pub fn tamper_receipt(&mut self, chain_id: &str) {
        if let Some(r) = self.contract.lock_receipts.get_mut(chain_id) {
            r.amount ^= 1;
        }
    }

    /// Phase Synced: paired custody release on both chains. The swap
    /// fee (fee_bps of each leg) goes to that chain's reward pool.
    /// Either both legs finalize (Published) or the failed state is
    /// compensated back to symmetric originals (Aborted).
    pub fn publish(
        &mut self,
        chain_a: &mut ChainInstance,
        chain_b: &mut ChainInstance,
        nodes_a: &[NodeCtx],
        nodes_b: &[NodeCtx],
    ) -> Result<SwapPhase, SwapError> {
        if self.contract.phase != SwapPhase::Synced {
            return Err(SwapError::WrongPhase(self.contract.phase));
        }
        let party_b = self.contract.party_b.expect("synced phase has a party");
        let fee_a = self.contract.amount_a * self.contract.fee_bps / 10_000;
        let fee_b = self.contract.amount_b * self.contract.fee_bps / 10_000;

        let leg_a = self.release_leg(
            chain_a,
            self.contract.chain_a.clone(),
            party_b,
            self.contract.amount_a,
            fee_a,
            nodes_a,
        );
        let leg_b = self.release_leg(
            chain_b,
            self.contract.chain_b.clone(),
            self.contract.party_a,
            self.contract.amount_b,
            fee_b,
            nodes_b,
        );
        match (leg_a, leg_b) {
            (Ok(_), Ok(_)) => {
                self.contract.phase = SwapPhase::Published;
                let chain_id = self.contract.chain_a.clone();
                self.log(&chain_id, chain_a.dag.cycle(), "both-legs-settled");
                Ok(SwapPhase::Published)
            }
            (a, b) => {
                // compensate whichever leg already settled, then refund
                if let Ok(value) = a {
                    self.compensate_release(chain_a, party_b, value, nodes_a)?;
                }
                if let Ok(value) = b {
                    self.compensate_release(chain_b, self.contract.party_a, value, nodes_b)?;
                }
                self.refund_all(chain_a, chain_b, nodes_a, nodes_b, SwapPhase::Aborted)?;
                Ok(SwapPhase::Aborted)
            }
        }
    }

    fn release_leg(
        &mut self,
        chain: &mut ChainInstance,
        chain_id: String,
        recipient: AccountId,
        amount: u64,
        swap_fee: u64,
        nodes: &[NodeCtx],
    ) -> Result<u64, SwapError> {
        let custody = custody_account(&chain_id);
        // custody pays the pipeline fee out of the locked amount, so the
        // recipient receives amount - swap_fee - pipeline_fee
        let pipeline_fee = chain.quote_fee(&SignedTransaction::new(
            custody,
            recipient,
            0,
            0,
            TxPayload::transfer(),
            None,
        ));
        let value = amount
            .checked_sub(swap_fee + pipeline_fee)
            .ok_or(SwapError::InsufficientBalance {
                need: swap_fee + pipeline_fee,
                have: amount,
            })?;
        self.run_transfer(chain, custody, recipient, value, nodes)?;
        // the swap fee stays behind in custody; route it to the pool
        chain.transfer_to_pool(&custody, swap_fee)?;
        self.custody
            .get_mut(&chain_id)
            .expect("custody ledger exists")
            .entries
            .remove(&self.contract.swap_id);
        self.log(&chain_id, chain.dag.cycle(), "custody-released");
        Ok(value)
    }

    /// Return an already-released leg: the recipient sends the received
    /// value back into custody so the normal refund path applies. The
    /// recipient pays the extra pipeline fee from its own funds.
    fn compensate_release(
        &mut self,
        chain: &mut ChainInstance,
        from: AccountId,
        value: u64,
        nodes: &[NodeCtx],
    ) -> Result<(), SwapError> {
        let chain_id = chain.id.clone();
        let custody = custody_account(&chain_id);
        self.run_transfer(chain, from, custody, value, nodes)?;
        self.custody
            .get_mut(&chain_id)
            .expect("custody ledger exists")
            .entries
            .insert(self.contract.swap_id, value);
        self.log(&chain_id, chain.dag.cycle(), "release-compensated");
        Ok(())
    }

    /// Timeout discipline: at or past the deadline in any non-terminal
    /// phase, return every active lock and close the swap.
    pub fn expire(
        &mut self,
        now_cycle: u64,
        chain_a: &mut ChainInstance,
        chain_b: &mut ChainInstance,
        nodes_a: &[NodeCtx],
        nodes_b: &[NodeCtx],
    ) -> Result<SwapPhase, SwapError> {
        if self.contract.phase.is_terminal() {
            return Ok(self.contract.phase);
        }
        if now_cycle < self.contract.timeout_at {
            return Ok(self.contract.phase);
        }
        // Synced is the commit point: a timed-out synced swap completes
        // its settlement, it never unwinds
        if self.contract.phase == SwapPhase::Synced {
            return self.publish(chain_a, chain_b, nodes_a, nodes_b);
        }
        self.refund_all(chain_a, chain_b, nodes_a, nodes_b, SwapPhase::Refunded)?;
        Ok(self.contract.phase)
    }

    fn refund_all(
        &mut self,
        chain_a: &mut ChainInstance,
        chain_b: &mut ChainInstance,
        nodes_a: &[NodeCtx],
        nodes_b: &[NodeCtx],
        terminal: SwapPhase,
    ) -> Result<(), SwapError> {
        let receipts: Vec<LockReceipt> = self.contract.lock_receipts.values().cloned().collect();
        for receipt in receipts {
            let entry = self
                .custody
                .get(&receipt.chain)
                .and_then(|l| l.entries.get(&self.contract.swap_id))
                .copied();
            let Some(amount) = entry else { continue };
            let (chain, nodes) = if receipt.chain == self.contract.chain_a {
                (&mut *chain_a, nodes_a)
            } else {
                (&mut *chain_b, nodes_b)
            };
            let custody = custody_account(&receipt.chain);
            // custody pays the refund's pipeline fee out of the lock
            let pipeline_fee = chain.quote_fee(&SignedTransaction::new(
                custody,
                receipt.party,
                0,
                0,
                TxPayload::transfer(),
                None,
            ));
            let value = amount.saturating_sub(pipeline_fee);
            if value == 0 {
                continue;
            }
            self.run_transfer(chain, custody, receipt.party, value, nodes)?;
            self.custody
                .get_mut(&receipt.chain)
                .expect("custody ledger exists")
                .entries
                .remove(&self.contract.swap_id);
            let chain_id = receipt.chain.clone();
            let at = chain.dag.cycle();
            self.log(&chain_id, at, "lock-refunded");
        }
        self.contract.phase = terminal;
        let chain_id = self.contract.chain_a.clone();
        let at = chain_a.dag.cycle();
        self.log(&chain_id, at, terminal.label());
        Ok(())
    }
}

/// The protocol's cross-chain message sequence, in order. Dropping a
/// message stalls the phase machine at the guard the message feeds.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProtoStep {
    BroadcastOffer,
    RelayOffer,
    SubmitLockA,
    AnnounceLockA,
    AcceptMatch,
    SubmitLockB,
    AnnounceLockB,
    ChecksumAToB,
    ChecksumBToA,
    ReleaseA,
    ReleaseB,
    Announce,
}

pub const PROTO_STEPS: [ProtoStep; 12] = [
    ProtoStep::BroadcastOffer,
    ProtoStep::RelayOffer,
    ProtoStep::SubmitLockA,
    ProtoStep::AnnounceLockA,
    ProtoStep::AcceptMatch,
    ProtoStep::SubmitLockB,
    ProtoStep::AnnounceLockB,
    ProtoStep::ChecksumAToB,
    ProtoStep::ChecksumBToA,
    ProtoStep::ReleaseA,
    ProtoStep::ReleaseB,
    ProtoStep::Announce,
];
