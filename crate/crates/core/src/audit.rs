//! Replay audit: re-derive the whole chain state from genesis and the
//! block archive, checking hashes, signatures, certificate chains, and
//! conservation at every block. Also defines the on-disk container
//! format for archived chains (`blocks.bin`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{genesis_hash, node_reward_account, BlockArchive};
use crate::consensus::{quorum_for, state_root, TrieCommitment};
use crate::ledger::{
    hash_parts, hash_transaction, verify_signature, Account, AccountId, CertStage, Digest,
    LedgerError,
};

const MAGIC: &[u8; 4] = b"PAXB";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt output: {0}")]
    CorruptOutput(String),
}

impl From<LedgerError> for AuditError {
    fn from(e: LedgerError) -> AuditError {
        AuditError::CorruptOutput(e.to_string())
    }
}

/// One discrepancy found during replay, pinned to its block.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AuditViolation {
    pub height: u64,
    pub cycle: u64,
    pub what: String,
}

impl std::fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "height {} cycle {}: {}",
            self.height, self.cycle, self.what
        )
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub chain_id: String,
    pub blocks: usize,
    pub txs: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Everything needed to replay one chain: its identifier, the genesis
/// account map, and every archived block in height order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChainDump {
    pub id: String,
    pub genesis: BTreeMap<AccountId, Account>,
    pub archives: Vec<BlockArchive>,
}

pub fn encode_dumps(dumps: &[ChainDump]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.extend_from_slice(&(dumps.len() as u32).to_be_bytes());
    for dump in dumps {
        let id = dump.id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_be_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(dump.genesis.len() as u32).to_be_bytes());
        for account in dump.genesis.values() {
            out.extend_from_slice(account.id.0.as_bytes());
            out.extend_from_slice(&account.balance.to_be_bytes());
            out.push(u8::from(account.is_contract));
        }
        out.extend_from_slice(&(dump.archives.len() as u32).to_be_bytes());
        for archive in &dump.archives {
            let bytes = archive.encode();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
    }
    out
}

pub fn decode_dumps(buf: &[u8]) -> Result<Vec<ChainDump>, AuditError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], AuditError> {
        if *pos + n > buf.len() {
            return Err(AuditError::CorruptOutput("truncated blocks file".into()));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let take_u32 = |pos: &mut usize| -> Result<u32, AuditError> {
        let mut a = [0u8; 4];
        a.copy_from_slice(take(pos, 4)?);
        Ok(u32::from_be_bytes(a))
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(AuditError::CorruptOutput("bad magic".into()));
    }
    let version = take_u32(&mut pos)?;
    if version != VERSION {
        return Err(AuditError::CorruptOutput(format!(
            "unsupported blocks file version {version}"
        )));
    }
    let chain_count = take_u32(&mut pos)? as usize;
    let mut dumps = Vec::with_capacity(chain_count);
    for _ in 0..chain_count {
        let id_len = take_u32(&mut pos)? as usize;
        let id = std::str::from_utf8(take(&mut pos, id_len)?)
            .map_err(|_| AuditError::CorruptOutput("chain id is not utf-8".into()))?
            .to_string();
        let n_genesis = take_u32(&mut pos)? as usize;
        let mut genesis = BTreeMap::new();
        for _ in 0..n_genesis {
            let mut arr = [0u8; 32];
            arr.copy_from_slice(take(&mut pos, 32)?);
            let account_id = AccountId(Digest(arr));
            let mut bal = [0u8; 8];
            bal.copy_from_slice(take(&mut pos, 8)?);
            let is_contract = take(&mut pos, 1)?[0] != 0;
            let mut account = Account::new(account_id, u64::from_be_bytes(bal));
            account.is_contract = is_contract;
            genesis.insert(account_id, account);
        }
        let n_archives = take_u32(&mut pos)? as usize;
        let mut archives = Vec::with_capacity(n_archives);
        for _ in 0..n_archives {
            let len = take_u32(&mut pos)? as usize;
            let bytes = take(&mut pos, len)?;
            let (archive, used) = BlockArchive::decode(bytes)?;
            if used != len {
                return Err(AuditError::CorruptOutput("trailing archive bytes".into()));
            }
            archives.push(archive);
        }
        dumps.push(ChainDump {
            id,
            genesis,
            archives,
        });
    }
    if pos != buf.len() {
        return Err(AuditError::CorruptOutput("trailing bytes".into()));
    }
    Ok(dumps)
}

pub fn write_blocks_file(path: &Path, dumps: &[ChainDump]) -> Result<(), AuditError> {
    Ok(std::fs::write(path, encode_dumps(dumps))?)
}

pub fn read_blocks_file(path: &Path) -> Result<Vec<ChainDump>, AuditError> {
    decode_dumps(&std::fs::read(path)?)
}

/// Replay one chain from genesis and report every discrepancy found.
pub fn audit_chain(dump: &ChainDump) -> AuditReport {
    let mut violations = Vec::new();
    let mut accounts = dump.genesis.clone();
    let mut pool: u64 = 0;
    let initial_supply: u64 = accounts.values().map(|a| a.balance).sum();
    let mut minted_total: u64 = 0;
    let mut prev_hash = genesis_hash(&dump.id, &accounts);
    let mut txs = 0usize;

    for (idx, archive) in dump.archives.iter().enumerate() {
        let block = &archive.block;
        let height = block.height;
        let cycle = block.cycle;
        let mut flag = |what: String| {
            violations.push(AuditViolation {
                height,
                cycle,
                what,
            })
        };

        if height != idx as u64 + 1 {
            flag(format!("height {} out of order (expected {})", height, idx + 1));
        }
        if block.prev_hash != prev_hash {
            flag("previous block hash does not chain".into());
        }
        prev_hash = block.hash();

        for (account_id, amount) in &archive.pre_pool_credits {
            let entry = accounts
                .entry(*account_id)
                .or_insert_with(|| Account::new(*account_id, 0));
            if entry.balance < *amount {
                flag(format!(
                    "pool credit of {amount} overdraws account {account_id}"
                ));
                entry.balance = 0;
            } else {
                entry.balance -= amount;
            }
            pool += amount;
        }

        if block.tx_hashes.len() != archive.entries.len() {
            flag(format!(
                "block lists {} transactions but archive holds {}",
                block.tx_hashes.len(),
                archive.entries.len()
            ));
        }

        let mut trie = TrieCommitment::default();
        for (ti, entry) in archive.entries.iter().enumerate() {
            txs += 1;
            let tx_hash = hash_transaction(&entry.tx);
            if block.tx_hashes.get(ti) != Some(&tx_hash) {
                flag(format!("transaction {ti} not listed in block header"));
            }
            if !verify_signature(&entry.tx) {
                flag(format!("transaction {tx_hash} has an invalid signature"));
            }
            let [init, val, cons] = &entry.certs;
            if init.stage != CertStage::Initiator || init.subject != tx_hash {
                flag(format!("initiator certificate mismatch for {tx_hash}"));
            }
            if val.stage != CertStage::Validator || val.subject != init.cert_hash {
                flag(format!("validator certificate does not chain for {tx_hash}"));
            }
            if cons.stage != CertStage::Constructor || cons.subject != val.cert_hash {
                flag(format!(
                    "constructor certificate does not chain for {tx_hash}"
                ));
            }
            for (label, cert) in [("initiator", init), ("validator", val), ("constructor", cons)]
            {
                if cert.recompute_hash() != cert.cert_hash {
                    flag(format!("{label} certificate hash does not recompute"));
                }
            }
            let distinct: std::collections::BTreeSet<_> = val.signers.iter().collect();
            if distinct.len() < quorum_for(entry.committee as usize) {
                flag(format!(
                    "validator certificate for {tx_hash} has {} signers, quorum is {}",
                    distinct.len(),
                    quorum_for(entry.committee as usize)
                ));
            }
            trie.insert(entry.group, init.cert_hash);
            trie.insert(entry.group, val.cert_hash);
            trie.insert(entry.group, cons.cert_hash);

            // re-apply the transfer
            let need = entry.tx.value.saturating_add(entry.fee);
            let sender = accounts
                .entry(entry.tx.sender)
                .or_insert_with(|| Account::new(entry.tx.sender, 0));
            if entry.tx.nonce != sender.nonce {
                flag(format!(
                    "transaction {tx_hash} applied with nonce {} (expected {})",
                    entry.tx.nonce, sender.nonce
                ));
            }
            if sender.balance < need {
                flag(format!("transaction {tx_hash} overdraws its sender"));
                sender.balance = 0;
            } else {
                sender.balance -= need;
            }
            sender.nonce += 1;
            accounts
                .entry(entry.tx.to)
                .or_insert_with(|| Account::new(entry.tx.to, 0))
                .balance += entry.tx.value;
            pool += entry.fee;
        }

        if state_root(&accounts, pool) != block.state_root {
            flag("state root does not replay".into());
        }
        if trie.root() != block.cert_root {
            flag("certificate root does not replay".into());
        }
        let block_subject = hash_parts(&[
            b"block",
            &block.height.to_be_bytes(),
            block.cert_root.as_bytes(),
            block.state_root.as_bytes(),
        ]);
        let bc = &block.constructor_cert;
        if bc.stage != CertStage::Constructor
            || bc.subject != block_subject
            || bc.proof != block.cert_root
            || bc.recompute_hash() != bc.cert_hash
        {
            flag("block constructor certificate does not verify".into());
        }

        pool += archive.minted;
        minted_total += archive.minted;
        for (node, amount) in &archive.payouts {
            if pool < *amount {
                flag(format!("payout of {amount} to {node:?} overdraws the pool"));
                pool = 0;
            } else {
                pool -= amount;
            }
            let acct = node_reward_account(node);
            accounts
                .entry(acct)
                .or_insert_with(|| Account::new(acct, 0))
                .balance += amount;
        }

        let ledger: u64 = accounts.values().map(|a| a.balance).sum::<u64>() + pool;
        if ledger != initial_supply + minted_total {
            flag(format!(
                "conservation broken: ledger {ledger}, expected {}",
                initial_supply + minted_total
            ));
        }
    }

    AuditReport {
        chain_id: dump.id.clone(),
        blocks: dump.archives.len(),
        txs,
        violations,
    }
}

/// Audit every chain in a blocks file.
pub fn audit_blocks_file(path: &Path) -> Result<Vec<AuditReport>, AuditError> {
    Ok(read_blocks_file(path)?.iter().map(audit_chain).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainConfig, ChainInstance, NodeCtx};
    use crate::ledger::{
        sign_transaction, Keypair, NodeId, SignedTransaction, TxPayload, BASE_UNITS_PER_COIN,
    };

    fn keys(n: usize) -> Vec<Keypair> {
        (0..n)
            .map(|i| Keypair::from_seed(&hash_parts(&[b"audit-test", &(i as u64).to_be_bytes()])))
            .collect()
    }

    fn nodes(n: usize) -> Vec<NodeCtx> {
        (0..n)
            .map(|i| NodeCtx::honest(NodeId::new(format!("n{i:02}")), 100))
            .collect()
    }

    fn run_chain(cycles: u64) -> (ChainInstance, ChainDump) {
        let ks = keys(3);
        let genesis: BTreeMap<AccountId, Account> = ks
            .iter()
            .map(|k| (k.account_id(), Account::new(k.account_id(), 100 * BASE_UNITS_PER_COIN)))
            .collect();
        let mut chain = ChainInstance::new("audited", ChainConfig::default(), genesis.clone());
        for i in 0..cycles {
            let tx = SignedTransaction::new(
                ks[0].account_id(),
                ks[1].account_id(),
                1_000 + i,
                i,
                TxPayload::transfer(),
                None,
            );
            let tx = sign_transaction(tx, &ks[0]).unwrap();
            chain.submit(tx, &NodeId::new("n00")).unwrap();
            chain.run_cycle(&nodes(8)).unwrap();
        }
        let dump = ChainDump {
            id: chain.id.clone(),
            genesis,
            archives: chain.archives.clone(),
        };
        (chain, dump)
    }

    #[test]
    fn honest_run_replays_clean() {
        let (chain, dump) = run_chain(5);
        let report = audit_chain(&dump);
        assert!(report.pass(), "violations: {:?}", report.violations);
        assert_eq!(report.blocks, 5);
        assert_eq!(report.txs, 5);
        assert_eq!(chain.finalized_count(), 5);
    }

    #[test]
    fn pool_credit_is_replayed() {
        let ks = keys(3);
        let genesis: BTreeMap<AccountId, Account> = ks
            .iter()
            .map(|k| (k.account_id(), Account::new(k.account_id(), 100 * BASE_UNITS_PER_COIN)))
            .collect();
        let mut chain = ChainInstance::new("credited", ChainConfig::default(), genesis.clone());
        chain.run_cycle(&nodes(8)).unwrap();
        chain.transfer_to_pool(&ks[0].account_id(), 777).unwrap();
        chain.run_cycle(&nodes(8)).unwrap();
        let dump = ChainDump {
            id: chain.id.clone(),
            genesis,
            archives: chain.archives.clone(),
        };
        assert_eq!(dump.archives[1].pre_pool_credits, vec![(ks[0].account_id(), 777)]);
        let report = audit_chain(&dump);
        assert!(report.pass(), "violations: {:?}", report.violations);
    }

    #[test]
    fn tampered_value_breaks_state_root() {
        let (_, mut dump) = run_chain(3);
        dump.archives[1].entries[0].tx.value += 1;
        let report = audit_chain(&dump);
        assert!(!report.pass());
        assert!(report
            .violations
            .iter()
            .any(|v| v.what.contains("signature") || v.what.contains("state root")));
        assert_eq!(report.violations[0].height, 2);
    }

    #[test]
    fn tampered_certificate_is_flagged() {
        let (_, mut dump) = run_chain(2);
        dump.archives[0].entries[0].certs[1].cycle += 1;
        let report = audit_chain(&dump);
        assert!(report
            .violations
            .iter()
            .any(|v| v.what.contains("does not recompute")));
    }

    #[test]
    fn forged_payout_is_flagged() {
        let (_, mut dump) = run_chain(2);
        dump.archives[0]
            .payouts
            .push((NodeId::new("zz"), 1_000_000));
        let report = audit_chain(&dump);
        assert!(report.violations.iter().any(|v| {
            v.what.contains("overdraws the pool")
                || v.what.contains("conservation")
                || v.what.contains("state root")
        }));
    }

    #[test]
    fn blocks_file_round_trip_and_corruption() {
        let (_, dump) = run_chain(2);
        let bytes = encode_dumps(&[dump.clone()]);
        let decoded = decode_dumps(&bytes).unwrap();
        assert_eq!(decoded, vec![dump]);
        let mut bad = bytes.clone();
        bad.truncate(bad.len() - 3);
        assert!(matches!(
            decode_dumps(&bad),
            Err(AuditError::CorruptOutput(_))
        ));
        let mut wrong_magic = bytes;
        wrong_magic[0] = b'X';
        assert!(matches!(
            decode_dumps(&wrong_magic),
            Err(AuditError::CorruptOutput(_))
        ));
    }
}
