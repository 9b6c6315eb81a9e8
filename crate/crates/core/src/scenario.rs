//! Scenario execution: turn a validated config into one (or two) chain
//! instances driven by the network simulator, generate the workload,
//! orchestrate swaps, and emit the report, metrics, traces, and block
//! archive deterministically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::audit::{audit_chain, write_blocks_file, AuditError, ChainDump};
use crate::chain::{ChainError, ChainInstance, NodeCtx};
use crate::config::{NodeSpec, ScenarioConfig, SwapSpec};
use crate::interop::{custody_account, custody_keypair, SwapEngine, SwapError, SwapOffer, SwapPhase};
use crate::ledger::{
    hash_parts, sign_transaction, Account, AccountId, Keypair, LedgerError, NodeId,
    SignedTransaction, TxPayload,
};
use crate::netsim::{NetConfig, NetSim, NodeProfile, SimError};

pub const CHAIN_A: &str = "alpha";
pub const CHAIN_B: &str = "beta";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Swap(#[from] SwapError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Deterministic workload keypair for an account slot on a chain.
pub fn account_keypair(chain_id: &str, index: usize) -> Keypair {
    Keypair::from_seed(&hash_parts(&[
        b"account-key",
        chain_id.as_bytes(),
        &(index as u64).to_be_bytes(),
    ]))
}

/// The scenario's single contract account on a chain.
pub fn contract_account(chain_id: &str) -> AccountId {
    AccountId(hash_parts(&[b"contract", chain_id.as_bytes()]))
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ChainSummary {
    pub id: String,
    pub final_block_hash: String,
    pub blocks: u64,
    pub finalized: u64,
    pub rejected: u64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SwapSummary {
    pub swap_id: String,
    pub phase: String,
    pub exchanged_value: u64,
    pub total_fees: u64,
    pub fee_fraction: f64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EconomicsSummary {
    pub final_friction: f64,
    pub final_pool: u64,
    pub minted_total: u64,
    pub fees_total: u64,
    pub distributed_total: u64,
    pub final_velocity: f64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct AuditSummary {
    pub pass: bool,
    pub first_violation: Option<String>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub factor: u64,
    pub nodes: usize,
    pub finalized: u64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub cycles: u64,
    pub chains: Vec<ChainSummary>,
    /// Finalized transactions per cycle on the primary chain.
    pub per_cycle_finalized: Vec<u64>,
    pub submitted: u64,
    pub swap: Option<SwapSummary>,
    pub economics: EconomicsSummary,
    pub scaling: Option<Vec<ScalingPoint>>,
    pub audit: AuditSummary,
}

/// Everything a single chain-with-netsim execution produced.
pub struct ExecutedChain {
    pub chain: ChainInstance,
    pub genesis: BTreeMap<AccountId, Account>,
    pub submitted: u64,
}

fn profiles_from_specs(specs: &[NodeSpec]) -> Vec<NodeProfile> {
    specs
        .iter()
        .map(|s| {
            let mut p = if s.class == "mobile" {
                NodeProfile::mobile(s.id.clone(), s.capacity, s.availability)
            } else {
                NodeProfile::server(s.id.clone(), s.capacity)
            };
            p.availability = s.availability;
            p.fault = s.fault.to_fault();
            p
        })
        .collect()
}

fn mirrored_specs(specs: &[NodeSpec]) -> Vec<NodeSpec> {
    specs
        .iter()
        .map(|s| NodeSpec {
            id: format!("m-{}", s.id),
            ..s.clone()
        })
        .collect()
}

fn build_genesis(
    chain_id: &str,
    accounts: usize,
    balance: u64,
    with_contract: bool,
) -> BTreeMap<AccountId, Account> {
    let mut genesis: BTreeMap<AccountId, Account> = (0..accounts)
        .map(|i| {
            let id = account_keypair(chain_id, i).account_id();
            (id, Account::new(id, balance))
        })
        .collect();
    if with_contract {
        let id = contract_account(chain_id);
        let mut account = Account::new(id, 0);
        account.is_contract = true;
        genesis.insert(id, account);
    }
    genesis
}

fn build_sim(
    specs: &[NodeSpec],
    config: &ScenarioConfig,
    seed: u64,
) -> Result<NetSim, ScenarioError> {
    let mut sim = NetSim::new(NetConfig {
        base_latency_ms: config.net.base_latency_ms,
        jitter_ms: config.net.jitter_ms,
        drop_prob: config.net.drop_prob,
        cycle_ms: config.net.cycle_ms,
        seed,
    });
    for profile in profiles_from_specs(specs) {
        sim.spawn_node(profile)?;
    }
    for window in &config.faults {
        // windows only apply to nodes actually in this roster
        let node = NodeId::new(window.node.clone());
        if sim.is_up(&node) {
            sim.inject_fault(&node, window.class.to_fault(), window.from_cycle, window.to_cycle)?;
        }
    }
    Ok(sim)
}

struct Workload {
    keys: Vec<Keypair>,
    rng: ChaCha8Rng,
    arrival: Option<Poisson<f64>>,
    submitted: u64,
}

impl Workload {
    fn new(chain_id: &str, config: &ScenarioConfig, seed: u64) -> Workload {
        let keys: Vec<Keypair> = (0..config.workload.accounts)
            .map(|i| account_keypair(chain_id, i))
            .collect();
        let arrival = if config.workload.arrival_rate > 0.0 {
            Poisson::new(config.workload.arrival_rate).ok()
        } else {
            None
        };
        Workload {
            keys,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x776f_726b_6c6f_6164),
            arrival,
            submitted: 0,
        }
    }

    /// Generate and submit this cycle's arrivals; only transactions the
    /// sender can certainly afford are admitted.
    fn pump(
        &mut self,
        chain: &mut ChainInstance,
        config: &ScenarioConfig,
        creator: &NodeId,
    ) -> Result<(), ScenarioError> {
        let Some(arrival) = &self.arrival else {
            return Ok(());
        };
        let count = arrival.sample(&mut self.rng) as u64;
        let w = &config.workload;
        for _ in 0..count {
            let si = self.rng.gen_range(0..self.keys.len());
            let sender = &self.keys[si];
            let value = self.rng.gen_range(w.value_min..=w.value_max);
            let call_contract = w.contract_fraction > 0.0
                && self.rng.gen_bool(w.contract_fraction.clamp(0.0, 1.0));
            let (to, payload) = if call_contract {
                (contract_account(&chain.id), TxPayload::contract_call(vec![0u8; 64]))
            } else {
                let mut ri = self.rng.gen_range(0..self.keys.len());
                if ri == si {
                    ri = (ri + 1) % self.keys.len();
                }
                (self.keys[ri].account_id(), TxPayload::transfer())
            };
            let tx = SignedTransaction::new(
                sender.account_id(),
                to,
                value,
                chain.next_nonce(&sender.account_id()),
                payload,
                None,
            );
            // admit only if the committed balance covers everything in
            // flight plus this spend, with margin for friction drift
            let fee = chain.quote_fee(&tx);
            let need = chain.pending_spend(&sender.account_id()) + value + fee.saturating_mul(4);
            if chain.balance(&sender.account_id()) < need {
                continue;
            }
            let tx = sign_transaction(tx, sender)?;
            chain.submit(tx, creator)?;
            self.submitted += 1;
        }
        Ok(())
    }
}

/// Execute one chain for `cycles` cycles with its own simulator and
/// workload. The swap hook, when present, fires at its start cycle.
fn execute_chain(
    config: &ScenarioConfig,
    seed: u64,
    specs: &[NodeSpec],
    cycles: u64,
) -> Result<ExecutedChain, ScenarioError> {
    let genesis = build_genesis(
        CHAIN_A,
        config.workload.accounts,
        config.workload.initial_balance,
        config.workload.contract_fraction > 0.0,
    );
    let mut chain = ChainInstance::new(CHAIN_A, config.chain.to_chain_config(seed), genesis.clone());
    let mut sim = build_sim(specs, config, seed)?;
    let mut workload = Workload::new(CHAIN_A, config, seed);
    let creator = NodeId::new(specs[0].id.clone());
    while chain.dag.cycle() < cycles {
        workload.pump(&mut chain, config, &creator)?;
        let ctxs = sim.next_cycle();
        chain.run_cycle(&ctxs)?;
    }
    Ok(ExecutedChain {
        chain,
        genesis,
        submitted: workload.submitted,
    })
}

struct SwapOutcome {
    engine: SwapEngine,
    chain_b: ChainInstance,
    genesis_b: BTreeMap<AccountId, Account>,
    summary: SwapSummary,
}

/// Drive the full two-chain swap script: initiate, lock A, match, lock
/// B, exchange checksums, sync, publish. Timeouts fire via `expire` if
/// any stage stalls past the offer deadline.
fn execute_swap(
    config: &ScenarioConfig,
    spec: &SwapSpec,
    seed: u64,
    chain_a: &mut ChainInstance,
    nodes_a: &[NodeCtx],
) -> Result<SwapOutcome, ScenarioError> {
    let specs_b = if spec.chain_b_nodes.is_empty() {
        mirrored_specs(&config.nodes)
    } else {
        spec.chain_b_nodes.clone()
    };
    let genesis_b = build_genesis(
        CHAIN_B,
        config.workload.accounts,
        config.workload.initial_balance,
        false,
    );
    let mut chain_b = ChainInstance::new(
        CHAIN_B,
        config.chain.to_chain_config(seed ^ 0xb),
        genesis_b.clone(),
    );
    let mut sim_b = build_sim(&specs_b, config, seed ^ 0xb)?;
    // warm both rosters so each chain has a working cycle context
    let nodes_b = sim_b.next_cycle();
    chain_b.run_cycle(&nodes_b)?;

    let party_a = account_keypair(CHAIN_A, 0);
    let offer = SwapOffer {
        party_a: party_a.account_id(),
        chain_a: CHAIN_A.into(),
        chain_b: CHAIN_B.into(),
        amount_a: spec.amount_a,
        amount_b: spec.amount_b,
        timeout_cycles: spec.timeout_cycles,
        fee_bps: spec.fee_bps,
        signature: Vec::new(),
    }
    .sign(&party_a)?;
    let swap_id = offer.swap_id();

    let mut engine = SwapEngine::initiate(&offer, chain_a, chain_a.dag.cycle())?;
    engine.register_key(party_a.clone());
    engine.register_key(custody_keypair(CHAIN_A));
    engine.register_key(custody_keypair(CHAIN_B));
    let candidate_keys: Vec<Keypair> = (1..config.workload.accounts)
        .map(|i| account_keypair(CHAIN_B, i))
        .collect();
    for key in &candidate_keys {
        engine.register_key(key.clone());
    }
    let candidates: Vec<AccountId> = candidate_keys.iter().map(|k| k.account_id()).collect();

    let before_a: u64 = candidates
        .iter()
        .map(|c| chain_a.balance(c))
        .sum::<u64>();
    let before_b = chain_b.balance(&party_a.account_id());

    let result: Result<SwapPhase, SwapError> = (|| {
        engine.lock_a(chain_a, nodes_a)?;
        engine.transmit_checksum(CHAIN_A);
        let matched = engine.flash_match(&candidates, &chain_b)?;
        if matched.is_none() {
            return engine.expire(
                chain_a.dag.cycle().max(engine.contract.timeout_at),
                chain_a,
                &mut chain_b,
                nodes_a,
                &nodes_b,
            );
        }
        engine.lock_b(&mut chain_b, &nodes_b)?;
        engine.transmit_checksum(CHAIN_B);
        engine.sync_settle(chain_a, &mut chain_b, nodes_a, &nodes_b)?;
        if engine.contract.phase == SwapPhase::Synced {
            engine.publish(chain_a, &mut chain_b, nodes_a, &nodes_b)
        } else {
            Ok(engine.contract.phase)
        }
    })();
    let phase = match result {
        Ok(p) => p,
        Err(e) => {
            // a failed pipeline stage stalls the swap; the timeout path
            // refunds whatever is locked
            let _ = e;
            engine.expire(
                engine.contract.timeout_at,
                chain_a,
                &mut chain_b,
                nodes_a,
                &nodes_b,
            )?
        }
    };

    // realized fee = shortfall between locked and delivered value
    let after_a: u64 = candidates.iter().map(|c| chain_a.balance(c)).sum::<u64>();
    let after_b = chain_b.balance(&party_a.account_id());
    let exchanged = spec.amount_a + spec.amount_b;
    let delivered = after_a.saturating_sub(before_a) + after_b.saturating_sub(before_b);
    let total_fees = if phase == SwapPhase::Published {
        exchanged.saturating_sub(delivered)
    } else {
        0
    };
    let summary = SwapSummary {
        swap_id: swap_id.to_hex(),
        phase: phase.label().to_string(),
        exchanged_value: exchanged,
        total_fees,
        fee_fraction: if phase == SwapPhase::Published {
            total_fees as f64 / exchanged as f64
        } else {
            0.0
        },
    };
    Ok(SwapOutcome {
        engine,
        chain_b,
        genesis_b,
        summary,
    })
}

fn scaled_specs(base: &[NodeSpec], factor: u64) -> Vec<NodeSpec> {
    let mut out = Vec::with_capacity(base.len() * factor as usize);
    for k in 0..factor {
        for s in base {
            out.push(NodeSpec {
                id: if k == 0 {
                    s.id.clone()
                } else {
                    format!("{}-x{k}", s.id)
                },
                ..s.clone()
            });
        }
    }
    out
}

fn run_scaling(
    config: &ScenarioConfig,
    seed: u64,
    factors: &[u64],
) -> Result<Vec<ScalingPoint>, ScenarioError> {
    let mut points = Vec::with_capacity(factors.len());
    for &factor in factors {
        let specs = scaled_specs(&config.nodes, factor);
        let mut scaled = config.clone();
        scaled.workload.arrival_rate = config.workload.arrival_rate * factor as f64;
        scaled.workload.accounts = config.workload.accounts * factor as usize;
        let executed = execute_chain(&scaled, seed ^ factor, &specs, config.cycles)?;
        points.push(ScalingPoint {
            factor,
            nodes: specs.len(),
            finalized: executed.chain.finalized_count(),
        });
    }
    Ok(points)
}

fn economics_csv(chain: &ChainInstance) -> String {
    let mut out = String::from("cycle,S,D,F,v,pool,minted,distributed\n");
    for r in &chain.reports {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            r.cycle, r.supply, r.demand, r.friction, r.velocity, r.pool, r.minted, r.distributed
        );
    }
    out
}

/// Run a validated scenario and, when an output directory is given,
/// write `report.json`, `economics.csv`, `trace.log`, and `blocks.bin`.
pub fn run_scenario(
    config: &ScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<RunReport, ScenarioError> {
    let seed = config.seed;
    let genesis_a = build_genesis(
        CHAIN_A,
        config.workload.accounts,
        config.workload.initial_balance,
        config.workload.contract_fraction > 0.0,
    );
    let mut chain_a =
        ChainInstance::new(CHAIN_A, config.chain.to_chain_config(seed), genesis_a.clone());
    let mut sim = build_sim(&config.nodes, config, seed)?;
    let mut workload = Workload::new(CHAIN_A, config, seed);
    let creator = NodeId::new(config.nodes[0].id.clone());

    let mut swap_state: Option<SwapOutcome> = None;
    while chain_a.dag.cycle() < config.cycles {
        if let Some(spec) = &config.swap {
            if swap_state.is_none() && chain_a.dag.cycle() >= spec.start_cycle {
                let nodes_a = sim.next_cycle();
                let outcome = execute_swap(config, spec, seed, &mut chain_a, &nodes_a)?;
                swap_state = Some(outcome);
                continue;
            }
        }
        workload.pump(&mut chain_a, config, &creator)?;
        let ctxs = sim.next_cycle();
        chain_a.run_cycle(&ctxs)?;
    }

    let mut dumps = vec![ChainDump {
        id: chain_a.id.clone(),
        genesis: genesis_a,
        archives: chain_a.archives.clone(),
    }];
    if let Some(s) = &swap_state {
        dumps.push(ChainDump {
            id: s.chain_b.id.clone(),
            genesis: s.genesis_b.clone(),
            archives: s.chain_b.archives.clone(),
        });
    }

    let audit_reports: Vec<_> = dumps.iter().map(audit_chain).collect();
    let audit = AuditSummary {
        pass: audit_reports.iter().all(|r| r.pass()),
        first_violation: audit_reports
            .iter()
            .flat_map(|r| r.violations.iter().map(|v| format!("{}: {v}", r.chain_id)))
            .next(),
    };

    let scaling = match &config.scaling {
        Some(s) => Some(run_scaling(config, seed, &s.factors)?),
        None => None,
    };

    let mut chains = vec![ChainSummary {
        id: chain_a.id.clone(),
        final_block_hash: chain_a.tip_hash().to_hex(),
        blocks: chain_a.blocks.len() as u64,
        finalized: chain_a.finalized_count(),
        rejected: chain_a.rejected_count(),
    }];
    if let Some(s) = &swap_state {
        chains.push(ChainSummary {
            id: s.chain_b.id.clone(),
            final_block_hash: s.chain_b.tip_hash().to_hex(),
            blocks: s.chain_b.blocks.len() as u64,
            finalized: s.chain_b.finalized_count(),
            rejected: s.chain_b.rejected_count(),
        });
    }

    let economics = EconomicsSummary {
        final_friction: chain_a.friction.friction,
        final_pool: chain_a.pool,
        minted_total: chain_a.minted_total,
        fees_total: chain_a.reports.iter().map(|r| r.fees).sum(),
        distributed_total: chain_a.reports.iter().map(|r| r.distributed).sum(),
        final_velocity: chain_a.reports.last().map(|r| r.velocity).unwrap_or(0.0),
    };

    let report = RunReport {
        seed,
        cycles: config.cycles,
        per_cycle_finalized: chain_a.reports.iter().map(|r| r.finalized as u64).collect(),
        submitted: workload.submitted,
        chains,
        swap: swap_state.as_ref().map(|s| s.summary.clone()),
        economics,
        scaling,
        audit,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;
        std::fs::write(dir.join("economics.csv"), economics_csv(&chain_a))?;
        let mut trace = chain_a.trace.join("\n");
        if let Some(s) = &swap_state {
            if !s.chain_b.trace.is_empty() {
                trace.push('\n');
                trace.push_str(&s.chain_b.trace.join("\n"));
            }
            if !s.engine.trace.is_empty() {
                trace.push('\n');
                trace.push_str(&s.engine.trace.join("\n"));
            }
        }
        trace.push('\n');
        std::fs::write(dir.join("trace.log"), trace)?;
        write_blocks_file(&dir.join("blocks.bin"), &dumps)?;
    }
    Ok(report)
}

/// Sanity hook used by tests: custody totals of a finished swap.
pub fn custody_balance(chain: &ChainInstance) -> u64 {
    chain.balance(&custody_account(&chain.id))
}
