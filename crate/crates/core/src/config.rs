//! Scenario configuration: JSON schema, strict validation that collects
//! every violation instead of stopping at the first, and the swap offer
//! file format consumed by the CLI.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chain::{ChainConfig, FaultClass};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema violations:\n{}", .0.join("\n"))]
    Schema(Vec<String>),
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default = "default_class")]
    pub class: String,
    #[serde(default = "default_capacity")]
    pub capacity: u64,
    #[serde(default = "one_f64")]
    pub availability: f64,
    #[serde(default)]
    pub fault: FaultSpec,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultSpec {
    #[default]
    Honest,
    Crash,
    Equivocate,
    TamperSegment,
}

impl FaultSpec {
    pub fn to_fault(self) -> FaultClass {
        match self {
            FaultSpec::Honest => FaultClass::Honest,
            FaultSpec::Crash => FaultClass::Crash,
            FaultSpec::Equivocate => FaultClass::Equivocate,
            FaultSpec::TamperSegment => FaultClass::TamperSegment,
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Mean new transactions per cycle (Poisson arrivals).
    pub arrival_rate: f64,
    #[serde(default = "default_accounts")]
    pub accounts: usize,
    #[serde(default = "default_balance")]
    pub initial_balance: u64,
    #[serde(default = "one_u64")]
    pub value_min: u64,
    #[serde(default = "default_value_max")]
    pub value_max: u64,
    /// Fraction of transactions that call the scenario's contract
    /// account instead of transferring to a peer.
    #[serde(default)]
    pub contract_fraction: f64,
}

impl Default for WorkloadSpec {
    fn default() -> WorkloadSpec {
        WorkloadSpec {
            arrival_rate: 1.0,
            accounts: default_accounts(),
            initial_balance: default_balance(),
            value_min: 1,
            value_max: default_value_max(),
            contract_fraction: 0.0,
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NetSpec {
    #[serde(default = "default_latency")]
    pub base_latency_ms: u64,
    #[serde(default = "default_jitter")]
    pub jitter_ms: u64,
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default = "default_cycle_ms")]
    pub cycle_ms: u64,
}

impl Default for NetSpec {
    fn default() -> NetSpec {
        NetSpec {
            base_latency_ms: default_latency(),
            jitter_ms: default_jitter(),
            drop_prob: 0.0,
            cycle_ms: default_cycle_ms(),
        }
    }
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct ChainSpec {
    pub groups_min_size: Option<usize>,
    pub selector_redraw_every: Option<u64>,
    pub shards_count: Option<u32>,
    pub shards_replication: Option<usize>,
    pub shards_rebalance_every: Option<u64>,
    pub friction_initial: Option<f64>,
    pub friction_min: Option<f64>,
    pub friction_max: Option<f64>,
    pub friction_alpha: Option<f64>,
    pub inflation_bps: Option<u64>,
    pub stamp_base_bits: Option<u32>,
    pub velocity_window: Option<usize>,
    pub max_defer_cycles: Option<u64>,
}

impl ChainSpec {
    pub fn to_chain_config(&self, seed: u64) -> ChainConfig {
        let d = ChainConfig::default();
        ChainConfig {
            seed,
            groups_min_size: self.groups_min_size.unwrap_or(d.groups_min_size),
            selector_redraw_every: self.selector_redraw_every.unwrap_or(d.selector_redraw_every),
            shards_count: self.shards_count.unwrap_or(d.shards_count),
            shards_replication: self.shards_replication.unwrap_or(d.shards_replication),
            shards_rebalance_every: self
                .shards_rebalance_every
                .unwrap_or(d.shards_rebalance_every),
            friction_initial: self.friction_initial.unwrap_or(d.friction_initial),
            friction_min: self.friction_min.unwrap_or(d.friction_min),
            friction_max: self.friction_max.unwrap_or(d.friction_max),
            friction_alpha: self.friction_alpha.unwrap_or(d.friction_alpha),
            inflation_bps: self.inflation_bps.unwrap_or(d.inflation_bps),
            stamp_base_bits: self.stamp_base_bits.unwrap_or(d.stamp_base_bits),
            velocity_window: self.velocity_window.unwrap_or(d.velocity_window),
            max_defer_cycles: self.max_defer_cycles.unwrap_or(d.max_defer_cycles),
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct FaultWindowSpec {
    pub node: String,
    pub class: FaultSpec,
    pub from_cycle: u64,
    pub to_cycle: u64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SwapSpec {
    pub amount_a: u64,
    pub amount_b: u64,
    #[serde(default = "default_timeout")]
    pub timeout_cycles: u64,
    #[serde(default = "default_fee_bps")]
    pub fee_bps: u64,
    /// Cycle at which the offer is broadcast.
    #[serde(default = "default_swap_start")]
    pub start_cycle: u64,
    /// Node roster of the counterparty chain; defaults to a mirror of
    /// the main roster under different ids.
    #[serde(default)]
    pub chain_b_nodes: Vec<NodeSpec>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub factors: Vec<u64>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub cycles: u64,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub net: NetSpec,
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub faults: Vec<FaultWindowSpec>,
    #[serde(default)]
    pub swap: Option<SwapSpec>,
    #[serde(default)]
    pub scaling: Option<ScalingSpec>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Offer file consumed by `parax swap`: parties are symbolic names from
/// which deterministic keys are derived.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct OfferFile {
    pub party_a: String,
    pub chain_a: String,
    pub chain_b: String,
    pub amount_a: u64,
    pub amount_b: u64,
    #[serde(default = "default_timeout")]
    pub timeout_cycles: u64,
    #[serde(default = "default_fee_bps")]
    pub fee_bps: u64,
}

fn default_class() -> String {
    "server".into()
}
fn default_capacity() -> u64 {
    100
}
fn one_f64() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn default_accounts() -> usize {
    8
}
fn default_balance() -> u64 {
    100 * crate::ledger::BASE_UNITS_PER_COIN
}
fn default_value_max() -> u64 {
    50_000
}
fn default_latency() -> u64 {
    10
}
fn default_jitter() -> u64 {
    5
}
fn default_cycle_ms() -> u64 {
    500
}
fn default_timeout() -> u64 {
    16
}
fn default_fee_bps() -> u64 {
    150
}
fn default_swap_start() -> u64 {
    2
}

const TOP_KEYS: &[&str] = &[
    "seed", "cycles", "nodes", "workload", "net", "chain", "faults", "swap", "scaling", "out_dir",
];
const NODE_KEYS: &[&str] = &["id", "class", "capacity", "availability", "fault"];
const WORKLOAD_KEYS: &[&str] = &[
    "arrival_rate",
    "accounts",
    "initial_balance",
    "value_min",
    "value_max",
    "contract_fraction",
];
const NET_KEYS: &[&str] = &["base_latency_ms", "jitter_ms", "drop_prob", "cycle_ms"];
const CHAIN_KEYS: &[&str] = &[
    "groups_min_size",
    "selector_redraw_every",
    "shards_count",
    "shards_replication",
    "shards_rebalance_every",
    "friction_initial",
    "friction_min",
    "friction_max",
    "friction_alpha",
    "inflation_bps",
    "stamp_base_bits",
    "velocity_window",
    "max_defer_cycles",
];
const FAULT_KEYS: &[&str] = &["node", "class", "from_cycle", "to_cycle"];
const SWAP_KEYS: &[&str] = &[
    "amount_a",
    "amount_b",
    "timeout_cycles",
    "fee_bps",
    "start_cycle",
    "chain_b_nodes",
];
const SCALING_KEYS: &[&str] = &["factors"];
const OFFER_KEYS: &[&str] = &[
    "party_a",
    "chain_a",
    "chain_b",
    "amount_a",
    "amount_b",
    "timeout_cycles",
    "fee_bps",
];

fn check_keys(value: &Value, allowed: &[&str], at: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = value {
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                out.push(format!("unknown key `{key}` at {at}"));
            }
        }
    } else {
        out.push(format!("{at} must be an object"));
    }
}

fn check_unsigned(value: &Value, key: &str, at: &str, out: &mut Vec<String>) {
    if let Some(v) = value.get(key) {
        if !v.is_u64() {
            out.push(format!("{at}.{key} must be a non-negative integer"));
        }
    }
}

fn check_node_list(value: &Value, at: &str, out: &mut Vec<String>) {
    let Some(items) = value.as_array() else {
        out.push(format!("{at} must be an array"));
        return;
    };
    for (i, node) in items.iter().enumerate() {
        check_keys(node, NODE_KEYS, &format!("{at}[{i}]"), out);
    }
}

/// Structural pass over the raw JSON: unknown keys and wrong-typed
/// counters, gathered exhaustively before strict deserialization.
fn structural_violations(root: &Value) -> Vec<String> {
    let mut out = Vec::new();
    check_keys(root, TOP_KEYS, "top level", &mut out);
    if !root.is_object() {
        return out;
    }
    check_unsigned(root, "seed", "top level", &mut out);
    check_unsigned(root, "cycles", "top level", &mut out);
    if let Some(nodes) = root.get("nodes") {
        check_node_list(nodes, "nodes", &mut out);
    }
    if let Some(v) = root.get("workload") {
        check_keys(v, WORKLOAD_KEYS, "workload", &mut out);
    }
    if let Some(v) = root.get("net") {
        check_keys(v, NET_KEYS, "net", &mut out);
    }
    if let Some(v) = root.get("chain") {
        check_keys(v, CHAIN_KEYS, "chain", &mut out);
    }
    if let Some(v) = root.get("faults") {
        if let Some(items) = v.as_array() {
            for (i, f) in items.iter().enumerate() {
                check_keys(f, FAULT_KEYS, &format!("faults[{i}]"), &mut out);
            }
        } else {
            out.push("faults must be an array".into());
        }
    }
    if let Some(v) = root.get("swap") {
        if !v.is_null() {
            check_keys(v, SWAP_KEYS, "swap", &mut out);
            if let Some(nodes) = v.get("chain_b_nodes") {
                check_node_list(nodes, "swap.chain_b_nodes", &mut out);
            }
        }
    }
    if let Some(v) = root.get("scaling") {
        if !v.is_null() {
            check_keys(v, SCALING_KEYS, "scaling", &mut out);
        }
    }
    out
}

fn semantic_violations(config: &ScenarioConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.nodes.is_empty() {
        out.push("nodes: at least one node is required".into());
    }
    let mut seen = BTreeSet::new();
    let mut check_roster = |nodes: &[NodeSpec], at: &str, out: &mut Vec<String>| {
        for node in nodes {
            if !seen.insert(node.id.clone()) {
                out.push(format!("{at}: duplicate node id `{}`", node.id));
            }
            if node.id.is_empty() {
                out.push(format!("{at}: node id must be non-empty"));
            }
            if node.class != "server" && node.class != "mobile" {
                out.push(format!(
                    "{at}: node `{}` class must be `server` or `mobile`",
                    node.id
                ));
            }
            if node.capacity == 0 {
                out.push(format!("{at}: node `{}` capacity must be positive", node.id));
            }
            if !(0.0..=1.0).contains(&node.availability) {
                out.push(format!(
                    "{at}: node `{}` availability must be within [0, 1]",
                    node.id
                ));
            }
        }
    };
    check_roster(&config.nodes, "nodes", &mut out);

    let w = &config.workload;
    if !w.arrival_rate.is_finite() || w.arrival_rate < 0.0 {
        out.push("workload.arrival_rate must be finite and non-negative".into());
    }
    if w.arrival_rate > 0.0 && w.accounts < 2 {
        out.push("workload.accounts must be at least 2 when transactions arrive".into());
    }
    if w.value_min > w.value_max {
        out.push("workload.value_min must not exceed workload.value_max".into());
    }
    if w.value_min == 0 {
        out.push("workload.value_min must be positive".into());
    }
    if !(0.0..=1.0).contains(&w.contract_fraction) {
        out.push("workload.contract_fraction must be within [0, 1]".into());
    }
    if w.arrival_rate > 0.0 && w.initial_balance == 0 {
        out.push("workload.initial_balance must be positive".into());
    }

    if !(0.0..1.0).contains(&config.net.drop_prob) {
        out.push("net.drop_prob must be within [0, 1)".into());
    }
    if config.net.cycle_ms == 0 {
        out.push("net.cycle_ms must be positive".into());
    }

    let c = &config.chain;
    if c.groups_min_size == Some(0) {
        out.push("chain.groups_min_size must be positive".into());
    }
    if c.shards_count == Some(0) {
        out.push("chain.shards_count must be positive".into());
    }
    if let (Some(min), Some(max)) = (c.friction_min, c.friction_max) {
        if min > max {
            out.push("chain.friction_min must not exceed chain.friction_max".into());
        }
    }
    if let Some(alpha) = c.friction_alpha {
        if !(alpha > 0.0) {
            out.push("chain.friction_alpha must be positive".into());
        }
    }

    let ids: BTreeSet<&str> = config.nodes.iter().map(|n| n.id.as_str()).collect();
    for (i, f) in config.faults.iter().enumerate() {
        if !ids.contains(f.node.as_str()) {
            out.push(format!("faults[{i}]: unknown node `{}`", f.node));
        }
        if f.from_cycle > f.to_cycle {
            out.push(format!("faults[{i}]: from_cycle must not exceed to_cycle"));
        }
    }

    if let Some(s) = &config.swap {
        if s.amount_a == 0 || s.amount_b == 0 {
            out.push("swap amounts must be positive".into());
        }
        if s.fee_bps > 10_000 {
            out.push("swap.fee_bps must not exceed 10000".into());
        }
        if s.timeout_cycles == 0 {
            out.push("swap.timeout_cycles must be positive".into());
        }
        check_roster(&s.chain_b_nodes, "swap.chain_b_nodes", &mut out);
    }

    if let Some(s) = &config.scaling {
        if s.factors.is_empty() {
            out.push("scaling.factors must be non-empty".into());
        }
        if s.factors.iter().any(|&f| f == 0) {
            out.push("scaling.factors must all be positive".into());
        }
    }
    out
}

fn parse_value(text: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Schema(vec![format!("not valid JSON: {e}")]))
}

/// Parse and fully validate a scenario config, reporting every
/// violation found rather than the first.
pub fn validate_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::FileNotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    validate_config_str(&text)
}

pub fn validate_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let root = parse_value(text)?;
    let mut violations = structural_violations(&root);
    match serde_json::from_value::<ScenarioConfig>(root) {
        Ok(config) => {
            violations.extend(semantic_violations(&config));
            if violations.is_empty() {
                Ok(config)
            } else {
                Err(ConfigError::Schema(violations))
            }
        }
        Err(e) => {
            violations.push(format!("deserialization failed: {e}"));
            Err(ConfigError::Schema(violations))
        }
    }
}

/// Parse and validate a swap offer file.
pub fn validate_offer(path: &Path) -> Result<OfferFile, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::FileNotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let root = parse_value(&text)?;
    let mut violations = Vec::new();
    check_keys(&root, OFFER_KEYS, "top level", &mut violations);
    match serde_json::from_value::<OfferFile>(root) {
        Ok(offer) => {
            if offer.amount_a == 0 || offer.amount_b == 0 {
                violations.push("offer amounts must be positive".into());
            }
            if offer.fee_bps > 10_000 {
                violations.push("fee_bps must not exceed 10000".into());
            }
            if offer.chain_a == offer.chain_b {
                violations.push("chain_a and chain_b must differ".into());
            }
            if violations.is_empty() {
                Ok(offer)
            } else {
                Err(ConfigError::Schema(violations))
            }
        }
        Err(e) => {
            violations.push(format!("deserialization failed: {e}"));
            Err(ConfigError::Schema(violations))
        }
    }
}
