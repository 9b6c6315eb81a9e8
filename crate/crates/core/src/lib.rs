//! Desk-scale simulator for a DAG-fed, shard-grouped ledger with
//! three-stage certificate finality, a cross-chain flash-contract swap
//! protocol, and a friction-based token economy.
//!
//! Everything is deterministic: a scenario is a pure function of
//! (config, seed), so every run can be replayed and audited bit for bit.

pub mod audit;
pub mod chain;
pub mod config;
pub mod consensus;
pub mod dag;
pub mod interop;
pub mod ledger;
pub mod merkle;
pub mod netsim;
pub mod scenario;
pub mod shard;
pub mod tokenomics;

pub use ledger::{AccountId, Digest, NodeId};
