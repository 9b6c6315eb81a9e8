//! Deterministic seeded discrete-event network: node lifecycles with
//! mobile duty cycles, message latency and loss, fault-injection
//! windows, and the virtual clock that drives consensus cycles.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{FaultClass, NodeCtx};
use crate::ledger::{hash_parts, Digest, Keypair, NodeId};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum NodeClass {
    Server,
    Mobile,
}

/// A simulated participant's static description.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NodeProfile {
    pub node_id: NodeId,
    pub class: NodeClass,
    /// Resource units validated per cycle.
    pub capacity: u64,
    /// Duty-cycle fraction in [0, 1]; mobile nodes churn around it.
    pub availability: f64,
    pub fault: FaultClass,
}

impl NodeProfile {
    pub fn server(id: impl Into<String>, capacity: u64) -> NodeProfile {
        NodeProfile {
            node_id: NodeId::new(id),
            class: NodeClass::Server,
            capacity,
            availability: 1.0,
            fault: FaultClass::Honest,
        }
    }

    pub fn mobile(id: impl Into<String>, capacity: u64, availability: f64) -> NodeProfile {
        NodeProfile {
            node_id: NodeId::new(id),
            class: NodeClass::Mobile,
            capacity,
            availability,
            fault: FaultClass::Honest,
        }
    }

    /// Deterministic keypair derived from the node id.
    pub fn keypair(&self) -> Keypair {
        Keypair::from_seed(&hash_parts(&[b"node-key", self.node_id.0.as_bytes()]))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SimEventKind {
    Deliver {
        from: NodeId,
        to: NodeId,
        message: Vec<u8>,
    },
    Drop {
        from: NodeId,
        to: NodeId,
    },
    CycleTick {
        cycle: u64,
    },
    NodeUp(NodeId),
    NodeDown(NodeId),
    FaultToggle {
        node: NodeId,
        fault: FaultClass,
    },
}

/// Events execute in (at, seq) order — a total order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SimEvent {
    pub at: u64,
    pub seq: u64,
    pub kind: SimEventKind,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("node {0} already spawned")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NetConfig {
    pub base_latency_ms: u64,
    pub jitter_ms: u64,
    pub drop_prob: f64,
    pub cycle_ms: u64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> NetConfig {
        NetConfig {
            base_latency_ms: 10,
            jitter_ms: 5,
            drop_prob: 0.0,
            cycle_ms: 500,
            seed: 0,
        }
    }
}

struct NodeState {
    profile: NodeProfile,
    up: bool,
}

struct FaultWindow {
    node: NodeId,
    fault: FaultClass,
    from_cycle: u64,
    to_cycle: u64,
}

/// One deterministic simulator instance.
pub struct NetSim {
    pub config: NetConfig,
    clock: u64,
    cycle: u64,
    seq: u64,
    send_counter: u64,
    queue: BinaryHeap<Reverse<SimEvent>>,
    nodes: BTreeMap<NodeId, NodeState>,
    rng: ChaCha8Rng,
    fault_windows: Vec<FaultWindow>,
    /// Send indices forcibly dropped regardless of drop_prob; the model
    /// checker's hook for exhaustive loss enumeration.
    pub forced_drops: std::collections::BTreeSet<u64>,
    pub transcript: Vec<String>,
    pub inboxes: BTreeMap<NodeId, Vec<(NodeId, Vec<u8>)>>,
}

impl NetSim {
    pub fn new(config: NetConfig) -> NetSim {
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e65_7473_696d);
        NetSim {
            config,
            clock: 0,
            cycle: 0,
            seq: 0,
            send_counter: 0,
            queue: BinaryHeap::new(),
            nodes: BTreeMap::new(),
            rng,
            fault_windows: Vec::new(),
            forced_drops: std::collections::BTreeSet::new(),
            transcript: Vec::new(),
            inboxes: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.clock
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn sends(&self) -> u64 {
        self.send_counter
    }

    fn push(&mut self, at: u64, kind: SimEventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(SimEvent { at, seq, kind }));
    }

    pub fn spawn_node(&mut self, profile: NodeProfile) -> Result<NodeId, SimError> {
        if self.nodes.contains_key(&profile.node_id) {
            return Err(SimError::DuplicateNode(profile.node_id));
        }
        let id = profile.node_id.clone();
        self.inboxes.entry(id.clone()).or_default();
        self.nodes.insert(
            id.clone(),
            NodeState {
                profile,
                up: true,
            },
        );
        Ok(id)
    }

    pub fn active_count(&self) -> usize {
        self.nodes.values().filter(|n| n.up).count()
    }

    pub fn is_up(&self, id: &NodeId) -> bool {
        self.nodes.get(id).map(|n| n.up).unwrap_or(false)
    }

    /// Schedule a message; it is delivered, or dropped by chance or by
    /// the forced-drop schedule. Returns the send index.
    pub fn send(&mut self, from: &NodeId, to: &NodeId, message: Vec<u8>) -> u64 {
        let index = self.send_counter;
        self.send_counter += 1;
        let jitter = if self.config.jitter_ms > 0 {
            self.rng.gen_range(0..=self.config.jitter_ms)
        } else {
            0
        };
        let chance_drop = self.config.drop_prob > 0.0 && self.rng.gen_bool(self.config.drop_prob);
        let at = self.clock + self.config.base_latency_ms + jitter;
        if chance_drop || self.forced_drops.contains(&index) {
            self.push(
                at,
                SimEventKind::Drop {
                    from: from.clone(),
                    to: to.clone(),
                },
            );
        } else {
            self.push(
                at,
                SimEventKind::Deliver {
                    from: from.clone(),
                    to: to.clone(),
                    message,
                },
            );
        }
        index
    }

    /// Mark a node faulty within a cycle window.
    pub fn inject_fault(
        &mut self,
        node: &NodeId,
        fault: FaultClass,
        from_cycle: u64,
        to_cycle: u64,
    ) -> Result<(), SimError> {
        if !self.nodes.contains_key(node) {
            return Err(SimError::UnknownNode(node.clone()));
        }
        self.fault_windows.push(FaultWindow {
            node: node.clone(),
            fault,
            from_cycle,
            to_cycle,
        });
        Ok(())
    }

    fn fault_for(&self, node: &NodeId, cycle: u64) -> FaultClass {
        for w in &self.fault_windows {
            if w.node == *node && cycle >= w.from_cycle && cycle <= w.to_cycle {
                return w.fault;
            }
        }
        self.nodes
            .get(node)
            .map(|n| n.profile.fault)
            .unwrap_or(FaultClass::Honest)
    }

    /// Execute the next event; None when the queue is empty.
    pub fn step(&mut self) -> Option<SimEvent> {
        let Reverse(event) = self.queue.pop()?;
        debug_assert!(event.at >= self.clock, "clock never goes backward");
        self.clock = event.at;
        match &event.kind {
            SimEventKind::Deliver { from, to, message } => {
                let delivered = self.is_up(to);
                if delivered {
                    self.inboxes
                        .get_mut(to)
                        .expect("inbox exists for spawned node")
                        .push((from.clone(), message.clone()));
                }
                self.transcript.push(format!(
                    "{} {} deliver {} {} {}",
                    event.at,
                    event.seq,
                    from,
                    to,
                    if delivered { "ok" } else { "down" }
                ));
            }
            SimEventKind::Drop { from, to } => {
                self.transcript
                    .push(format!("{} {} drop {} {} -", event.at, event.seq, from, to));
            }
            SimEventKind::CycleTick { cycle } => {
                self.cycle = *cycle;
                self.transcript
                    .push(format!("{} {} cycle {} - -", event.at, event.seq, cycle));
            }
            SimEventKind::NodeUp(id) => {
                if let Some(n) = self.nodes.get_mut(id) {
                    n.up = true;
                }
                self.transcript
                    .push(format!("{} {} up {} - -", event.at, event.seq, id));
            }
            SimEventKind::NodeDown(id) => {
                if let Some(n) = self.nodes.get_mut(id) {
                    n.up = false;
                }
                self.transcript
                    .push(format!("{} {} down {} - -", event.at, event.seq, id));
            }
            SimEventKind::FaultToggle { node, fault } => {
                self.transcript.push(format!(
                    "{} {} fault {} {:?} -",
                    event.at, event.seq, node, fault
                ));
            }
        }
        Some(event)
    }

    /// Advance to the next cycle boundary: churn mobile nodes, schedule
    /// and execute the tick, and return the cycle's participant set.
    pub fn next_cycle(&mut self) -> Vec<NodeCtx> {
        let next = self.cycle + 1;
        let at = next * self.config.cycle_ms;
        // per-cycle duty draw for mobile nodes, in deterministic order
        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for id in ids {
            let (class, availability, up) = {
                let n = &self.nodes[&id];
                (n.profile.class, n.profile.availability, n.up)
            };
            if class == NodeClass::Mobile {
                let want_up = self.rng.gen_bool(availability.clamp(0.0, 1.0));
                if want_up != up {
                    let kind = if want_up {
                        SimEventKind::NodeUp(id.clone())
                    } else {
                        SimEventKind::NodeDown(id.clone())
                    };
                    self.push(at, kind);
                }
            }
        }
        self.push(at, SimEventKind::CycleTick { cycle: next });
        loop {
            match self.step() {
                Some(SimEvent {
                    kind: SimEventKind::CycleTick { cycle },
                    ..
                }) if cycle == next => break,
                Some(_) => continue,
                None => break,
            }
        }
        self.nodes
            .values()
            .filter(|n| n.up)
            .map(|n| NodeCtx {
                id: n.profile.node_id.clone(),
                capacity: n.profile.capacity,
                availability: n.profile.availability,
                fault: self.fault_for(&n.profile.node_id, self.cycle),
            })
            .collect()
    }

    /// Run cycles until the counter reaches `target`.
    pub fn run_until_cycle(&mut self, target: u64) -> u64 {
        let mut ticks = 0;
        while self.cycle < target {
            self.next_cycle();
            ticks += 1;
        }
        ticks
    }

    /// Digest of the whole transcript, for golden-trace comparisons.
    pub fn transcript_digest(&self) -> Digest {
        let joined = self.transcript.join("\n");
        hash_parts(&[joined.as_bytes()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(seed: u64) -> NetSim {
        NetSim::new(NetConfig {
            seed,
            ..NetConfig::default()
        })
    }

    fn spawn_servers(s: &mut NetSim, n: usize) -> Vec<NodeId> {
        (0..n)
            .map(|i| s.spawn_node(NodeProfile::server(format!("s{i}"), 10)).unwrap())
            .collect()
    }

    #[test]
    fn spawned_servers_are_all_active() {
        let mut s = sim(1);
        spawn_servers(&mut s, 8);
        assert_eq!(s.active_count(), 8);
    }

    #[test]
    fn duplicate_node_rejected() {
        let mut s = sim(1);
        s.spawn_node(NodeProfile::server("a", 10)).unwrap();
        assert_eq!(
            s.spawn_node(NodeProfile::server("a", 10)).unwrap_err(),
            SimError::DuplicateNode(NodeId::new("a"))
        );
    }

    #[test]
    fn zero_drop_prob_delivers_everything() {
        let mut s = NetSim::new(NetConfig {
            drop_prob: 0.0,
            ..NetConfig::default()
        });
        let ids = spawn_servers(&mut s, 2);
        for i in 0..100u8 {
            s.send(&ids[0], &ids[1], vec![i]);
        }
        while s.step().is_some() {}
        assert_eq!(s.inboxes[&ids[1]].len(), 100);
    }

    #[test]
    fn full_drop_prob_delivers_nothing() {
        let mut s = NetSim::new(NetConfig {
            drop_prob: 1.0,
            ..NetConfig::default()
        });
        let ids = spawn_servers(&mut s, 2);
        for i in 0..100u8 {
            s.send(&ids[0], &ids[1], vec![i]);
        }
        while s.step().is_some() {}
        assert!(s.inboxes[&ids[1]].is_empty());
    }

    #[test]
    fn zero_jitter_delivery_at_base_latency() {
        let mut s = NetSim::new(NetConfig {
            base_latency_ms: 10,
            jitter_ms: 0,
            ..NetConfig::default()
        });
        let ids = spawn_servers(&mut s, 2);
        for _ in 0..20 {
            s.send(&ids[0], &ids[1], vec![1]);
        }
        let mut times = Vec::new();
        while let Some(e) = s.step() {
            if matches!(e.kind, SimEventKind::Deliver { .. }) {
                times.push(e.at);
            }
        }
        assert_eq!(times.len(), 20);
        assert!(times.iter().all(|&t| t == 10));
    }

    #[test]
    fn forced_drop_schedule_overrides_delivery() {
        let mut s = sim(3);
        let ids = spawn_servers(&mut s, 2);
        s.forced_drops.insert(1);
        for i in 0..3u8 {
            s.send(&ids[0], &ids[1], vec![i]);
        }
        while s.step().is_some() {}
        let got: Vec<u8> = s.inboxes[&ids[1]].iter().map(|(_, m)| m[0]).collect();
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn same_seed_same_transcript() {
        let run = |seed| {
            let mut s = NetSim::new(NetConfig {
                drop_prob: 0.3,
                jitter_ms: 20,
                seed,
                ..NetConfig::default()
            });
            let ids = spawn_servers(&mut s, 4);
            s.spawn_node(NodeProfile::mobile("m0", 5, 0.5)).unwrap();
            for i in 0..50u8 {
                s.send(&ids[0], &ids[(i % 4) as usize], vec![i]);
            }
            s.run_until_cycle(5);
            while s.step().is_some() {}
            s.transcript_digest()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn clock_is_monotone() {
        let mut s = NetSim::new(NetConfig {
            jitter_ms: 50,
            ..NetConfig::default()
        });
        let ids = spawn_servers(&mut s, 2);
        for i in 0..100u8 {
            s.send(&ids[0], &ids[1], vec![i]);
        }
        s.push(3, SimEventKind::CycleTick { cycle: 0 });
        let mut last = 0;
        while let Some(e) = s.step() {
            assert!(e.at >= last);
            last = e.at;
        }
    }

    #[test]
    fn run_until_executes_exact_cycle_count() {
        let mut s = sim(1);
        spawn_servers(&mut s, 2);
        let ticks = s.run_until_cycle(10);
        assert_eq!(ticks, 10);
        assert_eq!(s.cycle(), 10);
        let cycles = s
            .transcript
            .iter()
            .filter(|l| l.contains(" cycle "))
            .count();
        assert_eq!(cycles, 10);
    }

    #[test]
    fn empty_queue_step_is_noop() {
        let mut s = sim(1);
        assert_eq!(s.step(), None);
        assert_eq!(s.now(), 0);
    }

    #[test]
    fn mobile_duty_cycle_matches_availability() {
        let mut s = sim(7);
        s.spawn_node(NodeProfile::mobile("m0", 5, 0.5)).unwrap();
        let mut up_cycles = 0u32;
        let n = 1000;
        for _ in 0..n {
            let ctxs = s.next_cycle();
            if !ctxs.is_empty() {
                up_cycles += 1;
            }
        }
        // Bernoulli(0.5) over 1000 draws: 3 sigma ~ 47.4
        let sigma = (1000.0_f64 * 0.25).sqrt();
        let bound = (3.0 * sigma).ceil() as u32;
        assert!((500u32.abs_diff(up_cycles)) <= bound, "up {up_cycles}");
    }

    #[test]
    fn fault_window_applies_only_inside_range() {
        let mut s = sim(1);
        let ids = spawn_servers(&mut s, 2);
        s.inject_fault(&ids[0], FaultClass::Crash, 2, 3).unwrap();
        for expected in [
            (1, FaultClass::Honest),
            (2, FaultClass::Crash),
            (3, FaultClass::Crash),
            (4, FaultClass::Honest),
        ] {
            let ctxs = s.next_cycle();
            let ctx = ctxs.iter().find(|c| c.id == ids[0]).unwrap();
            assert_eq!((s.cycle(), ctx.fault), expected);
        }
    }

    #[test]
    fn unknown_node_fault_injection_errors() {
        let mut s = sim(1);
        assert_eq!(
            s.inject_fault(&NodeId::new("ghost"), FaultClass::Crash, 0, 1).unwrap_err(),
            SimError::UnknownNode(NodeId::new("ghost"))
        );
    }

    #[test]
    fn delivery_to_down_node_is_lost() {
        let mut s = NetSim::new(NetConfig {
            jitter_ms: 0,
            ..NetConfig::default()
        });
        let ids = spawn_servers(&mut s, 2);
        s.send(&ids[0], &ids[1], vec![1]);
        s.push(5, SimEventKind::NodeDown(ids[1].clone()));
        while s.step().is_some() {}
        assert!(s.inboxes[&ids[1]].is_empty());
    }
}
