//! The token-economy engine: per-cycle supply/demand metrics, the
//! multiplicative friction controller, fee charging, reward-pool
//! distribution, the 10% resource-balance correction band, and explicit
//! inflation minting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::{NodeId, PayloadKind, SignedTransaction};

/// Per-cycle observations feeding the friction controller.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: u64,
    /// Validator count per group (G1..G4).
    pub group_sizes: [usize; 4],
    pub tx_count: u64,
    /// Resource units consumed by finalized transactions this cycle.
    pub resource_units: u64,
    /// Transferred value over mean balance across the sliding window.
    pub velocity: f64,
    /// Resource units offered: sum of capacity x availability over active
    /// nodes.
    pub supply: f64,
    /// Resource units wanted: declared units over pending plus admitted
    /// transactions.
    pub demand: f64,
}

/// Friction controller state. `friction` is the fee per resource unit in
/// HeartBit base units; the minimum is strictly positive, so fees never
/// vanish and never go negative.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct FrictionState {
    pub friction: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub alpha: f64,
    /// Reward-pool balance in base units.
    pub pool: u64,
}

impl FrictionState {
    pub fn new(friction: f64, f_min: f64, f_max: f64, alpha: f64) -> FrictionState {
        assert!(f_min > 0.0, "friction floor must be strictly positive");
        assert!(f_min <= f_max);
        FrictionState {
            friction: friction.clamp(f_min, f_max),
            f_min,
            f_max,
            alpha,
            pool: 0,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum CorrectionAction {
    NoAction,
    RaisePressure,
    EasePressure,
}

/// The 1:1 +/- 10% resource-costing band check.
pub fn check_resource_balance(metrics: &CycleMetrics) -> CorrectionAction {
    if metrics.supply <= 0.0 {
        return CorrectionAction::NoAction;
    }
    let ratio = metrics.demand / metrics.supply;
    if ratio > 1.10 {
        CorrectionAction::RaisePressure
    } else if ratio < 0.90 {
        CorrectionAction::EasePressure
    } else {
        CorrectionAction::NoAction
    }
}

/// Multiplicative controller: `F' = clamp(F * (D/S)^alpha, F_min, F_max)`.
/// Outside the 10% band the exponent doubles for the cycle. Supply of
/// zero holds friction unchanged.
pub fn update_friction(state: &FrictionState, metrics: &CycleMetrics) -> FrictionState {
    let mut next = state.clone();
    if metrics.supply <= 0.0 {
        return next;
    }
    let ratio = metrics.demand / metrics.supply;
    let alpha = match check_resource_balance(metrics) {
        CorrectionAction::NoAction => state.alpha,
        CorrectionAction::RaisePressure | CorrectionAction::EasePressure => state.alpha * 2.0,
    };
    next.friction = (state.friction * ratio.powf(alpha)).clamp(state.f_min, state.f_max);
    next
}

/// Declared resource cost of a transaction: one unit for a plain
/// transfer, one plus payload size / 256 for a contract call.
pub fn resource_units(tx: &SignedTransaction) -> u64 {
    match tx.payload.kind {
        PayloadKind::ContractCall => 1 + tx.payload.data.len() as u64 / 256,
        _ => 1,
    }
}

/// Fee owed by the initiator: friction times resource units, rounded up.
pub fn charge_friction(units: u64, friction: f64) -> u64 {
    (friction * units as f64).ceil() as u64
}

/// Pro-rata pool distribution by participation weight. Integer-division
/// remainder stays in the pool; payouts plus remainder always equal the
/// pool going in.
pub fn distribute_rewards(
    pool: u64,
    weights: &BTreeMap<NodeId, u64>,
) -> (BTreeMap<NodeId, u64>, u64) {
    let total: u128 = weights.values().map(|&w| u128::from(w)).sum();
    if total == 0 {
        return (BTreeMap::new(), pool);
    }
    let mut payouts = BTreeMap::new();
    let mut paid: u64 = 0;
    for (node, &w) in weights {
        let share = (u128::from(pool) * u128::from(w) / total) as u64;
        if share > 0 {
            payouts.insert(node.clone(), share);
            paid += share;
        }
    }
    (payouts, pool - paid)
}

/// Explicit inflation mint at a cycle boundary, in basis points of the
/// current total supply. The minted amount goes to the pool only.
pub fn mint_inflation(total_supply: u64, rate_bps: u64) -> u64 {
    (u128::from(total_supply) * u128::from(rate_bps) / 10_000) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{AccountId, TxPayload, BASE_UNITS_PER_COIN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metrics(supply: f64, demand: f64) -> CycleMetrics {
        CycleMetrics {
            cycle: 1,
            group_sizes: [2, 2, 2, 2],
            tx_count: 0,
            resource_units: 0,
            velocity: 0.0,
            supply,
            demand,
        }
    }

    #[test]
    fn fixed_point_at_equal_supply_demand() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let f = rng.gen_range(1.0..1e6);
            let s = FrictionState::new(f, 1.0, 1e6, rng.gen_range(0.1..2.0));
            let level = rng.gen_range(1.0..1e4);
            let next = update_friction(&s, &metrics(level, level));
            assert_eq!(next.friction, s.friction);
        }
    }

    #[test]
    fn controller_formula_direct_evaluation() {
        let s = FrictionState::new(1.0, 1e-6, 1e6, 1.0);
        let next = update_friction(&s, &metrics(1.0, 1.2));
        // outside the band the exponent doubles: 1.2^2
        assert!((next.friction - 1.2f64.powi(2)).abs() < 1e-12);
        let inside = update_friction(&s, &metrics(1.0, 1.05));
        assert!((inside.friction - 1.05).abs() < 1e-12);
    }

    #[test]
    fn extreme_ratio_clamps_to_max() {
        let s = FrictionState::new(1.0, 1.0, 1e6, 0.5);
        let next = update_friction(&s, &metrics(1.0, 1e6));
        assert_eq!(next.friction, 1e6);
    }

    #[test]
    fn zero_supply_holds_friction() {
        let s = FrictionState::new(3.0, 1.0, 1e6, 0.5);
        assert_eq!(update_friction(&s, &metrics(0.0, 5.0)).friction, 3.0);
    }

    #[test]
    fn monotone_in_demand_and_supply() {
        let s = FrictionState::new(10.0, 1.0, 1e6, 0.5);
        let mut last = 0.0;
        for d in [10.0, 50.0, 100.0, 500.0] {
            let f = update_friction(&s, &metrics(100.0, d)).friction;
            assert!(f >= last);
            last = f;
        }
        let high_supply = update_friction(&s, &metrics(200.0, 100.0)).friction;
        let low_supply = update_friction(&s, &metrics(50.0, 100.0)).friction;
        assert!(high_supply <= low_supply);
    }

    #[test]
    fn friction_stays_positive() {
        let s = FrictionState::new(1.0, 1.0, 1e6, 0.5);
        let next = update_friction(&s, &metrics(1e9, 0.0));
        assert!(next.friction >= 1.0);
    }

    #[test]
    fn correction_band_thresholds() {
        assert_eq!(
            check_resource_balance(&metrics(1.0, 1.05)),
            CorrectionAction::NoAction
        );
        assert_eq!(
            check_resource_balance(&metrics(1.0, 1.2)),
            CorrectionAction::RaisePressure
        );
        assert_eq!(
            check_resource_balance(&metrics(1.0, 0.5)),
            CorrectionAction::EasePressure
        );
    }

    #[test]
    fn fee_arithmetic() {
        assert_eq!(charge_friction(3, 1.0), 3);
        // ceil(0.5 * 3) = 2
        assert_eq!(charge_friction(3, 0.5), 2);
        assert_eq!(charge_friction(0, 7.0), 0);
    }

    #[test]
    fn resource_units_by_kind() {
        let transfer = SignedTransaction::new(
            AccountId::default(),
            AccountId::default(),
            1,
            0,
            TxPayload::transfer(),
            None,
        );
        assert_eq!(resource_units(&transfer), 1);
        let call = SignedTransaction::new(
            AccountId::default(),
            AccountId::default(),
            1,
            0,
            TxPayload {
                kind: PayloadKind::ContractCall,
                data: vec![0; 600],
            },
            None,
        );
        assert_eq!(resource_units(&call), 3);
    }

    #[test]
    fn equal_split_distribution() {
        let pool = 10 * BASE_UNITS_PER_COIN;
        let weights: BTreeMap<NodeId, u64> =
            (0..4).map(|i| (NodeId::new(format!("n{i}")), 1)).collect();
        let (payouts, rem) = distribute_rewards(pool, &weights);
        assert_eq!(rem, 0);
        for p in payouts.values() {
            assert_eq!(*p, 2_500_000);
        }
    }

    #[test]
    fn weighted_split_distribution() {
        let pool = 10 * BASE_UNITS_PER_COIN;
        let mut weights = BTreeMap::new();
        weights.insert(NodeId::new("a"), 3u64);
        weights.insert(NodeId::new("b"), 1u64);
        let (payouts, rem) = distribute_rewards(pool, &weights);
        assert_eq!(payouts[&NodeId::new("a")], 7_500_000);
        assert_eq!(payouts[&NodeId::new("b")], 2_500_000);
        assert_eq!(rem, 0);
    }

    #[test]
    fn empty_participants_carry_pool_forward() {
        let (payouts, rem) = distribute_rewards(42, &BTreeMap::new());
        assert!(payouts.is_empty());
        assert_eq!(rem, 42);
    }

    #[test]
    fn distribution_exactness_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let pool: u64 = rng.gen_range(0..10_000_000);
            let weights: BTreeMap<NodeId, u64> = (0..rng.gen_range(1..9))
                .map(|i| (NodeId::new(format!("n{i}")), rng.gen_range(0..50)))
                .collect();
            let (payouts, rem) = distribute_rewards(pool, &weights);
            let paid: u64 = payouts.values().sum();
            assert_eq!(paid + rem, pool);
        }
    }

    #[test]
    fn mint_arithmetic() {
        assert_eq!(mint_inflation(1_000_000_000, 0), 0);
        assert_eq!(mint_inflation(1_000_000_000, 1), 100_000);
    }

    #[test]
    fn mint_compounds_to_closed_form() {
        // 1% per boundary over an exactly divisible supply
        let mut supply: u64 = 10_000_000_000;
        for _ in 0..2 {
            supply += mint_inflation(supply, 100);
        }
        assert_eq!(supply, 10_201_000_000);
    }

    #[test]
    fn negative_feedback_converges_into_band() {
        // closed loop: demand falls as friction rises (D = k / F)
        let supply = 100.0;
        let k = 2_000.0;
        let mut state = FrictionState::new(1.0, 1.0, 1e6, 0.5);
        let mut in_band_at = None;
        for cycle in 0..200 {
            let demand = k / state.friction;
            let m = metrics(supply, demand);
            if (demand / supply - 1.0).abs() <= 0.1 && in_band_at.is_none() {
                in_band_at = Some(cycle);
            }
            state = update_friction(&state, &m);
        }
        let entered = in_band_at.expect("never entered the 10% band");
        assert!(entered < 200, "entered at {entered}");
        // once converged it stays there
        let demand = k / state.friction;
        assert!((demand / supply - 1.0).abs() <= 0.1);
    }
}
