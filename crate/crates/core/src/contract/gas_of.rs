//! Static gas prediction.
//!
//! Computes, from a read-only view of the state, which primitives a call
//! will be charged for. This walks the cost rules directly rather than
//! running the call, so the two can be checked against each other.

use crate::crypto::Address;
use crate::gas::{GasBreakdown, GasCharge};

use super::{Call, ContractState};

/// Gas of deploying the contract: the base cost plus creating the owner's
/// balance entry.
pub fn init_gas() -> GasBreakdown {
    GasBreakdown::new()
        .with(GasCharge::TxBase, 1)
        .with(GasCharge::MapEntryCreate, 1)
}

/// Predicted gas of `call` sent by `caller` against `state`, including the
/// per-transaction base.
pub fn gas_of(state: &ContractState, caller: Address, call: &Call) -> GasBreakdown {
    use GasCharge::*;

    let base = GasBreakdown::new().with(TxBase, 1);
    let is_owner = caller == state.owner();
    let entry_write = |exists: bool| {
        if exists {
            MapEntryModify
        } else {
            MapEntryCreate
        }
    };

    match *call {
        Call::InvokeOperation { op, .. } => {
            let Some(required) = state.required_balance(op) else {
                return base;
            };
            let balance = state.balance_of(&caller);
            if balance < required {
                return base.with(MapSearch, 1);
            }
            let critical_lookup = u32::from(state.has_critical_ops());
            let authorization_only = state.critical_threshold(op).is_some_and(|t| balance < t);
            let decrement = !authorization_only && state.is_on_probation(&caller);
            base.with(MapSearch, 1 + critical_lookup)
                .with(EventEmit, 1)
                .with(MapEntryModify, if decrement { 2 } else { 0 })
        }
        Call::BalanceOf { .. } => base.with(MapSearch, 1),
        Call::Transfer { to, amount } => {
            if !is_owner && to != state.owner() {
                return base;
            }
            if state.balance_of(&caller) < amount {
                return base.with(MapSearch, 1);
            }
            base.with(MapSearch, 1)
                .with(MapEntryModify, 1)
                .with(entry_write(state.has_balance_entry(&to)), 1)
        }
        Call::SetProbation { target, .. } => {
            if !is_owner {
                return base;
            }
            base.with(entry_write(state.has_probation_entry(&target)), 1)
        }
        Call::Panic { target } => {
            if !is_owner {
                return base;
            }
            let owner = state.owner();
            let resets = match target {
                Some(t) => u32::from(t != owner && state.balance_of(&t) > 0),
                None => state
                    .balances()
                    .filter(|(a, b)| **a != owner && **b > 0)
                    .count() as u32,
            };
            let search = u32::from(target.is_some());
            let owner_credit = u32::from(resets > 0);
            base.with(MapSearch, search)
                .with(MapEntryModify, resets + owner_credit)
        }
        Call::SetOperation {
            op,
            required_balance,
        } => {
            if !is_owner || required_balance == 0 {
                return base;
            }
            base.with(entry_write(state.required_balance(op).is_some()), 1)
        }
        Call::MarkCritical { op, threshold } => {
            if !is_owner || threshold == 0 {
                return base;
            }
            base.with(entry_write(state.critical_threshold(op).is_some()), 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{OpCode, UriDigest};
    use crate::gas::{GasMeter, GasSchedule};
    use proptest::prelude::*;

    const OWNER: Address = Address([0xaa; 20]);

    fn accounts() -> [Address; 4] {
        [OWNER, Address([1; 20]), Address([2; 20]), Address([3; 20])]
    }

    #[test]
    fn plain_invoke_costs_24593() {
        let mut c = ContractState::init(OWNER, 10, [(OpCode(1), 1)], []).unwrap();
        let schedule = GasSchedule::default();
        let a = Address([1; 20]);
        c.transfer(OWNER, a, 1, &mut GasMeter::new(&schedule))
            .unwrap();
        let call = Call::InvokeOperation {
            op: OpCode(1),
            uri: UriDigest::of("building6/floor3/room2"),
        };
        // 21000 + 1033 + 2560
        assert_eq!(gas_of(&c, a, &call).total(&schedule), 24_593);
    }

    #[test]
    fn transfer_to_new_recipient_includes_entry_creation() {
        let c = ContractState::init(OWNER, 10, [(OpCode(1), 1)], []).unwrap();
        let call = Call::Transfer {
            to: Address([5; 20]),
            amount: 1,
        };
        let g = gas_of(&c, OWNER, &call);
        assert_eq!(g.count(GasCharge::MapEntryCreate), 1);
        assert_eq!(
            g.total(&GasSchedule::default()),
            21_000 + 1_033 + 6_110 + 45_938
        );
    }

    #[test]
    fn init_gas_is_base_plus_entry_creation() {
        assert_eq!(init_gas().total(&GasSchedule::default()), 21_000 + 45_938);
    }

    fn arb_call() -> impl Strategy<Value = (usize, Call)> {
        let acct = 0usize..4;
        let op = (0u8..4).prop_map(OpCode);
        let call = prop_oneof![
            (op.clone(), any::<u8>()).prop_map(|(op, b)| Call::InvokeOperation {
                op,
                uri: UriDigest([b; 32])
            }),
            acct.clone().prop_map(|i| Call::BalanceOf {
                account: accounts()[i]
            }),
            (acct.clone(), 0u64..6).prop_map(|(i, amount)| Call::Transfer {
                to: accounts()[i],
                amount
            }),
            (acct.clone(), any::<bool>()).prop_map(|(i, enabled)| Call::SetProbation {
                target: accounts()[i],
                enabled
            }),
            proptest::option::of(acct.clone()).prop_map(|t| Call::Panic {
                target: t.map(|i| accounts()[i])
            }),
            (op.clone(), 0u64..4).prop_map(|(op, required_balance)| Call::SetOperation {
                op,
                required_balance
            }),
            (op, 0u64..6).prop_map(|(op, threshold)| Call::MarkCritical { op, threshold }),
        ];
        (0usize..4, call)
    }

    proptest! {
        /// The prediction matches the meter on every call of every sequence.
        #[test]
        fn prediction_matches_meter(calls in proptest::collection::vec(arb_call(), 1..60)) {
            let schedule = GasSchedule::default();
            let mut state = ContractState::init(OWNER, 20, [(OpCode(1), 1), (OpCode(2), 2)], [])
                .unwrap();
            for (who, call) in calls {
                let caller = accounts()[who];
                let predicted = gas_of(&state, caller, &call);
                let mut meter = GasMeter::new(&schedule);
                meter.charge(GasCharge::TxBase);
                let _ = state.execute(caller, &call, &mut meter);
                prop_assert_eq!(predicted, meter.breakdown());
                prop_assert_eq!(state.balance_sum(), 20);
            }
        }
    }
}
