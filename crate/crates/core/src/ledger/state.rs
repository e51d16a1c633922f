use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use crate::codec::Encoder;
use crate::contract::{ContractState, OpCode};
use crate::crypto::{sha256, Address, StateCommitment};

use super::Genesis;

const STATE_DOMAIN: &[u8] = b"tokengate/state/v1";

/// Contract storage plus per-account nonces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    contract: ContractState,
    nonces: BTreeMap<Address, u64>,
}

impl ChainState {
    pub fn from_genesis(genesis: &Genesis) -> Result<Self, crate::contract::ContractError> {
        Ok(Self {
            contract: ContractState::init(
                genesis.owner,
                genesis.total_supply,
                genesis.op_table.iter().copied(),
                genesis.critical.iter().copied(),
            )?,
            nonces: BTreeMap::new(),
        })
    }

    pub fn contract(&self) -> &ContractState {
        &self.contract
    }

    pub(crate) fn contract_mut(&mut self) -> &mut ContractState {
        &mut self.contract
    }

    /// Next nonce the account must use.
    pub fn nonce_of(&self, account: &Address) -> u64 {
        self.nonces.get(account).copied().unwrap_or(0)
    }

    pub(crate) fn bump_nonce(&mut self, account: Address) {
        *self.nonces.entry(account).or_insert(0) += 1;
    }

    /// SHA-256 over a domain tag and the sorted-key encoding of all storage.
    pub fn commitment(&self) -> StateCommitment {
        let mut enc = Encoder::new();
        enc.raw(STATE_DOMAIN).put(&self.contract);
        enc.len(self.nonces.len());
        for (a, n) in &self.nonces {
            enc.put(a).u64(*n);
        }
        StateCommitment(sha256(&enc.finish()))
    }

    pub fn read(&self, query: &Query) -> StateValue {
        let c = &self.contract;
        match *query {
            Query::Balance(a) => StateValue::Uint(c.balance_of(&a)),
            Query::Nonce(a) => StateValue::Uint(self.nonce_of(&a)),
            Query::Owner => StateValue::Address(c.owner()),
            Query::TotalSupply => StateValue::Uint(c.total_supply()),
            Query::OnProbation(a) => StateValue::Bool(c.is_on_probation(&a)),
            Query::RequiredBalance(op) => c
                .required_balance(op)
                .map_or(StateValue::None, StateValue::Uint),
            Query::CriticalThreshold(op) => c
                .critical_threshold(op)
                .map_or(StateValue::None, StateValue::Uint),
        }
    }
}

/// A read against committed state. Reads are free: no meter is involved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Balance(Address),
    Nonce(Address),
    Owner,
    TotalSupply,
    OnProbation(Address),
    RequiredBalance(OpCode),
    CriticalThreshold(OpCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateValue {
    Uint(u64),
    Address(Address),
    Bool(bool),
    None,
}

impl StateValue {
    pub fn as_u64(self) -> Option<u64> {
        match self {
            StateValue::Uint(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub(crate) struct Committed {
    pub height: u64,
    pub state: Arc<ChainState>,
}

/// Shared read handle onto a node's latest committed state.
///
/// Cloning is cheap; clones observe the same node. Each read sees one
/// immutable snapshot.
#[derive(Debug, Clone)]
pub struct StateReader {
    inner: Arc<RwLock<Committed>>,
}

impl StateReader {
    pub(crate) fn new(height: u64, state: Arc<ChainState>) -> Self {
        Self {
            inner: Arc::new(RwLock::new(Committed { height, state })),
        }
    }

    pub(crate) fn publish(&self, height: u64, state: Arc<ChainState>) {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        *guard = Committed { height, state };
    }

    pub fn snapshot(&self) -> (u64, Arc<ChainState>) {
        let guard = self.inner.read().unwrap_or_else(|e| e.into_inner());
        (guard.height, Arc::clone(&guard.state))
    }

    pub fn height(&self) -> u64 {
        self.snapshot().0
    }

    pub fn read_state(&self, query: &Query) -> StateValue {
        self.snapshot().1.read(query)
    }

    pub fn balance_of(&self, account: &Address) -> u64 {
        self.snapshot().1.contract().balance_of(account)
    }

    pub fn nonce_of(&self, account: &Address) -> u64 {
        self.snapshot().1.nonce_of(account)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genesis() -> Genesis {
        Genesis::new(Address([0xaa; 20]), 100, vec![(OpCode(1), 1)])
    }

    #[test]
    fn equal_states_give_equal_commitments() {
        let a = ChainState::from_genesis(&genesis()).unwrap();
        let b = ChainState::from_genesis(&genesis()).unwrap();
        assert_eq!(a.commitment(), b.commitment());
        let mut c = a.clone();
        c.bump_nonce(Address([1; 20]));
        assert_ne!(a.commitment(), c.commitment());
    }

    #[test]
    fn reads_default_to_zero() {
        let s = ChainState::from_genesis(&genesis()).unwrap();
        assert_eq!(
            s.read(&Query::Balance(Address([9; 20]))),
            StateValue::Uint(0)
        );
        assert_eq!(
            s.read(&Query::Balance(Address([0xaa; 20]))),
            StateValue::Uint(100)
        );
        assert_eq!(s.read(&Query::RequiredBalance(OpCode(9))), StateValue::None);
        assert_eq!(
            s.read(&Query::Owner),
            StateValue::Address(Address([0xaa; 20]))
        );
    }

    #[test]
    fn readers_share_published_state_across_threads() {
        let s = Arc::new(ChainState::from_genesis(&genesis()).unwrap());
        let reader = StateReader::new(0, s);
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let r = reader.clone();
                std::thread::spawn(move || r.balance_of(&Address([0xaa; 20])))
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), 100);
        }
    }
}
