use std::collections::BTreeMap;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::crypto::Address;
use crate::gas::{GasCharge, GasMeter};

use super::{Call, ContractError, Event, OpCode, UriDigest};

/// Storage of the deployed contract.
///
/// Every check a call performs happens before its first write, so a failing
/// call leaves the state untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractState {
    owner: Address,
    total_supply: u64,
    balances: BTreeMap<Address, u64>,
    /// Entries persist once written, so re-enabling charges a modification.
    probation: BTreeMap<Address, bool>,
    op_table: BTreeMap<OpCode, u64>,
    critical: BTreeMap<OpCode, u64>,
}

/// What a successful call produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub events: Vec<Event>,
    pub output: Option<u64>,
}

impl ContractState {
    /// Deploys the contract with every token assigned to `owner`.
    pub fn init(
        owner: Address,
        total_supply: u64,
        op_table: impl IntoIterator<Item = (OpCode, u64)>,
        critical: impl IntoIterator<Item = (OpCode, u64)>,
    ) -> Result<Self, ContractError> {
        if total_supply == 0 {
            return Err(ContractError::ZeroSupply);
        }
        let op_table: BTreeMap<_, _> = op_table.into_iter().collect();
        let critical: BTreeMap<_, _> = critical.into_iter().collect();
        if let Some((&op, _)) = op_table.iter().chain(&critical).find(|(_, &v)| v == 0) {
            return Err(ContractError::ZeroThreshold(op));
        }
        Ok(Self {
            owner,
            total_supply,
            balances: BTreeMap::from([(owner, total_supply)]),
            probation: BTreeMap::new(),
            op_table,
            critical,
        })
    }

    pub fn owner(&self) -> Address {
        self.owner
    }

    pub fn total_supply(&self) -> u64 {
        self.total_supply
    }

    /// Unmetered read; absent accounts hold 0.
    pub fn balance_of(&self, account: &Address) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn has_balance_entry(&self, account: &Address) -> bool {
        self.balances.contains_key(account)
    }

    pub fn balances(&self) -> impl Iterator<Item = (&Address, &u64)> {
        self.balances.iter()
    }

    pub fn balance_sum(&self) -> u128 {
        self.balances.values().map(|&b| u128::from(b)).sum()
    }

    pub fn is_on_probation(&self, account: &Address) -> bool {
        self.probation.get(account).copied().unwrap_or(false)
    }

    pub fn has_probation_entry(&self, account: &Address) -> bool {
        self.probation.contains_key(account)
    }

    pub fn probation_list(&self) -> impl Iterator<Item = &Address> {
        self.probation.iter().filter_map(|(a, &on)| on.then_some(a))
    }

    pub fn required_balance(&self, op: OpCode) -> Option<u64> {
        self.op_table.get(&op).copied()
    }

    pub fn critical_threshold(&self, op: OpCode) -> Option<u64> {
        self.critical.get(&op).copied()
    }

    pub fn has_critical_ops(&self) -> bool {
        !self.critical.is_empty()
    }

    pub fn op_table(&self) -> &BTreeMap<OpCode, u64> {
        &self.op_table
    }

    pub fn critical_table(&self) -> &BTreeMap<OpCode, u64> {
        &self.critical
    }

    /// Runs `call` on behalf of `caller`.
    pub fn execute(
        &mut self,
        caller: Address,
        call: &Call,
        meter: &mut GasMeter<'_>,
    ) -> Result<Outcome, ContractError> {
        match *call {
            Call::InvokeOperation { op, uri } => Ok(Outcome {
                events: self.invoke_operation(caller, op, uri, meter)?,
                output: None,
            }),
            Call::BalanceOf { account } => Ok(Outcome {
                events: Vec::new(),
                output: Some(self.balance_of_metered(&account, meter)),
            }),
            Call::Transfer { to, amount } => {
                self.transfer(caller, to, amount, meter)?;
                Ok(Outcome::default())
            }
            Call::SetProbation { target, enabled } => {
                self.set_probation(caller, target, enabled, meter)?;
                Ok(Outcome::default())
            }
            Call::Panic { target } => {
                self.panic(caller, target, meter)?;
                Ok(Outcome::default())
            }
            Call::SetOperation {
                op,
                required_balance,
            } => {
                self.set_operation(caller, op, required_balance, meter)?;
                Ok(Outcome::default())
            }
            Call::MarkCritical { op, threshold } => {
                self.mark_critical(caller, op, threshold, meter)?;
                Ok(Outcome::default())
            }
        }
    }

    /// `invokeOperation(op, uri)`.
    ///
    /// Emits `Operation(op, uri)` when the caller holds the opcode's required
    /// balance. A critical opcode invoked below its privileged threshold
    /// emits `AuthorizationRequest` instead. Probation callers pay one token
    /// to the owner per emitted `Operation`.
    pub fn invoke_operation(
        &mut self,
        caller: Address,
        op: OpCode,
        uri: UriDigest,
        meter: &mut GasMeter<'_>,
    ) -> Result<Vec<Event>, ContractError> {
        let required = self
            .required_balance(op)
            .ok_or(ContractError::UnknownOpcode(op))?;

        meter.charge(GasCharge::MapSearch);
        let balance = self.balance_of(&caller);
        if balance < required {
            return Err(ContractError::InsufficientBalance {
                have: balance,
                need: required,
            });
        }

        if !self.critical.is_empty() {
            meter.charge(GasCharge::MapSearch);
            if let Some(threshold) = self.critical_threshold(op) {
                if balance < threshold {
                    meter.charge(GasCharge::EventEmit);
                    return Ok(vec![Event::AuthorizationRequest {
                        op,
                        uri,
                        requester: caller,
                    }]);
                }
            }
        }

        meter.charge(GasCharge::EventEmit);
        if self.is_on_probation(&caller) {
            // required >= 1, so balance >= 1 here
            meter.charge(GasCharge::MapEntryModify);
            meter.charge(GasCharge::MapEntryModify);
            self.debit(caller, 1);
            self.credit(self.owner, 1);
        }
        Ok(vec![Event::Operation { op, uri }])
    }

    /// Metered `balanceOf`, as called from a transaction.
    pub fn balance_of_metered(&self, account: &Address, meter: &mut GasMeter<'_>) -> u64 {
        meter.charge(GasCharge::MapSearch);
        self.balance_of(account)
    }

    /// `transfer(to, amount)`. The owner may send to anyone; everyone else
    /// may only send back to the owner.
    pub fn transfer(
        &mut self,
        from: Address,
        to: Address,
        amount: u64,
        meter: &mut GasMeter<'_>,
    ) -> Result<(), ContractError> {
        if from != self.owner && to != self.owner {
            return Err(ContractError::ForbiddenRecipient);
        }
        meter.charge(GasCharge::MapSearch);
        let have = self.balance_of(&from);
        if have < amount {
            return Err(ContractError::InsufficientBalance { have, need: amount });
        }
        meter.charge(GasCharge::MapEntryModify);
        meter.charge(if self.has_balance_entry(&to) {
            GasCharge::MapEntryModify
        } else {
            GasCharge::MapEntryCreate
        });
        self.debit(from, amount);
        self.credit(to, amount);
        Ok(())
    }

    pub fn set_probation(
        &mut self,
        caller: Address,
        target: Address,
        enabled: bool,
        meter: &mut GasMeter<'_>,
    ) -> Result<(), ContractError> {
        self.require_owner(caller)?;
        meter.charge(if self.probation.contains_key(&target) {
            GasCharge::MapEntryModify
        } else {
            GasCharge::MapEntryCreate
        });
        self.probation.insert(target, enabled);
        Ok(())
    }

    /// The panic button: returns `target`'s tokens, or every client's tokens,
    /// to the owner.
    pub fn panic(
        &mut self,
        caller: Address,
        target: Option<Address>,
        meter: &mut GasMeter<'_>,
    ) -> Result<(), ContractError> {
        self.require_owner(caller)?;
        let owner = self.owner;
        let reset: Vec<(Address, u64)> = match target {
            Some(t) => {
                meter.charge(GasCharge::MapSearch);
                let b = self.balance_of(&t);
                if t != owner && b > 0 {
                    vec![(t, b)]
                } else {
                    Vec::new()
                }
            }
            None => self
                .balances
                .iter()
                .filter(|(&a, &b)| a != owner && b > 0)
                .map(|(&a, &b)| (a, b))
                .collect(),
        };
        if reset.is_empty() {
            return Ok(());
        }
        let mut moved = 0u64;
        for (account, amount) in reset {
            meter.charge(GasCharge::MapEntryModify);
            self.balances.insert(account, 0);
            moved += amount;
        }
        meter.charge(GasCharge::MapEntryModify);
        self.credit(owner, moved);
        Ok(())
    }

    pub fn set_operation(
        &mut self,
        caller: Address,
        op: OpCode,
        required_balance: u64,
        meter: &mut GasMeter<'_>,
    ) -> Result<(), ContractError> {
        self.require_owner(caller)?;
        if required_balance == 0 {
            return Err(ContractError::ZeroThreshold(op));
        }
        meter.charge(if self.op_table.contains_key(&op) {
            GasCharge::MapEntryModify
        } else {
            GasCharge::MapEntryCreate
        });
        self.op_table.insert(op, required_balance);
        Ok(())
    }

    pub fn mark_critical(
        &mut self,
        caller: Address,
        op: OpCode,
        threshold: u64,
        meter: &mut GasMeter<'_>,
    ) -> Result<(), ContractError> {
        self.require_owner(caller)?;
        if threshold == 0 {
            return Err(ContractError::ZeroThreshold(op));
        }
        meter.charge(if self.critical.contains_key(&op) {
            GasCharge::MapEntryModify
        } else {
            GasCharge::MapEntryCreate
        });
        self.critical.insert(op, threshold);
        Ok(())
    }

    fn require_owner(&self, caller: Address) -> Result<(), ContractError> {
        if caller == self.owner {
            Ok(())
        } else {
            Err(ContractError::NotOwner)
        }
    }

    fn debit(&mut self, account: Address, amount: u64) {
        let entry = self.balances.entry(account).or_insert(0);
        *entry = entry.checked_sub(amount).expect("debit checked by caller");
    }

    fn credit(&mut self, account: Address, amount: u64) {
        // bounded by total_supply, cannot overflow
        *self.balances.entry(account).or_insert(0) += amount;
    }
}

impl Canonical for ContractState {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.owner).u64(self.total_supply);
        enc.len(self.balances.len());
        for (a, b) in &self.balances {
            enc.put(a).u64(*b);
        }
        enc.len(self.probation.len());
        for (a, on) in &self.probation {
            enc.put(a).bool(*on);
        }
        for table in [&self.op_table, &self.critical] {
            enc.len(table.len());
            for (op, v) in table {
                enc.put(op).u64(*v);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let owner = dec.get()?;
        let total_supply = dec.u64()?;
        let balances = dec.seq::<(Address, u64)>()?.into_iter().collect();
        let n = dec.u32()?;
        let mut probation = BTreeMap::new();
        for _ in 0..n {
            let a: Address = dec.get()?;
            probation.insert(a, dec.bool()?);
        }
        let op_table = dec.seq::<(OpCode, u64)>()?.into_iter().collect();
        let critical = dec.seq::<(OpCode, u64)>()?.into_iter().collect();
        Ok(Self {
            owner,
            total_supply,
            balances,
            probation,
            op_table,
            critical,
        })
    }
}
