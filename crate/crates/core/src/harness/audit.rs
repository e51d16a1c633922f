//! Balance reconstruction from a block log.
//!
//! This is a second, deliberately separate implementation of the token
//! rules. It replays every transaction in the log with its own bookkeeping
//! and never calls into the contract module, so agreement with live state
//! is evidence rather than tautology. Each replayed outcome is also checked
//! against the recorded receipt.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::contract::{Call, ContractState, FailureReason, OpCode};
use crate::crypto::Address;
use crate::ledger::{BlockLog, TxStatus};

/// Non-zero balances at one height.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditSnapshot {
    pub height: u64,
    pub balances: BTreeMap<Address, u64>,
}

impl AuditSnapshot {
    /// The non-zero balances of a live contract.
    pub fn from_state(height: u64, state: &ContractState) -> Self {
        Self {
            height,
            balances: state
                .balances()
                .filter(|(_, b)| **b > 0)
                .map(|(a, b)| (*a, *b))
                .collect(),
        }
    }

    pub fn balance_of(&self, account: &Address) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u128 {
        self.balances.values().map(|&b| u128::from(b)).sum()
    }
}

impl fmt::Display for AuditSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "height {}", self.height)?;
        for (a, b) in &self.balances {
            writeln!(f, "{a} {b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("height {requested} is beyond the log (head {head})")]
    HeightOutOfRange { requested: u64, head: u64 },
    #[error("block {height} tx {index}: replay says {replayed}, receipt says {recorded}")]
    Divergence {
        height: u64,
        index: usize,
        replayed: String,
        recorded: String,
    },
    #[error("block {height} has {txs} transactions but {receipts} receipts")]
    ReceiptCount {
        height: u64,
        txs: usize,
        receipts: usize,
    },
}

/// Replays `log` up to and including block `height`.
pub fn reconstruct_balances(log: &BlockLog, height: u64) -> Result<AuditSnapshot, AuditError> {
    let head = log.height();
    if height > head || log.blocks.is_empty() {
        return Err(AuditError::HeightOutOfRange {
            requested: height,
            head,
        });
    }
    let mut book = Book::new(log);
    for block in &log.blocks[1..=height as usize] {
        if block.txs.len() != block.receipts.len() {
            return Err(AuditError::ReceiptCount {
                height: block.height,
                txs: block.txs.len(),
                receipts: block.receipts.len(),
            });
        }
        for (index, (tx, receipt)) in block.txs.iter().zip(&block.receipts).enumerate() {
            let replayed = book.apply(tx.sender, &tx.call);
            let recorded = match receipt.status {
                TxStatus::Success => None,
                TxStatus::Failed(r) => Some(r),
            };
            if replayed != recorded {
                let show =
                    |o: Option<FailureReason>| o.map_or("ok", FailureReason::code).to_string();
                return Err(AuditError::Divergence {
                    height: block.height,
                    index,
                    replayed: show(replayed),
                    recorded: show(recorded),
                });
            }
        }
    }
    Ok(AuditSnapshot {
        height,
        balances: book.balances.into_iter().filter(|(_, b)| *b > 0).collect(),
    })
}

/// Snapshots at every height of the log.
pub fn reconstruct_all(log: &BlockLog) -> Result<Vec<AuditSnapshot>, AuditError> {
    (0..=log.height())
        .map(|h| reconstruct_balances(log, h))
        .collect()
}

/// Grants the owner must make to bring `current` back to `target`: one
/// `(account, amount)` per non-owner account holding less than before.
pub fn restore_grants(
    target: &AuditSnapshot,
    current: &AuditSnapshot,
    owner: Address,
) -> Vec<(Address, u64)> {
    target
        .balances
        .iter()
        .filter(|(a, _)| **a != owner)
        .filter_map(|(a, &want)| {
            let have = current.balance_of(a);
            (want > have).then(|| (*a, want - have))
        })
        .collect()
}

struct Book {
    owner: Address,
    balances: BTreeMap<Address, u64>,
    probation: BTreeSet<Address>,
    required: BTreeMap<OpCode, u64>,
    critical: BTreeMap<OpCode, u64>,
}

impl Book {
    fn new(log: &BlockLog) -> Self {
        let g = &log.genesis;
        Self {
            owner: g.owner,
            balances: BTreeMap::from([(g.owner, g.total_supply)]),
            probation: BTreeSet::new(),
            required: g.op_table.iter().copied().collect(),
            critical: g.critical.iter().copied().collect(),
        }
    }

    fn bal(&self, a: &Address) -> u64 {
        self.balances.get(a).copied().unwrap_or(0)
    }

    fn owner_only(&self, sender: Address) -> Option<FailureReason> {
        (sender != self.owner).then_some(FailureReason::NotOwner)
    }

    /// Applies one call; returns the failure reason, if any.
    fn apply(&mut self, sender: Address, call: &Call) -> Option<FailureReason> {
        match *call {
            Call::InvokeOperation { op, .. } => {
                let Some(&need) = self.required.get(&op) else {
                    return Some(FailureReason::UnknownOpcode);
                };
                let have = self.bal(&sender);
                if have < need {
                    return Some(FailureReason::InsufficientBalance);
                }
                let supervised = self.critical.get(&op).is_some_and(|&t| have < t);
                if !supervised && self.probation.contains(&sender) {
                    *self.balances.get_mut(&sender).expect("has balance") -= 1;
                    *self.balances.entry(self.owner).or_insert(0) += 1;
                }
                None
            }
            Call::BalanceOf { .. } => None,
            Call::Transfer { to, amount } => {
                if sender != self.owner && to != self.owner {
                    return Some(FailureReason::ForbiddenRecipient);
                }
                if self.bal(&sender) < amount {
                    return Some(FailureReason::InsufficientBalance);
                }
                *self.balances.entry(sender).or_insert(0) -= amount;
                *self.balances.entry(to).or_insert(0) += amount;
                None
            }
            Call::SetProbation { target, enabled } => {
                if let Some(e) = self.owner_only(sender) {
                    return Some(e);
                }
                if enabled {
                    self.probation.insert(target);
                } else {
                    self.probation.remove(&target);
                }
                None
            }
            Call::Panic { target } => {
                if let Some(e) = self.owner_only(sender) {
                    return Some(e);
                }
                let owner = self.owner;
                let victims: Vec<Address> = match target {
                    Some(t) if t != owner => vec![t],
                    Some(_) => Vec::new(),
                    None => self
                        .balances
                        .keys()
                        .filter(|a| **a != owner)
                        .copied()
                        .collect(),
                };
                let mut seized = 0;
                for v in victims {
                    seized += self.balances.remove(&v).unwrap_or(0);
                }
                *self.balances.entry(owner).or_insert(0) += seized;
                None
            }
            Call::SetOperation {
                op,
                required_balance,
            } => {
                if let Some(e) = self.owner_only(sender) {
                    return Some(e);
                }
                if required_balance == 0 {
                    return Some(FailureReason::ZeroThreshold);
                }
                self.required.insert(op, required_balance);
                None
            }
            Call::MarkCritical { op, threshold } => {
                if let Some(e) = self.owner_only(sender) {
                    return Some(e);
                }
                if threshold == 0 {
                    return Some(FailureReason::ZeroThreshold);
                }
                self.critical.insert(op, threshold);
                None
            }
        }
    }
}
