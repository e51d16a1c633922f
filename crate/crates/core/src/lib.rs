//! Deterministic ledger and smart-contract simulator for token-gated IoT control.
//!
//! Clients sign transactions that invoke a single access-control contract.
//! The contract checks token balances and emits `Operation` events; gateways
//! watch those events through node-local subscriptions and actuate the devices
//! registered under the event's URI digest.
//!
//! The crate is split along the same lines as the running system:
//!
//! - [`ledger`]: transactions, mempool ordering, block production, replicas,
//!   state commitments and the block log.
//! - [`contract`]: the token contract state machine and its gas model.
//! - [`bus`] and [`network`]: event subscriptions with indexed-attribute
//!   filters, and block broadcast across a fixed node topology.
//! - [`gateway`]: device registry, local policies and actuation.
//! - [`client`]: wallets, transaction builders and the RPC relay model.
//! - [`harness`]: scenario files, the runner, the balance auditor and gas reports.

pub mod bus;
pub mod client;
pub mod codec;
pub mod contract;
pub mod crypto;
pub mod gas;
pub mod gateway;
pub mod harness;
pub mod ledger;
pub mod network;

pub use contract::{Call, ContractError, ContractState, Event, EventName, OpCode, UriDigest};
pub use crypto::{Address, PublicKey, Signature};
pub use gas::{GasBreakdown, GasCharge, GasMeter, GasSchedule};
pub use ledger::{Block, Genesis, Ledger, Receipt, Replica, Transaction, TxStatus};
