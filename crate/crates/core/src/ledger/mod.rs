//! Deterministic append-only ledger.
//!
//! One [`Ledger`] is the designated block producer. It accepts signed
//! transactions into a gas-price ordered mempool and seals them into blocks.
//! Any number of [`Replica`]s re-execute those blocks and must arrive at the
//! same [`StateCommitment`]; a replica that does not halts.
//!
//! Time is logical: block `h` carries timestamp `h * block_interval`.

mod log;
mod mempool;
mod producer;
mod replica;
mod state;

use std::fmt;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::contract::{Call, ContractError, Event, FailureReason, OpCode};
use crate::crypto::{sha256, Address, BlockHash, Keypair, PublicKey, Signature, TxHash};
use crate::gas::{GasBreakdown, GasCharge, GasConfigError, GasMeter, GasSchedule};

pub use crate::crypto::StateCommitment;
pub use log::{BlockLog, LogError};
pub use mempool::Mempool;
pub use producer::Ledger;
pub use replica::Replica;
pub use state::{ChainState, Query, StateReader, StateValue};

/// Default logical time units between consecutive blocks.
pub const DEFAULT_BLOCK_INTERVAL: u64 = 14;

const TX_DOMAIN: &[u8] = b"tokengate/tx/v1";
const BLOCK_DOMAIN: &[u8] = b"tokengate/block/v1";

/// A signed contract invocation.
///
/// Ed25519 keys cannot be recovered from a signature, so the transaction
/// carries the sender's public key; `sender` must be its derived address.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub sender: Address,
    pub public_key: PublicKey,
    pub nonce: u64,
    pub contract: Address,
    pub call: Call,
    pub gas_price: u64,
    pub signature: Signature,
}

impl Transaction {
    pub fn signed(
        keypair: &Keypair,
        nonce: u64,
        contract: Address,
        call: Call,
        gas_price: u64,
    ) -> Self {
        let mut tx = Transaction {
            sender: keypair.address(),
            public_key: keypair.public(),
            nonce,
            contract,
            call,
            gas_price,
            signature: Signature([0; 64]),
        };
        tx.signature = keypair.sign(&tx.signing_bytes());
        tx
    }

    /// Domain tag followed by every field except the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(TX_DOMAIN);
        self.encode_unsigned(&mut enc);
        enc.finish()
    }

    fn encode_unsigned(&self, enc: &mut Encoder) {
        enc.put(&self.sender)
            .put(&self.public_key)
            .u64(self.nonce)
            .put(&self.contract)
            .put(&self.call)
            .u64(self.gas_price);
    }

    /// The key matches the sender and the signature covers every field.
    pub fn verify_signature(&self) -> bool {
        self.public_key.address() == self.sender
            && self
                .public_key
                .verify(&self.signing_bytes(), &self.signature)
    }

    pub fn hash(&self) -> TxHash {
        TxHash(sha256(&self.to_canonical_bytes()))
    }
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_unsigned(enc);
        enc.put(&self.signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Transaction {
            sender: dec.get()?,
            public_key: dec.get()?,
            nonce: dec.u64()?,
            contract: dec.get()?,
            call: dec.get()?,
            gas_price: dec.u64()?,
            signature: dec.get()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxStatus {
    Success,
    Failed(FailureReason),
}

impl TxStatus {
    pub fn is_success(self) -> bool {
        matches!(self, TxStatus::Success)
    }
}

impl fmt::Display for TxStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxStatus::Success => f.write_str("ok"),
            TxStatus::Failed(r) => write!(f, "failed({r})"),
        }
    }
}

/// Result of executing one transaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Receipt {
    pub status: TxStatus,
    pub gas_used: u64,
    pub gas: GasBreakdown,
    pub events: Vec<Event>,
    /// Return value of `balanceOf`.
    pub output: Option<u64>,
}

impl Canonical for Receipt {
    fn encode(&self, enc: &mut Encoder) {
        match self.status {
            TxStatus::Success => {
                enc.u8(0);
            }
            TxStatus::Failed(r) => {
                enc.u8(1).put(&r);
            }
        }
        enc.u64(self.gas_used)
            .put(&self.gas)
            .seq(&self.events)
            .put(&self.output);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let status = match dec.u8()? {
            0 => TxStatus::Success,
            1 => TxStatus::Failed(dec.get()?),
            tag => {
                return Err(CodecError::InvalidTag {
                    what: "status",
                    tag,
                })
            }
        };
        Ok(Receipt {
            status,
            gas_used: dec.u64()?,
            gas: dec.get()?,
            events: dec.seq()?,
            output: dec.get()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    pub parent: BlockHash,
    pub txs: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
    pub state_commitment: StateCommitment,
}

impl Block {
    pub fn hash(&self) -> BlockHash {
        let mut enc = Encoder::new();
        enc.raw(BLOCK_DOMAIN).put(self);
        BlockHash(sha256(&enc.finish()))
    }

    pub fn gas_used(&self) -> u64 {
        self.receipts.iter().map(|r| r.gas_used).sum()
    }

    /// Every event in the block with its transaction index.
    pub fn events(&self) -> impl Iterator<Item = (usize, &Transaction, &Event)> {
        self.txs
            .iter()
            .zip(&self.receipts)
            .enumerate()
            .flat_map(|(i, (tx, r))| r.events.iter().map(move |e| (i, tx, e)))
    }
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .u64(self.timestamp)
            .put(&self.parent)
            .seq(&self.txs)
            .seq(&self.receipts)
            .put(&self.state_commitment);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let block = Block {
            height: dec.u64()?,
            timestamp: dec.u64()?,
            parent: dec.get()?,
            txs: dec.seq()?,
            receipts: dec.seq()?,
            state_commitment: dec.get()?,
        };
        if block.txs.len() != block.receipts.len() {
            return Err(CodecError::Invalid(format!(
                "block {} has {} txs but {} receipts",
                block.height,
                block.txs.len(),
                block.receipts.len()
            )));
        }
        Ok(block)
    }
}

/// Everything a replica needs to reproduce block 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genesis {
    pub owner: Address,
    pub total_supply: u64,
    pub op_table: Vec<(OpCode, u64)>,
    pub critical: Vec<(OpCode, u64)>,
    pub block_interval: u64,
    pub gas: GasSchedule,
}

impl Genesis {
    pub fn new(owner: Address, total_supply: u64, op_table: Vec<(OpCode, u64)>) -> Self {
        Self {
            owner,
            total_supply,
            op_table,
            critical: Vec::new(),
            block_interval: DEFAULT_BLOCK_INTERVAL,
            gas: GasSchedule::default(),
        }
    }

    pub fn with_critical(mut self, critical: Vec<(OpCode, u64)>) -> Self {
        self.critical = critical;
        self
    }

    pub fn with_block_interval(mut self, interval: u64) -> Self {
        self.block_interval = interval;
        self
    }

    pub fn with_gas_schedule(mut self, gas: GasSchedule) -> Self {
        self.gas = gas;
        self
    }

    /// Address of the deployed contract, derived from the owner.
    pub fn contract_address(&self) -> Address {
        let mut enc = Encoder::new();
        enc.raw(b"tokengate/contract").put(&self.owner);
        let digest = sha256(&enc.finish());
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Address(out)
    }
}

impl Canonical for Genesis {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.owner)
            .u64(self.total_supply)
            .seq(&self.op_table)
            .seq(&self.critical)
            .u64(self.block_interval)
            .put(&self.gas);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Genesis {
            owner: dec.get()?,
            total_supply: dec.u64()?,
            op_table: dec.seq()?,
            critical: dec.seq()?,
            block_interval: dec.u64()?,
            gas: dec.get()?,
        })
    }
}

/// Why `submit_transaction` refused a transaction.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("signature does not verify under the sender's key")]
    BadSignature,
    #[error("nonce {got} already used; next expected nonce is {expected}")]
    StaleNonce { expected: u64, got: u64 },
    #[error("gas price must be positive")]
    ZeroGasPrice,
    #[error("a transaction with this sender and nonce is already pending")]
    Duplicate,
    #[error("no contract deployed at {0}")]
    UnknownContract(Address),
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::BadSignature => "bad-signature",
            SubmitError::StaleNonce { .. } => "stale-nonce",
            SubmitError::ZeroGasPrice => "zero-gas-price",
            SubmitError::Duplicate => "duplicate",
            SubmitError::UnknownContract(_) => "unknown-contract",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("expected block height {expected}, got {got}")]
    HeightGap { expected: u64, got: u64 },
    #[error("block {height} does not extend the current head")]
    ParentMismatch { height: u64 },
    #[error("block {height} has timestamp {got}, expected {expected}")]
    TimestampMismatch {
        height: u64,
        expected: u64,
        got: u64,
    },
    #[error("block {height} tx {index} is invalid: {reason}")]
    InvalidTransaction {
        height: u64,
        index: usize,
        reason: String,
    },
    #[error("block {height} state commitment {got} differs from local {expected}")]
    CommitmentMismatch {
        height: u64,
        expected: StateCommitment,
        got: StateCommitment,
    },
    #[error("block {height} receipt {index} differs from local execution")]
    ReceiptMismatch { height: u64, index: usize },
    #[error("replica halted after divergence: {0}")]
    Halted(Box<LedgerError>),
    #[error("invalid genesis: {0}")]
    Genesis(#[from] ContractError),
    #[error("invalid genesis: {0}")]
    GasSchedule(#[from] GasConfigError),
    #[error("block interval must be positive")]
    ZeroBlockInterval,
}

/// Checks a transaction the way `submit_transaction` does, apart from
/// mempool-specific duplicate detection.
pub(crate) fn check_transaction(
    tx: &Transaction,
    contract: Address,
    expected_nonce: u64,
) -> Result<(), SubmitError> {
    if tx.gas_price == 0 {
        return Err(SubmitError::ZeroGasPrice);
    }
    if tx.contract != contract {
        return Err(SubmitError::UnknownContract(tx.contract));
    }
    if !tx.verify_signature() {
        return Err(SubmitError::BadSignature);
    }
    if tx.nonce < expected_nonce {
        return Err(SubmitError::StaleNonce {
            expected: expected_nonce,
            got: tx.nonce,
        });
    }
    Ok(())
}

/// Executes the transactions of one block in order against `state`.
///
/// Each transaction is re-validated; the nonce must be exactly the sender's
/// next one.
pub(crate) fn execute_transactions(
    state: &mut ChainState,
    txs: &[Transaction],
    contract: Address,
    schedule: &GasSchedule,
    height: u64,
) -> Result<Vec<Receipt>, LedgerError> {
    let mut receipts = Vec::with_capacity(txs.len());
    for (index, tx) in txs.iter().enumerate() {
        let expected = state.nonce_of(&tx.sender);
        let invalid = |reason: String| LedgerError::InvalidTransaction {
            height,
            index,
            reason,
        };
        check_transaction(tx, contract, expected).map_err(|e| invalid(e.to_string()))?;
        if tx.nonce != expected {
            return Err(invalid(format!(
                "nonce {} but sender's next nonce is {expected}",
                tx.nonce
            )));
        }
        receipts.push(state.apply(tx, schedule));
    }
    Ok(receipts)
}

impl ChainState {
    /// Executes one validated transaction. The nonce advances whether or not
    /// the call succeeds.
    fn apply(&mut self, tx: &Transaction, schedule: &GasSchedule) -> Receipt {
        self.bump_nonce(tx.sender);
        let mut meter = GasMeter::new(schedule);
        meter.charge(GasCharge::TxBase);
        let (status, events, output) =
            match self.contract_mut().execute(tx.sender, &tx.call, &mut meter) {
                Ok(outcome) => (TxStatus::Success, outcome.events, outcome.output),
                Err(e) => (TxStatus::Failed(e.reason()), Vec::new(), None),
            };
        Receipt {
            status,
            gas_used: meter.used(),
            gas: meter.breakdown(),
            events,
            output,
        }
    }
}
