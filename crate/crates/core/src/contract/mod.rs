//! The access-control contract.
//!
//! A token contract restricted to `balanceOf` and `transfer`, extended with
//! operation dispatch. The number of tokens a client holds is its role: an
//! opcode is invokable by callers holding at least its required balance.
//! On top of that the owner can put clients on probation, mark opcodes as
//! critical (supervised), and reset balances with the panic button.
//!
//! # Call encoding
//!
//! A call is a one-byte selector followed by its arguments in the canonical
//! encoding of [`crate::codec`]:
//!
//! | selector | function          | arguments                                 |
//! |----------|-------------------|-------------------------------------------|
//! | `0x01`   | `invokeOperation` | opcode `u8`, URI digest `[u8; 32]`        |
//! | `0x02`   | `balanceOf`       | account `[u8; 20]`                        |
//! | `0x03`   | `transfer`        | recipient `[u8; 20]`, amount `u64`        |
//! | `0x04`   | `setProbation`    | target `[u8; 20]`, enabled `bool`         |
//! | `0x05`   | `panic`           | target `Option<[u8; 20]>`                 |
//! | `0x06`   | `setOperation`    | opcode `u8`, required balance `u64`       |
//! | `0x07`   | `markCritical`    | opcode `u8`, privileged threshold `u64`   |

mod gas_of;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::crypto::{sha256, Address, HexError};

pub use gas_of::{gas_of, init_gas};
pub use state::{ContractState, Outcome};

/// One 32-byte indexed event attribute.
pub type Topic = [u8; 32];

/// One-byte operation identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OpCode(pub u8);

impl OpCode {
    /// Right-aligned in a 32-byte word.
    pub fn topic(self) -> Topic {
        let mut t = [0u8; 32];
        t[31] = self.0;
        t
    }
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl Canonical for OpCode {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(OpCode(dec.u8()?))
    }
}

/// SHA-256 of a UTF-8 URI string.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UriDigest(pub [u8; 32]);

impl UriDigest {
    pub fn of(uri: &str) -> Self {
        UriDigest(sha256(uri.as_bytes()))
    }

    pub fn topic(self) -> Topic {
        self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for UriDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UriDigest(0x{})", hex::encode(self.0))
    }
}

impl fmt::Display for UriDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for UriDigest {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        let bytes = hex::decode(s)?;
        let arr: [u8; 32] = bytes.as_slice().try_into().map_err(|_| HexError::Length {
            expected: 32,
            got: bytes.len(),
        })?;
        Ok(UriDigest(arr))
    }
}

impl Serialize for UriDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Canonical for UriDigest {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(UriDigest(dec.array()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EventName {
    Operation,
    AuthorizationRequest,
}

impl EventName {
    pub fn as_str(self) -> &'static str {
        match self {
            EventName::Operation => "Operation",
            EventName::AuthorizationRequest => "AuthorizationRequest",
        }
    }
}

impl fmt::Display for EventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Operation" => Ok(EventName::Operation),
            "AuthorizationRequest" => Ok(EventName::AuthorizationRequest),
            other => Err(format!("unknown event name `{other}`")),
        }
    }
}

/// A contract log entry. Both kinds index `(OPCode, URIResource)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    Operation {
        op: OpCode,
        uri: UriDigest,
    },
    /// Emitted instead of `Operation` when an underprivileged caller invokes
    /// a critical opcode. `requester` is non-indexed data.
    AuthorizationRequest {
        op: OpCode,
        uri: UriDigest,
        requester: Address,
    },
}

impl Event {
    pub fn name(&self) -> EventName {
        match self {
            Event::Operation { .. } => EventName::Operation,
            Event::AuthorizationRequest { .. } => EventName::AuthorizationRequest,
        }
    }

    pub fn op(&self) -> OpCode {
        match *self {
            Event::Operation { op, .. } | Event::AuthorizationRequest { op, .. } => op,
        }
    }

    pub fn uri(&self) -> UriDigest {
        match *self {
            Event::Operation { uri, .. } | Event::AuthorizationRequest { uri, .. } => uri,
        }
    }

    /// Indexed attributes in slot order.
    pub fn indexed(&self) -> Vec<Topic> {
        vec![self.op().topic(), self.uri().topic()]
    }

    /// Non-indexed payload bytes.
    pub fn data(&self) -> Vec<u8> {
        match self {
            Event::Operation { .. } => Vec::new(),
            Event::AuthorizationRequest { requester, .. } => requester.0.to_vec(),
        }
    }
}

impl Canonical for Event {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Event::Operation { op, uri } => {
                enc.u8(0).put(op).put(uri);
            }
            Event::AuthorizationRequest { op, uri, requester } => {
                enc.u8(1).put(op).put(uri).put(requester);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        match dec.u8()? {
            0 => Ok(Event::Operation {
                op: dec.get()?,
                uri: dec.get()?,
            }),
            1 => Ok(Event::AuthorizationRequest {
                op: dec.get()?,
                uri: dec.get()?,
                requester: dec.get()?,
            }),
            tag => Err(CodecError::InvalidTag { what: "event", tag }),
        }
    }
}

/// A contract function with its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Call {
    InvokeOperation { op: OpCode, uri: UriDigest },
    BalanceOf { account: Address },
    Transfer { to: Address, amount: u64 },
    SetProbation { target: Address, enabled: bool },
    Panic { target: Option<Address> },
    SetOperation { op: OpCode, required_balance: u64 },
    MarkCritical { op: OpCode, threshold: u64 },
}

/// Function selector without arguments. `Init` is the deployment itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Function {
    Init,
    InvokeOperation,
    BalanceOf,
    Transfer,
    SetProbation,
    Panic,
    SetOperation,
    MarkCritical,
}

impl Function {
    pub fn name(self) -> &'static str {
        match self {
            Function::Init => "init",
            Function::InvokeOperation => "invokeOperation",
            Function::BalanceOf => "balanceOf",
            Function::Transfer => "transfer",
            Function::SetProbation => "setProbation",
            Function::Panic => "panic",
            Function::SetOperation => "setOperation",
            Function::MarkCritical => "markCritical",
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Call {
    pub fn function(&self) -> Function {
        match self {
            Call::InvokeOperation { .. } => Function::InvokeOperation,
            Call::BalanceOf { .. } => Function::BalanceOf,
            Call::Transfer { .. } => Function::Transfer,
            Call::SetProbation { .. } => Function::SetProbation,
            Call::Panic { .. } => Function::Panic,
            Call::SetOperation { .. } => Function::SetOperation,
            Call::MarkCritical { .. } => Function::MarkCritical,
        }
    }

    pub fn selector(&self) -> u8 {
        match self {
            Call::InvokeOperation { .. } => 0x01,
            Call::BalanceOf { .. } => 0x02,
            Call::Transfer { .. } => 0x03,
            Call::SetProbation { .. } => 0x04,
            Call::Panic { .. } => 0x05,
            Call::SetOperation { .. } => 0x06,
            Call::MarkCritical { .. } => 0x07,
        }
    }
}

impl Canonical for Call {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.selector());
        match self {
            Call::InvokeOperation { op, uri } => {
                enc.put(op).put(uri);
            }
            Call::BalanceOf { account } => {
                enc.put(account);
            }
            Call::Transfer { to, amount } => {
                enc.put(to).u64(*amount);
            }
            Call::SetProbation { target, enabled } => {
                enc.put(target).bool(*enabled);
            }
            Call::Panic { target } => {
                enc.put(target);
            }
            Call::SetOperation {
                op,
                required_balance,
            } => {
                enc.put(op).u64(*required_balance);
            }
            Call::MarkCritical { op, threshold } => {
                enc.put(op).u64(*threshold);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(match dec.u8()? {
            0x01 => Call::InvokeOperation {
                op: dec.get()?,
                uri: dec.get()?,
            },
            0x02 => Call::BalanceOf {
                account: dec.get()?,
            },
            0x03 => Call::Transfer {
                to: dec.get()?,
                amount: dec.u64()?,
            },
            0x04 => Call::SetProbation {
                target: dec.get()?,
                enabled: dec.bool()?,
            },
            0x05 => Call::Panic { target: dec.get()? },
            0x06 => Call::SetOperation {
                op: dec.get()?,
                required_balance: dec.u64()?,
            },
            0x07 => Call::MarkCritical {
                op: dec.get()?,
                threshold: dec.u64()?,
            },
            tag => {
                return Err(CodecError::InvalidTag {
                    what: "selector",
                    tag,
                })
            }
        })
    }
}

/// Why a contract call failed. This is what a receipt records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FailureReason {
    UnknownOpcode,
    InsufficientBalance,
    ForbiddenRecipient,
    NotOwner,
    ZeroThreshold,
    ZeroSupply,
}

impl FailureReason {
    pub fn code(self) -> &'static str {
        match self {
            FailureReason::UnknownOpcode => "unknown-opcode",
            FailureReason::InsufficientBalance => "insufficient-balance",
            FailureReason::ForbiddenRecipient => "forbidden-recipient",
            FailureReason::NotOwner => "not-owner",
            FailureReason::ZeroThreshold => "zero-threshold",
            FailureReason::ZeroSupply => "zero-supply",
        }
    }

    fn tag(self) -> u8 {
        match self {
            FailureReason::UnknownOpcode => 1,
            FailureReason::InsufficientBalance => 2,
            FailureReason::ForbiddenRecipient => 3,
            FailureReason::NotOwner => 4,
            FailureReason::ZeroThreshold => 5,
            FailureReason::ZeroSupply => 6,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => FailureReason::UnknownOpcode,
            2 => FailureReason::InsufficientBalance,
            3 => FailureReason::ForbiddenRecipient,
            4 => FailureReason::NotOwner,
            5 => FailureReason::ZeroThreshold,
            6 => FailureReason::ZeroSupply,
            _ => return None,
        })
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FailureReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        (1..=6)
            .filter_map(FailureReason::from_tag)
            .find(|r| r.code() == s)
            .ok_or_else(|| format!("unknown failure reason `{s}`"))
    }
}

impl Canonical for FailureReason {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.tag());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let tag = dec.u8()?;
        FailureReason::from_tag(tag).ok_or(CodecError::InvalidTag {
            what: "failure reason",
            tag,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("opcode {0} is not in the operation table")]
    UnknownOpcode(OpCode),
    #[error("insufficient balance: have {have}, need {need}")]
    InsufficientBalance { have: u64, need: u64 },
    #[error("clients may only transfer tokens to the owner")]
    ForbiddenRecipient,
    #[error("caller is not the contract owner")]
    NotOwner,
    #[error("required balance for opcode {0} must be at least 1")]
    ZeroThreshold(OpCode),
    #[error("total supply must be positive")]
    ZeroSupply,
}

impl ContractError {
    pub fn reason(&self) -> FailureReason {
        match self {
            ContractError::UnknownOpcode(_) => FailureReason::UnknownOpcode,
            ContractError::InsufficientBalance { .. } => FailureReason::InsufficientBalance,
            ContractError::ForbiddenRecipient => FailureReason::ForbiddenRecipient,
            ContractError::NotOwner => FailureReason::NotOwner,
            ContractError::ZeroThreshold(_) => FailureReason::ZeroThreshold,
            ContractError::ZeroSupply => FailureReason::ZeroSupply,
        }
    }
}
