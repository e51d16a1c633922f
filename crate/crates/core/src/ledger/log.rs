//! Block log export.
//!
//! Binary layout: the 8-byte magic `TGBLOCK1`, then records of a big-endian
//! `u32` length followed by that many bytes. Record 0 is the canonical
//! [`Genesis`]; every following record is one canonical [`Block`], from
//! height 0 upwards.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::json;

use crate::codec::{Canonical, CodecError};
use crate::contract::{Call, Event};

use super::{Block, Genesis, Receipt, Transaction, TxStatus};

pub const MAGIC: &[u8; 8] = b"TGBLOCK1";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a block log (bad magic)")]
    BadMagic,
    #[error("record {record}: {source}")]
    Decode { record: usize, source: CodecError },
    #[error("block log has no genesis record")]
    MissingGenesis,
    #[error("block at record {record} has height {got}, expected {expected}")]
    OutOfOrder {
        record: usize,
        expected: u64,
        got: u64,
    },
}

/// Genesis plus every committed block, in height order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLog {
    pub genesis: Genesis,
    pub blocks: Vec<Block>,
}

impl BlockLog {
    pub fn height(&self) -> u64 {
        self.blocks.len().saturating_sub(1) as u64
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        write_record(&mut w, &self.genesis.to_canonical_bytes())?;
        for block in &self.blocks {
            write_record(&mut w, &block.to_canonical_bytes())?;
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, LogError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| LogError::BadMagic)?;
        if &magic != MAGIC {
            return Err(LogError::BadMagic);
        }
        let genesis_bytes = read_record(&mut r)?.ok_or(LogError::MissingGenesis)?;
        let genesis = Genesis::from_canonical_bytes(&genesis_bytes)
            .map_err(|source| LogError::Decode { record: 0, source })?;
        let mut blocks = Vec::new();
        let mut record = 1;
        while let Some(bytes) = read_record(&mut r)? {
            let block = Block::from_canonical_bytes(&bytes)
                .map_err(|source| LogError::Decode { record, source })?;
            let expected = blocks.len() as u64;
            if block.height != expected {
                return Err(LogError::OutOfOrder {
                    record,
                    expected,
                    got: block.height,
                });
            }
            blocks.push(block);
            record += 1;
        }
        Ok(Self { genesis, blocks })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        Self::read_binary(BufReader::new(File::open(path)?))
    }

    /// One JSON object per line: a genesis line, then one line per block.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let g = &self.genesis;
        let genesis = json!({
            "record": "genesis",
            "owner": g.owner,
            "total_supply": g.total_supply,
            "contract": g.contract_address(),
            "op_table": g.op_table.iter().map(|(op, v)| json!([op.0, v])).collect::<Vec<_>>(),
            "critical": g.critical.iter().map(|(op, v)| json!([op.0, v])).collect::<Vec<_>>(),
            "block_interval": g.block_interval,
            "gas": g.gas,
        });
        writeln!(w, "{genesis}")?;
        for block in &self.blocks {
            let txs: Vec<_> = block
                .txs
                .iter()
                .zip(&block.receipts)
                .map(|(tx, r)| tx_json(tx, r))
                .collect();
            let line = json!({
                "record": "block",
                "height": block.height,
                "timestamp": block.timestamp,
                "hash": block.hash(),
                "parent": block.parent,
                "state_commitment": block.state_commitment,
                "txs": txs,
            });
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}

fn tx_json(tx: &Transaction, r: &Receipt) -> serde_json::Value {
    json!({
        "hash": tx.hash(),
        "sender": tx.sender,
        "nonce": tx.nonce,
        "gas_price": tx.gas_price,
        "function": tx.call.function().name(),
        "args": call_args_json(&tx.call),
        "status": match r.status {
            TxStatus::Success => "ok".to_string(),
            TxStatus::Failed(reason) => reason.code().to_string(),
        },
        "gas_used": r.gas_used,
        "events": r.events.iter().map(event_json).collect::<Vec<_>>(),
        "output": r.output,
    })
}

fn call_args_json(call: &Call) -> serde_json::Value {
    match *call {
        Call::InvokeOperation { op, uri } => json!({ "op": op.0, "uri": uri }),
        Call::BalanceOf { account } => json!({ "account": account }),
        Call::Transfer { to, amount } => json!({ "to": to, "amount": amount }),
        Call::SetProbation { target, enabled } => json!({ "target": target, "enabled": enabled }),
        Call::Panic { target } => json!({ "target": target }),
        Call::SetOperation {
            op,
            required_balance,
        } => json!({ "op": op.0, "required_balance": required_balance }),
        Call::MarkCritical { op, threshold } => json!({ "op": op.0, "threshold": threshold }),
    }
}

pub(crate) fn event_json(ev: &Event) -> serde_json::Value {
    json!({
        "name": ev.name().as_str(),
        "indexed": ev.indexed().iter().map(hex::encode).collect::<Vec<_>>(),
        "data": hex::encode(ev.data()),
    })
}

fn write_record<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    let len = u32::try_from(bytes.len()).map_err(|_| io::Error::other("record too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(bytes)
}

fn read_record<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, LogError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}
