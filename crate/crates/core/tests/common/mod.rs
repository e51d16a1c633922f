//! Shared helpers for integration tests: a seeded random workload generator
//! and an independent block-ordering checker.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tokengate::crypto::Address;
use tokengate::ledger::Block;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/scenarios")
}

/// Every fixture as (file name, contents), sorted by name.
pub fn fixtures() -> Vec<(String, String)> {
    let mut out: Vec<_> = std::fs::read_dir(scenario_dir())
        .expect("scenario dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).expect("readable fixture"))
        })
        .collect();
    out.sort();
    out
}

pub struct Workload {
    pub wallets: usize,
    pub txs: usize,
    pub nodes: usize,
    pub supply: u64,
    /// Mean transactions per block.
    pub per_block: usize,
    pub max_block_txs: Option<usize>,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            wallets: 6,
            txs: 40,
            nodes: 3,
            supply: 500,
            per_block: 8,
            max_block_txs: None,
        }
    }
}

/// A random but valid scenario: grants, client transfers (legal and not),
/// invokes of known and unknown opcodes, probation changes, critical marks
/// and panics, with random gas bids and block boundaries.
pub fn random_scenario(seed: u64, w: &Workload) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    let names: Vec<String> = (0..w.wallets).map(|i| format!("w{i}")).collect();
    s.push_str("create_wallet name=owner\n");
    for n in &names {
        let _ = writeln!(s, "create_wallet name={n}");
    }
    let _ = write!(
        s,
        "init_contract owner=owner supply={} op.Lights=0x01:1 op.Door=0x02:3 op.Alarm=0x03:5 nodes={}",
        w.supply, w.nodes
    );
    if let Some(m) = w.max_block_txs {
        let _ = write!(s, " max_block_txs={m}");
    }
    s.push('\n');
    let ops = ["Lights", "Door", "Alarm", "0x09"];
    let mut pending = 0;
    for _ in 0..w.txs {
        let who = &names[rng.random_range(0..names.len())];
        let other = &names[rng.random_range(0..names.len())];
        let price = rng.random_range(1..=20);
        let line = match rng.random_range(0..100) {
            0..=24 => format!(
                "grant to={who} amount={} gas_price={price}",
                rng.random_range(0..=30)
            ),
            25..=34 => format!(
                "transfer from={who} to={other} amount={} gas_price={price}",
                rng.random_range(0..5)
            ),
            35..=44 => format!(
                "transfer from={who} to=owner amount={} gas_price={price}",
                rng.random_range(0..8)
            ),
            45..=79 => format!(
                "client_invoke client={who} op={} uri=room/{} gas_price={price}",
                ops[rng.random_range(0..ops.len())],
                rng.random_range(0..3)
            ),
            80..=86 => format!(
                "set_probation target={who} enabled={} gas_price={price}",
                rng.random_bool(0.6)
            ),
            87..=90 => format!(
                "mark_critical op=Door threshold={} gas_price={price}",
                rng.random_range(0..8)
            ),
            91..=94 => format!("panic target={who} gas_price={price}"),
            95..=96 => format!("panic gas_price={price}"),
            _ => format!("panic by={who} gas_price={price}"),
        };
        s.push_str(&line);
        s.push('\n');
        pending += 1;
        if rng.random_range(0..w.per_block.max(1)) == 0 {
            s.push_str("advance_block\n");
            pending = 0;
        }
    }
    if pending > 0 {
        s.push_str("advance_block\n");
    }
    s.push_str("assert supply\n");
    s
}

/// Checks that each transaction in `block` bids at least as much as every
/// later transaction that was already executable at its position. A
/// transaction is executable once all lower nonces of its sender are
/// committed or placed earlier in the block.
pub fn check_price_order(
    block: &Block,
    committed_nonce: impl Fn(&Address) -> u64,
) -> Result<(), String> {
    let mut next: BTreeMap<Address, u64> = BTreeMap::new();
    for (i, tx) in block.txs.iter().enumerate() {
        let n = *next
            .entry(tx.sender)
            .or_insert_with(|| committed_nonce(&tx.sender));
        if tx.nonce != n {
            return Err(format!(
                "block {} tx {i}: nonce {} but {} expected",
                block.height, tx.nonce, n
            ));
        }
        for (j, later) in block.txs.iter().enumerate().skip(i + 1) {
            let ln = next
                .get(&later.sender)
                .copied()
                .unwrap_or_else(|| committed_nonce(&later.sender));
            let ready = if later.sender == tx.sender {
                false
            } else {
                later.nonce == ln
            };
            if ready && later.gas_price > tx.gas_price {
                return Err(format!(
                    "block {} tx {i} bids {} but executable tx {j} bids {}",
                    block.height, tx.gas_price, later.gas_price
                ));
            }
        }
        next.insert(tx.sender, n + 1);
    }
    Ok(())
}
