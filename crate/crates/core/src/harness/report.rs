//! Run reports and gas tables.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::contract::{init_gas, Event, Function};
use crate::crypto::{StateCommitment, TxHash};
use crate::gas::{gas_to_currency, GasBreakdown, GasSchedule, SNAPSHOT_USD_PER_GAS};
use crate::gateway::ActuationEntry;
use crate::ledger::{BlockLog, TxStatus};

use super::audit::AuditSnapshot;

/// Where a submitted transaction ended up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxOutcome {
    /// Accepted into the mempool, not yet in a block.
    Pending,
    Included {
        height: u64,
        index: usize,
        status: TxStatus,
        gas_used: u64,
        gas: GasBreakdown,
    },
    /// Refused at submission, with the ledger's reason code.
    Rejected(&'static str),
    Dropped,
    Offline,
}

impl fmt::Display for TxOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxOutcome::Pending => f.write_str("pending"),
            TxOutcome::Included {
                height,
                status,
                gas_used,
                gas,
                ..
            } => write!(f, "block {height} {status} gas={gas_used} ({gas})"),
            TxOutcome::Rejected(code) => write!(f, "rejected({code})"),
            TxOutcome::Dropped => f.write_str("dropped"),
            TxOutcome::Offline => f.write_str("offline"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxRecord {
    /// Scenario line that sent it.
    pub line: usize,
    pub label: Option<String>,
    pub sender: String,
    pub function: Function,
    pub nonce: u64,
    pub gas_price: u64,
    pub hash: TxHash,
    pub outcome: TxOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSummary {
    pub height: u64,
    pub timestamp: u64,
    pub gas_used: u64,
    pub txs: usize,
    pub events: Vec<(usize, Event)>,
    pub commitment: StateCommitment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionResult {
    pub line: usize,
    pub source: String,
    pub passed: bool,
    /// What was actually observed.
    pub observed: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub usd_per_gas: f64,
    pub schedule: GasSchedule,
    pub initialized: bool,
    pub txs: Vec<TxRecord>,
    pub blocks: Vec<BlockSummary>,
    pub actuations: Vec<ActuationEntry>,
    pub assertions: Vec<AssertionResult>,
    /// Genesis plus every block, if a contract was initialized.
    pub block_log: Option<BlockLog>,
    /// Live non-zero balances at every height, from the producer.
    pub live_balances: Vec<AuditSnapshot>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    /// Plain-text rendering. Identical runs render identical bytes.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}", self.seed);
        for b in &self.blocks {
            let _ = writeln!(
                out,
                "block {} t={} txs={} gas={} commitment={}",
                b.height, b.timestamp, b.txs, b.gas_used, b.commitment
            );
            for (i, ev) in &b.events {
                let _ = write!(
                    out,
                    "  event tx={i} {} op={} uri={}",
                    ev.name().as_str(),
                    ev.op(),
                    ev.uri()
                );
                if let Event::AuthorizationRequest { requester, .. } = ev {
                    let _ = write!(out, " requester={requester}");
                }
                out.push('\n');
            }
        }
        let _ = writeln!(out, "transactions");
        for t in &self.txs {
            let label = t.label.as_deref().unwrap_or("-");
            let _ = writeln!(
                out,
                "  line {} {} {}#{} {} price={} {}",
                t.line,
                label,
                t.sender,
                t.nonce,
                t.function.name(),
                t.gas_price,
                t.outcome
            );
        }
        let _ = writeln!(out, "actuations");
        for a in &self.actuations {
            let _ = writeln!(
                out,
                "  {} {} height={} op={} {}",
                a.gateway, a.device_id, a.height, a.op, a.status
            );
        }
        let _ = writeln!(out, "gas");
        for line in gas_report(self, self.usd_per_gas).render().lines() {
            let _ = writeln!(out, "  {line}");
        }
        let _ = writeln!(out, "assertions");
        for a in &self.assertions {
            let verdict = if a.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "  {verdict} line {}: {} (observed {})",
                a.line, a.source, a.observed
            );
        }
        let passed = self.assertions.iter().filter(|a| a.passed).count();
        let _ = writeln!(
            out,
            "result {} ({passed}/{} assertions)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.assertions.len()
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasRow {
    pub function: Function,
    pub calls: u64,
    pub gas: u64,
    pub breakdown: GasBreakdown,
    pub currency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasTable {
    pub rows: Vec<GasRow>,
    pub usd_per_gas: f64,
}

impl GasTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, function: Function) -> Option<&GasRow> {
        self.rows.iter().find(|r| r.function == function)
    }

    pub fn total_gas(&self) -> u64 {
        self.rows.iter().map(|r| r.gas).sum()
    }

    pub fn price_label(&self) -> String {
        if self.usd_per_gas == SNAPSHOT_USD_PER_GAS {
            format!(
                "USD at {:e} USD/gas (market snapshot of 2019-03-20)",
                self.usd_per_gas
            )
        } else {
            format!("USD at {:e} USD/gas", self.usd_per_gas)
        }
    }

    pub fn render(&self) -> String {
        if self.rows.is_empty() {
            return "(no transactions)\n".to_string();
        }
        let mut out = format!(
            "{:<16} {:>6} {:>10} {:>12}  breakdown\n",
            "function", "calls", "gas", "usd"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>10} {:>12.6}  {}",
                r.function.name(),
                r.calls,
                r.gas,
                r.currency,
                r.breakdown
            );
        }
        let _ = writeln!(out, "{}", self.price_label());
        out.push_str(
            "failed calls pay tx_base plus the lookups run before the failing check; \
             unlike the EVM, they do not forfeit the gas limit\n",
        );
        out
    }
}

/// Gas per function over every included transaction, plus contract
/// initialization.
pub fn gas_report(report: &RunReport, usd_per_gas: f64) -> GasTable {
    let mut rows: BTreeMap<Function, (u64, GasBreakdown)> = BTreeMap::new();
    if report.initialized {
        rows.insert(Function::Init, (1, init_gas()));
    }
    for t in &report.txs {
        if let TxOutcome::Included { gas, .. } = &t.outcome {
            let row = rows.entry(t.function).or_default();
            row.0 += 1;
            row.1.merge(gas);
        }
    }
    let rows = rows
        .into_iter()
        .map(|(function, (calls, breakdown))| {
            let gas = breakdown.total(&report.schedule);
            GasRow {
                function,
                calls,
                gas,
                breakdown,
                currency: gas_to_currency(gas, usd_per_gas),
            }
        })
        .collect();
    GasTable { rows, usd_per_gas }
}
