//! Executes scenarios against an in-process network.

use std::collections::{BTreeMap, HashMap};
use std::thread;

use crate::bus::{Filter, IndexedAttr};
use crate::client::{Relay, RelayConfig, SendOutcome, Wallet};
use crate::contract::{Call, OpCode, UriDigest};
use crate::crypto::{sha256, Address, TxHash};
use crate::gas::{GasSchedule, SNAPSHOT_USD_PER_GAS};
use crate::gateway::{Gateway, GatewayError, HourWindow, MinBalance, SharedContext};
use crate::ledger::{Genesis, Query, StateValue};
use crate::network::{Network, NetworkError, NodeId};

use super::audit::AuditSnapshot;
use super::report::{AssertionResult, BlockSummary, RunReport, TxOutcome, TxRecord};
use super::scenario::{
    Assertion, ExpectedStatus, PolicySpec, Scenario, Step, StepKind, TxOptions, Via,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Drives wallet keys and relay drops.
    pub seed: u64,
    pub gas_schedule: GasSchedule,
    /// Currency per gas unit for cost estimates.
    pub usd_per_gas: f64,
    /// Bid used when a step gives no `gas_price`.
    pub default_gas_price: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gas_schedule: GasSchedule::default(),
            usd_per_gas: SNAPSHOT_USD_PER_GAS,
            default_gas_price: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("line {line}: {source}")]
    Network { line: usize, source: NetworkError },
    #[error("line {line}: {source}")]
    Gateway { line: usize, source: GatewayError },
    #[error("line {line}: {reason}")]
    Step { line: usize, reason: String },
}

/// Deterministic key for a named wallet.
pub fn wallet_secret(seed: u64, name: &str) -> [u8; 32] {
    let mut buf = b"tokengate/scenario-wallet".to_vec();
    buf.extend_from_slice(&seed.to_be_bytes());
    buf.extend_from_slice(name.as_bytes());
    sha256(&buf)
}

fn relay_seed(seed: u64, line: usize) -> u64 {
    let mut buf = b"tokengate/scenario-relay".to_vec();
    buf.extend_from_slice(&seed.to_be_bytes());
    buf.extend_from_slice(&(line as u64).to_be_bytes());
    let h = sha256(&buf);
    u64::from_be_bytes(h[..8].try_into().expect("8 bytes"))
}

pub fn run(scenario: &Scenario, config: &RunConfig) -> Result<RunReport, RunError> {
    let mut runner = Runner::new(config.clone());
    for step in &scenario.steps {
        runner.step(step)?;
    }
    Ok(runner.finish())
}

/// Step-by-step execution, for callers that want to inspect the network
/// between steps.
pub struct Runner {
    config: RunConfig,
    wallets: BTreeMap<String, Wallet>,
    net: Option<Network>,
    gateways: BTreeMap<String, Gateway>,
    context: SharedContext,
    txs: Vec<TxRecord>,
    by_hash: HashMap<TxHash, usize>,
    labels: HashMap<String, usize>,
    blocks: Vec<BlockSummary>,
    assertions: Vec<AssertionResult>,
}

impl Runner {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            wallets: BTreeMap::new(),
            net: None,
            gateways: BTreeMap::new(),
            context: SharedContext::new(),
            txs: Vec::new(),
            by_hash: HashMap::new(),
            labels: HashMap::new(),
            blocks: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn network(&self) -> Option<&Network> {
        self.net.as_ref()
    }

    pub fn gateway(&self, name: &str) -> Option<&Gateway> {
        self.gateways.get(name)
    }

    pub fn wallet(&self, name: &str) -> Option<&Wallet> {
        self.wallets.get(name)
    }

    pub fn address_of(&self, name: &str) -> Option<Address> {
        self.wallets.get(name).map(Wallet::address)
    }

    pub fn step(&mut self, step: &Step) -> Result<(), RunError> {
        let line = step.line;
        match &step.kind {
            StepKind::CreateWallet { name } => {
                let w = Wallet::from_secret(wallet_secret(self.config.seed, name));
                self.wallets.insert(name.clone(), w);
            }
            StepKind::InitContract {
                owner,
                supply,
                ops,
                nodes,
                block_interval,
                max_block_txs,
            } => {
                let owner = self.addr(owner, line)?;
                let table = ops.iter().map(|(_, op, t)| (*op, *t)).collect();
                let mut genesis =
                    Genesis::new(owner, *supply, table).with_gas_schedule(self.config.gas_schedule);
                if let Some(i) = block_interval {
                    genesis = genesis.with_block_interval(*i);
                }
                let mut net = Network::new(genesis, *nodes)
                    .map_err(|source| RunError::Network { line, source })?;
                if let Some(m) = max_block_txs {
                    net = net.with_max_block_txs(*m);
                }
                self.net = Some(net);
            }
            StepKind::Grant {
                from,
                to,
                amount,
                tx,
            } => {
                let signer = match from {
                    Some(f) => f.clone(),
                    None => self.owner_name(line)?,
                };
                let to = self.addr(to, line)?;
                self.send(
                    line,
                    &signer,
                    Call::Transfer {
                        to,
                        amount: *amount,
                    },
                    tx,
                )?;
            }
            StepKind::Subscribe {
                gateway,
                node,
                event,
                filter_op,
                filter_uri,
            } => {
                let mut conds = Vec::new();
                if let Some(op) = filter_op {
                    conds.push((IndexedAttr::OPCODE, op.topic()));
                }
                if let Some(uri) = filter_uri {
                    conds.push((IndexedAttr::URI_RESOURCE, UriDigest::of(uri).topic()));
                }
                let filter = Filter::new(conds).map_err(|e| RunError::Step {
                    line,
                    reason: e.to_string(),
                })?;
                let net = self.net_mut(line)?;
                let node = NodeId(*node);
                let contract = net.contract_address();
                let (_, rx) = net
                    .subscribe(node, gateway.clone(), contract, *event, filter)
                    .map_err(|source| RunError::Network { line, source })?;
                let reader = net
                    .reader(node)
                    .map_err(|source| RunError::Network { line, source })?;
                let context = self.context.clone();
                self.gateways
                    .entry(gateway.clone())
                    .or_insert_with(|| Gateway::new(gateway.clone(), reader).with_context(context))
                    .attach(rx);
            }
            StepKind::RegisterDevice {
                gateway,
                id,
                uris,
                ops,
            } => {
                self.gateway_mut(gateway, line)?
                    .register_device(id.clone(), uris.iter().cloned(), ops.iter().copied())
                    .map_err(|source| RunError::Gateway { line, source })?;
            }
            StepKind::SetPolicy { gateway, policy } => {
                let gw = self.gateway_mut(gateway, line)?;
                match *policy {
                    PolicySpec::MinBalance(min) => gw.set_policy(MinBalance(min)),
                    PolicySpec::Hours { start, end } => gw.set_policy(HourWindow::new(start, end)),
                }
            }
            StepKind::SetProbation {
                target,
                enabled,
                by,
                tx,
            } => {
                let signer = self.signer(by, line)?;
                let target = self.addr(target, line)?;
                let call = Call::SetProbation {
                    target,
                    enabled: *enabled,
                };
                self.send(line, &signer, call, tx)?;
            }
            StepKind::MarkCritical {
                op,
                threshold,
                by,
                tx,
            } => {
                let signer = self.signer(by, line)?;
                let call = Call::MarkCritical {
                    op: *op,
                    threshold: *threshold,
                };
                self.send(line, &signer, call, tx)?;
            }
            StepKind::ClientInvoke {
                client,
                op,
                uri,
                tx,
            } => {
                let call = Call::InvokeOperation {
                    op: *op,
                    uri: UriDigest::of(uri),
                };
                self.send(line, client, call, tx)?;
            }
            StepKind::Transfer {
                from,
                to,
                amount,
                tx,
            } => {
                let to = self.addr(to, line)?;
                self.send(
                    line,
                    from,
                    Call::Transfer {
                        to,
                        amount: *amount,
                    },
                    tx,
                )?;
            }
            StepKind::Panic { target, by, tx } => {
                let signer = self.signer(by, line)?;
                let target = target.as_ref().map(|t| self.addr(t, line)).transpose()?;
                self.send(line, &signer, Call::Panic { target }, tx)?;
            }
            StepKind::AdvanceBlock { count, context } => {
                for (k, v) in context {
                    self.context.set(k.clone(), v.clone());
                }
                for _ in 0..*count {
                    self.advance(line)?;
                }
            }
            StepKind::Assert(assertion) => {
                let (passed, observed) = self.check(assertion, line)?;
                self.assertions.push(AssertionResult {
                    line,
                    source: step.source.clone(),
                    passed,
                    observed,
                });
            }
        }
        Ok(())
    }

    fn net_mut(&mut self, line: usize) -> Result<&mut Network, RunError> {
        self.net.as_mut().ok_or_else(|| RunError::Step {
            line,
            reason: "no contract initialized".into(),
        })
    }

    fn net(&self, line: usize) -> Result<&Network, RunError> {
        self.net.as_ref().ok_or_else(|| RunError::Step {
            line,
            reason: "no contract initialized".into(),
        })
    }

    fn gateway_mut(&mut self, name: &str, line: usize) -> Result<&mut Gateway, RunError> {
        self.gateways.get_mut(name).ok_or_else(|| RunError::Step {
            line,
            reason: format!("gateway {name:?} has no subscription"),
        })
    }

    fn addr(&self, name: &str, line: usize) -> Result<Address, RunError> {
        self.address_of(name).ok_or_else(|| RunError::Step {
            line,
            reason: format!("unknown wallet {name:?}"),
        })
    }

    fn owner_name(&self, line: usize) -> Result<String, RunError> {
        let owner = self.net(line)?.producer().genesis().owner;
        self.wallets
            .iter()
            .find(|(_, w)| w.address() == owner)
            .map(|(n, _)| n.clone())
            .ok_or_else(|| RunError::Step {
                line,
                reason: "owner wallet missing".into(),
            })
    }

    fn signer(&self, by: &Option<String>, line: usize) -> Result<String, RunError> {
        match by {
            Some(b) => Ok(b.clone()),
            None => self.owner_name(line),
        }
    }

    fn send(
        &mut self,
        line: usize,
        signer: &str,
        call: Call,
        opts: &TxOptions,
    ) -> Result<(), RunError> {
        let gas_price = opts.gas_price.unwrap_or(self.config.default_gas_price);
        let relay_config = match opts.via {
            Via::Direct => RelayConfig::direct(),
            Via::Relay { drop_ppm, offline } => {
                let c =
                    RelayConfig::relay(f64::from(drop_ppm) / 1e6).map_err(|e| RunError::Step {
                        line,
                        reason: e.to_string(),
                    })?;
                if offline {
                    c.offline()
                } else {
                    c
                }
            }
        };
        let mut relay = Relay::new(relay_config, relay_seed(self.config.seed, line));
        let net = self.net.as_mut().ok_or_else(|| RunError::Step {
            line,
            reason: "no contract initialized".into(),
        })?;
        let contract = net.contract_address();
        let wallet = self.wallets.get_mut(signer).ok_or_else(|| RunError::Step {
            line,
            reason: format!("unknown wallet {signer:?}"),
        })?;
        wallet.sync(&*net);
        let tx = wallet.build(contract, call, gas_price);
        let hash = tx.hash();
        let nonce = tx.nonce;
        let outcome = match relay.send(tx, net) {
            SendOutcome::Delivered(Ok(_)) => TxOutcome::Pending,
            SendOutcome::Delivered(Err(e)) => TxOutcome::Rejected(e.code()),
            SendOutcome::Dropped => TxOutcome::Dropped,
            SendOutcome::Offline => TxOutcome::Offline,
        };
        let index = self.txs.len();
        if outcome == TxOutcome::Pending {
            self.by_hash.insert(hash, index);
        }
        if let Some(label) = &opts.label {
            self.labels.insert(label.clone(), index);
        }
        self.txs.push(TxRecord {
            line,
            label: opts.label.clone(),
            sender: signer.to_string(),
            function: call.function(),
            nonce,
            gas_price,
            hash,
            outcome,
        });
        Ok(())
    }

    /// Commits one block, then lets every gateway drain its queue on its
    /// own thread and waits for all of them.
    fn advance(&mut self, line: usize) -> Result<(), RunError> {
        let net = self.net_mut(line)?;
        let (block, _) = net
            .commit_next_block()
            .map_err(|source| RunError::Network { line, source })?;
        for (index, (tx, receipt)) in block.txs.iter().zip(&block.receipts).enumerate() {
            if let Some(&i) = self.by_hash.get(&tx.hash()) {
                self.txs[i].outcome = TxOutcome::Included {
                    height: block.height,
                    index,
                    status: receipt.status,
                    gas_used: receipt.gas_used,
                    gas: receipt.gas,
                };
            }
        }
        self.blocks.push(BlockSummary {
            height: block.height,
            timestamp: block.timestamp,
            gas_used: block.gas_used(),
            txs: block.txs.len(),
            events: block.events().map(|(i, _, e)| (i, *e)).collect(),
            commitment: block.state_commitment,
        });
        thread::scope(|s| {
            for gw in self.gateways.values_mut() {
                s.spawn(move || gw.process_pending());
            }
        });
        Ok(())
    }

    fn check(&self, assertion: &Assertion, line: usize) -> Result<(bool, String), RunError> {
        let net = self.net(line)?;
        let ledger = net.producer();
        Ok(match assertion {
            Assertion::Balance { account, eq } => {
                let b = ledger.read_state(&Query::Balance(self.addr(account, line)?));
                let b = b.as_u64().unwrap_or(0);
                (b == *eq, b.to_string())
            }
            Assertion::Supply { eq } => {
                let state = ledger.replica().state();
                let c = state.contract();
                let sum = c.balance_sum();
                let ok =
                    sum == u128::from(c.total_supply()) && eq.is_none_or(|e| u128::from(e) == sum);
                (ok, format!("sum={sum} supply={}", c.total_supply()))
            }
            Assertion::Actuations {
                gateway,
                device,
                status,
                eq,
            } => {
                let gw = self.gateways.get(gateway).ok_or_else(|| RunError::Step {
                    line,
                    reason: format!("gateway {gateway:?} has no subscription"),
                })?;
                let n = gw
                    .log()
                    .iter()
                    .filter(|e| e.status == *status)
                    .filter(|e| device.as_ref().is_none_or(|d| &e.device_id == d))
                    .count();
                (n == *eq, n.to_string())
            }
            Assertion::Tx { label, status } => {
                let record = self
                    .labels
                    .get(label)
                    .map(|&i| &self.txs[i])
                    .ok_or_else(|| RunError::Step {
                        line,
                        reason: format!("transaction {label:?} was never sent"),
                    })?;
                (
                    status_matches(*status, &record.outcome),
                    record.outcome.to_string(),
                )
            }
            Assertion::Events { name, height, eq } => {
                let h = height.unwrap_or(ledger.height());
                let n = ledger
                    .replica()
                    .block(h)
                    .map(|b| b.events().filter(|(_, _, e)| e.name() == *name).count())
                    .unwrap_or(0);
                (n == *eq, format!("{n} at height {h}"))
            }
            Assertion::Probation { account, eq } => {
                let v = ledger.read_state(&Query::OnProbation(self.addr(account, line)?));
                let on = v == StateValue::Bool(true);
                (on == *eq, on.to_string())
            }
        })
    }

    pub fn finish(self) -> RunReport {
        let mut actuations = Vec::new();
        for gw in self.gateways.values() {
            actuations.extend(gw.log().iter().cloned());
        }
        let (block_log, live_balances) = match &self.net {
            Some(net) => {
                let replica = net.producer().replica();
                let live = (0..=replica.height())
                    .map(|h| {
                        let s = replica.state_at(h).expect("height within chain");
                        AuditSnapshot::from_state(h, s.contract())
                    })
                    .collect();
                (Some(net.producer().block_log()), live)
            }
            None => (None, Vec::new()),
        };
        RunReport {
            seed: self.config.seed,
            usd_per_gas: self.config.usd_per_gas,
            schedule: self.config.gas_schedule,
            initialized: self.net.is_some(),
            txs: self.txs,
            blocks: self.blocks,
            actuations,
            assertions: self.assertions,
            block_log,
            live_balances,
        }
    }
}

fn status_matches(expected: ExpectedStatus, outcome: &TxOutcome) -> bool {
    use crate::ledger::TxStatus;
    match (expected, outcome) {
        (ExpectedStatus::Ok, TxOutcome::Included { status, .. }) => *status == TxStatus::Success,
        (ExpectedStatus::Failed, TxOutcome::Included { status, .. }) => !status.is_success(),
        (ExpectedStatus::FailedWith(r), TxOutcome::Included { status, .. }) => {
            *status == TxStatus::Failed(r)
        }
        (ExpectedStatus::Rejected, TxOutcome::Rejected(_)) => true,
        (ExpectedStatus::Pending, TxOutcome::Pending) => true,
        (ExpectedStatus::Dropped, TxOutcome::Dropped) => true,
        (ExpectedStatus::Offline, TxOutcome::Offline) => true,
        _ => false,
    }
}

/// Opcode names declared in a scenario, by code.
pub fn opcode_names(scenario: &Scenario) -> BTreeMap<OpCode, String> {
    scenario
        .ops
        .iter()
        .map(|(n, op)| (*op, n.clone()))
        .collect()
}
