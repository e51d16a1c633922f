//! Scenario files.
//!
//! One step per line: a keyword followed by `key=value` pairs. Values may be
//! double-quoted to hold spaces; `#` starts a comment outside quotes. The
//! full grammar is in `docs/scenario-grammar.md`.
//!
//! ```text
//! create_wallet name=owner
//! create_wallet name=alice
//! init_contract owner=owner supply=100 op.TurnOnLights=0x01:1 nodes=3
//! grant to=alice amount=5
//! subscribe gateway=east filter.OPCode=TurnOnLights
//! register_device gateway=east id=lamp1 uris=building6/floor3/room2 ops=TurnOnLights
//! client_invoke client=alice op=TurnOnLights uri=building6/floor3/room2 as=t1
//! advance_block
//! assert actuations gateway=east eq=1
//! ```
//!
//! Names are checked while parsing: every wallet, gateway, device, opcode
//! name and transaction label must be declared by an earlier step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::contract::{EventName, FailureReason, OpCode};
use crate::gateway::ContextValue;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub steps: Vec<Step>,
    /// Opcode names declared by `init_contract`.
    pub ops: BTreeMap<String, OpCode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    /// 1-based source line.
    pub line: usize,
    pub source: String,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepKind {
    CreateWallet {
        name: String,
    },
    InitContract {
        owner: String,
        supply: u64,
        ops: Vec<(String, OpCode, u64)>,
        nodes: usize,
        block_interval: Option<u64>,
        max_block_txs: Option<usize>,
    },
    Grant {
        from: Option<String>,
        to: String,
        amount: u64,
        tx: TxOptions,
    },
    Subscribe {
        gateway: String,
        node: usize,
        event: EventName,
        filter_op: Option<OpCode>,
        filter_uri: Option<String>,
    },
    RegisterDevice {
        gateway: String,
        id: String,
        uris: Vec<String>,
        ops: Vec<OpCode>,
    },
    SetPolicy {
        gateway: String,
        policy: PolicySpec,
    },
    SetProbation {
        target: String,
        enabled: bool,
        by: Option<String>,
        tx: TxOptions,
    },
    MarkCritical {
        op: OpCode,
        threshold: u64,
        by: Option<String>,
        tx: TxOptions,
    },
    ClientInvoke {
        client: String,
        op: OpCode,
        uri: String,
        tx: TxOptions,
    },
    Transfer {
        from: String,
        to: String,
        amount: u64,
        tx: TxOptions,
    },
    Panic {
        target: Option<String>,
        by: Option<String>,
        tx: TxOptions,
    },
    AdvanceBlock {
        count: u64,
        context: Vec<(String, ContextValue)>,
    },
    Assert(Assertion),
}

/// Options shared by every step that sends a transaction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TxOptions {
    pub gas_price: Option<u64>,
    /// Label for later `assert tx` steps.
    pub label: Option<String>,
    pub via: Via,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Via {
    #[default]
    Direct,
    /// Drop probability in parts per million.
    Relay { drop_ppm: u32, offline: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySpec {
    MinBalance(u64),
    Hours { start: u8, end: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assertion {
    Balance {
        account: String,
        eq: u64,
    },
    /// Σ balances equals total supply, and optionally a given value.
    Supply {
        eq: Option<u64>,
    },
    Actuations {
        gateway: String,
        device: Option<String>,
        status: crate::gateway::ActuationStatus,
        eq: usize,
    },
    Tx {
        label: String,
        status: ExpectedStatus,
    },
    /// Events of this name in the block at `height`, or the latest block.
    Events {
        name: EventName,
        height: Option<u64>,
        eq: usize,
    },
    Probation {
        account: String,
        eq: bool,
    },
}

/// What `assert tx` may expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedStatus {
    /// Included and succeeded.
    Ok,
    /// Included and failed, for any reason.
    Failed,
    /// Included and failed for this reason.
    FailedWith(FailureReason),
    /// Refused by the ledger before inclusion.
    Rejected,
    Pending,
    Dropped,
    Offline,
}

impl FromStr for ExpectedStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "ok" => Self::Ok,
            "failed" => Self::Failed,
            "rejected" => Self::Rejected,
            "pending" => Self::Pending,
            "dropped" => Self::Dropped,
            "offline" => Self::Offline,
            other => Self::FailedWith(
                other
                    .parse()
                    .map_err(|_| format!("unknown status {other:?}"))?,
            ),
        })
    }
}

impl fmt::Display for ExpectedStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ok => f.write_str("ok"),
            Self::Failed => f.write_str("failed"),
            Self::FailedWith(r) => f.write_str(r.code()),
            Self::Rejected => f.write_str("rejected"),
            Self::Pending => f.write_str("pending"),
            Self::Dropped => f.write_str("dropped"),
            Self::Offline => f.write_str("offline"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ScenarioError {
    pub line: usize,
    pub kind: ErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ErrorKind {
    #[error("unterminated quote")]
    UnterminatedQuote,
    #[error("expected key=value, got {0:?}")]
    NotKeyValue(String),
    #[error("unknown step {0:?}")]
    UnknownStep(String),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("unexpected key {0:?}")]
    UnexpectedKey(String),
    #[error("key {0:?} given twice")]
    RepeatedKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("undefined {what} {name:?}")]
    UndefinedName { what: &'static str, name: String },
    #[error("{what} {name:?} already declared")]
    AlreadyDeclared { what: &'static str, name: String },
    #[error("init_contract must come before this step")]
    NoContract,
    #[error("init_contract appears twice")]
    DuplicateContract,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut p = Parser::default();
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let tokens = tokenize(raw).map_err(|kind| ScenarioError { line, kind })?;
            let Some((keyword, rest)) = tokens.split_first() else {
                continue;
            };
            let kind = p
                .step(keyword, rest)
                .map_err(|kind| ScenarioError { line, kind })?;
            steps.push(Step {
                line,
                source: raw.trim().to_string(),
                kind,
            });
        }
        Ok(Scenario { steps, ops: p.ops })
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Splits a line into whitespace-separated tokens, honouring double quotes
/// and stripping `#` comments.
fn tokenize(line: &str) -> Result<Vec<String>, ErrorKind> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut in_token = false;
    let mut quoted = false;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                quoted = !quoted;
                in_token = true;
            }
            '\\' if quoted => match chars.next() {
                Some(n) => cur.push(n),
                None => return Err(ErrorKind::UnterminatedQuote),
            },
            '#' if !quoted => break,
            c if c.is_whitespace() && !quoted => {
                if in_token {
                    tokens.push(std::mem::take(&mut cur));
                    in_token = false;
                }
            }
            c => {
                cur.push(c);
                in_token = true;
            }
        }
    }
    if quoted {
        return Err(ErrorKind::UnterminatedQuote);
    }
    if in_token {
        tokens.push(cur);
    }
    Ok(tokens)
}

struct Args {
    map: BTreeMap<String, String>,
}

impl Args {
    fn new(tokens: &[String]) -> Result<Self, ErrorKind> {
        let mut map = BTreeMap::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| ErrorKind::NotKeyValue(t.clone()))?;
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ErrorKind::RepeatedKey(k.to_string()));
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn req(&mut self, key: &'static str) -> Result<String, ErrorKind> {
        self.take(key).ok_or(ErrorKind::Missing(key))
    }

    fn parse<T: FromStr>(&mut self, key: &'static str) -> Result<Option<T>, ErrorKind>
    where
        T::Err: fmt::Display,
    {
        self.take(key).map(|v| parse_value(key, &v)).transpose()
    }

    fn req_parse<T: FromStr>(&mut self, key: &'static str) -> Result<T, ErrorKind>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?.ok_or(ErrorKind::Missing(key))
    }

    /// Removes every `prefix.name=value` pair.
    fn prefixed(&mut self, prefix: &str) -> Vec<(String, String)> {
        let keys: Vec<String> = self
            .map
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        keys.into_iter()
            .map(|k| {
                let v = self.map.remove(&k).expect("key listed");
                (k[prefix.len()..].to_string(), v)
            })
            .collect()
    }

    fn done(self) -> Result<(), ErrorKind> {
        match self.map.into_keys().next() {
            Some(k) => Err(ErrorKind::UnexpectedKey(k)),
            None => Ok(()),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ErrorKind>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| ErrorKind::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_u8_literal(key: &str, v: &str) -> Result<u8, ErrorKind> {
    let parsed = match v.strip_prefix("0x") {
        Some(h) => u8::from_str_radix(h, 16),
        None => v.parse(),
    };
    parsed.map_err(|e| ErrorKind::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ErrorKind> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(ErrorKind::BadValue {
            key: key.to_string(),
            reason: format!("expected true or false, got {v:?}"),
        }),
    }
}

#[derive(Default)]
struct Parser {
    wallets: BTreeSet<String>,
    gateways: BTreeSet<String>,
    devices: BTreeSet<(String, String)>,
    labels: BTreeSet<String>,
    ops: BTreeMap<String, OpCode>,
    contract: bool,
}

impl Parser {
    fn step(&mut self, keyword: &str, rest: &[String]) -> Result<StepKind, ErrorKind> {
        if keyword == "assert" {
            let (what, rest) = rest
                .split_first()
                .ok_or(ErrorKind::Missing("assertion kind"))?;
            let mut a = Args::new(rest)?;
            let assertion = self.assertion(what, &mut a)?;
            a.done()?;
            return Ok(StepKind::Assert(assertion));
        }
        let mut a = Args::new(rest)?;
        let kind = match keyword {
            "create_wallet" => {
                let name = a.req("name")?;
                if !self.wallets.insert(name.clone()) {
                    return Err(ErrorKind::AlreadyDeclared {
                        what: "wallet",
                        name,
                    });
                }
                StepKind::CreateWallet { name }
            }
            "init_contract" => {
                if self.contract {
                    return Err(ErrorKind::DuplicateContract);
                }
                let owner = self.wallet(a.req("owner")?)?;
                let supply = a.req_parse("supply")?;
                let nodes = a.parse("nodes")?.unwrap_or(1);
                let block_interval = a.parse("block_interval")?;
                let max_block_txs = a.parse("max_block_txs")?;
                let mut ops = Vec::new();
                for (name, spec) in a.prefixed("op.") {
                    let key = format!("op.{name}");
                    let (code, threshold) =
                        spec.split_once(':').ok_or_else(|| ErrorKind::BadValue {
                            key: key.clone(),
                            reason: "expected code:required_balance".into(),
                        })?;
                    let code = OpCode(parse_u8_literal(&key, code)?);
                    let threshold: u64 = parse_value(&key, threshold)?;
                    self.ops.insert(name.clone(), code);
                    ops.push((name, code, threshold));
                }
                self.contract = true;
                StepKind::InitContract {
                    owner,
                    supply,
                    ops,
                    nodes,
                    block_interval,
                    max_block_txs,
                }
            }
            "grant" => {
                self.need_contract()?;
                let from = a.take("from").map(|f| self.wallet(f)).transpose()?;
                let to = self.wallet(a.req("to")?)?;
                let amount = a.req_parse("amount")?;
                StepKind::Grant {
                    from,
                    to,
                    amount,
                    tx: self.tx_options(&mut a)?,
                }
            }
            "subscribe" => {
                self.need_contract()?;
                let gateway = a.req("gateway")?;
                self.gateways.insert(gateway.clone());
                let node = a.parse("node")?.unwrap_or(0);
                let event = a.parse("event")?.unwrap_or(EventName::Operation);
                let filter_op = a.take("filter.OPCode").map(|o| self.op(&o)).transpose()?;
                let filter_uri = a.take("filter.URIResource");
                if let Some((k, _)) = a.prefixed("filter.").into_iter().next() {
                    return Err(ErrorKind::BadValue {
                        key: format!("filter.{k}"),
                        reason: "not an indexed attribute (use OPCode or URIResource)".into(),
                    });
                }
                StepKind::Subscribe {
                    gateway,
                    node,
                    event,
                    filter_op,
                    filter_uri,
                }
            }
            "register_device" => {
                let gateway = self.gateway(a.req("gateway")?)?;
                let id = a.req("id")?;
                let uris = split_list(&a.req("uris")?);
                let ops = split_list(&a.req("ops")?)
                    .iter()
                    .map(|o| self.op(o))
                    .collect::<Result<_, _>>()?;
                self.devices.insert((gateway.clone(), id.clone()));
                StepKind::RegisterDevice {
                    gateway,
                    id,
                    uris,
                    ops,
                }
            }
            "set_policy" => {
                let gateway = self.gateway(a.req("gateway")?)?;
                let policy = match a.req("kind")?.as_str() {
                    "min_balance" => PolicySpec::MinBalance(a.req_parse("min")?),
                    "hours" => {
                        let start: u8 = a.req_parse("from")?;
                        let end: u8 = a.req_parse("to")?;
                        if start > 23 || end > 24 {
                            return Err(ErrorKind::BadValue {
                                key: "hours".into(),
                                reason: "hours are 0..=24".into(),
                            });
                        }
                        PolicySpec::Hours { start, end }
                    }
                    other => {
                        return Err(ErrorKind::BadValue {
                            key: "kind".into(),
                            reason: format!("unknown policy {other:?}"),
                        })
                    }
                };
                StepKind::SetPolicy { gateway, policy }
            }
            "set_probation" => {
                self.need_contract()?;
                let target = self.wallet(a.req("target")?)?;
                let enabled = match a.take("enabled") {
                    Some(v) => parse_bool("enabled", &v)?,
                    None => true,
                };
                let by = a.take("by").map(|b| self.wallet(b)).transpose()?;
                StepKind::SetProbation {
                    target,
                    enabled,
                    by,
                    tx: self.tx_options(&mut a)?,
                }
            }
            "mark_critical" => {
                self.need_contract()?;
                let op = self.op(&a.req("op")?)?;
                let threshold = a.req_parse("threshold")?;
                let by = a.take("by").map(|b| self.wallet(b)).transpose()?;
                StepKind::MarkCritical {
                    op,
                    threshold,
                    by,
                    tx: self.tx_options(&mut a)?,
                }
            }
            "client_invoke" => {
                self.need_contract()?;
                let client = self.wallet(a.req("client")?)?;
                let op = self.op(&a.req("op")?)?;
                let uri = a.req("uri")?;
                StepKind::ClientInvoke {
                    client,
                    op,
                    uri,
                    tx: self.tx_options(&mut a)?,
                }
            }
            "transfer" => {
                self.need_contract()?;
                let from = self.wallet(a.req("from")?)?;
                let to = self.wallet(a.req("to")?)?;
                let amount = a.req_parse("amount")?;
                StepKind::Transfer {
                    from,
                    to,
                    amount,
                    tx: self.tx_options(&mut a)?,
                }
            }
            "panic" => {
                self.need_contract()?;
                let target = a.take("target").map(|t| self.wallet(t)).transpose()?;
                let by = a.take("by").map(|b| self.wallet(b)).transpose()?;
                StepKind::Panic {
                    target,
                    by,
                    tx: self.tx_options(&mut a)?,
                }
            }
            "advance_block" => {
                self.need_contract()?;
                let count = a.parse("count")?.unwrap_or(1);
                let context = a
                    .prefixed("ctx.")
                    .into_iter()
                    .map(|(k, v)| {
                        let v = ContextValue::parse(&v);
                        (k, v)
                    })
                    .collect();
                StepKind::AdvanceBlock { count, context }
            }
            other => return Err(ErrorKind::UnknownStep(other.to_string())),
        };
        a.done()?;
        Ok(kind)
    }

    fn assertion(&mut self, what: &str, a: &mut Args) -> Result<Assertion, ErrorKind> {
        self.need_contract()?;
        Ok(match what {
            "balance" => Assertion::Balance {
                account: self.wallet(a.req("account")?)?,
                eq: a.req_parse("eq")?,
            },
            "supply" => Assertion::Supply { eq: a.parse("eq")? },
            "actuations" => {
                let gateway = self.gateway(a.req("gateway")?)?;
                let device = a.take("device");
                if let Some(d) = &device {
                    if !self.devices.contains(&(gateway.clone(), d.clone())) {
                        return Err(ErrorKind::UndefinedName {
                            what: "device",
                            name: d.clone(),
                        });
                    }
                }
                let status = match a.take("status").as_deref() {
                    None | Some("actuated") => crate::gateway::ActuationStatus::Actuated,
                    Some("rejected") => crate::gateway::ActuationStatus::Rejected,
                    Some("ignored") => crate::gateway::ActuationStatus::Ignored,
                    Some(other) => {
                        return Err(ErrorKind::BadValue {
                            key: "status".into(),
                            reason: format!("unknown actuation status {other:?}"),
                        })
                    }
                };
                Assertion::Actuations {
                    gateway,
                    device,
                    status,
                    eq: a.req_parse("eq")?,
                }
            }
            "tx" => {
                let label = a.req("ref")?;
                if !self.labels.contains(&label) {
                    return Err(ErrorKind::UndefinedName {
                        what: "transaction",
                        name: label,
                    });
                }
                Assertion::Tx {
                    label,
                    status: a.req_parse("status")?,
                }
            }
            "events" => Assertion::Events {
                name: a.req_parse("name")?,
                height: a.parse("height")?,
                eq: a.req_parse("eq")?,
            },
            "probation" => Assertion::Probation {
                account: self.wallet(a.req("account")?)?,
                eq: a
                    .take("eq")
                    .map(|v| parse_bool("eq", &v))
                    .transpose()?
                    .ok_or(ErrorKind::Missing("eq"))?,
            },
            other => return Err(ErrorKind::UnknownStep(format!("assert {other}"))),
        })
    }

    fn tx_options(&mut self, a: &mut Args) -> Result<TxOptions, ErrorKind> {
        let gas_price = a.parse("gas_price")?;
        let label = a.take("as");
        if let Some(l) = &label {
            if !self.labels.insert(l.clone()) {
                return Err(ErrorKind::AlreadyDeclared {
                    what: "transaction",
                    name: l.clone(),
                });
            }
        }
        let drop: Option<f64> = a.parse("drop")?;
        let offline = a
            .take("offline")
            .map(|v| parse_bool("offline", &v))
            .transpose()?;
        let via = match a.take("via").as_deref() {
            None | Some("direct") => {
                if drop.is_some() || offline.is_some() {
                    return Err(ErrorKind::BadValue {
                        key: "via".into(),
                        reason: "drop and offline need via=relay".into(),
                    });
                }
                Via::Direct
            }
            Some("relay") => {
                let p = drop.unwrap_or(0.0);
                if !(0.0..=1.0).contains(&p) {
                    return Err(ErrorKind::BadValue {
                        key: "drop".into(),
                        reason: "probability must be within [0, 1]".into(),
                    });
                }
                Via::Relay {
                    drop_ppm: (p * 1e6).round() as u32,
                    offline: offline.unwrap_or(false),
                }
            }
            Some(other) => {
                return Err(ErrorKind::BadValue {
                    key: "via".into(),
                    reason: format!("expected direct or relay, got {other:?}"),
                })
            }
        };
        Ok(TxOptions {
            gas_price,
            label,
            via,
        })
    }

    fn need_contract(&self) -> Result<(), ErrorKind> {
        if self.contract {
            Ok(())
        } else {
            Err(ErrorKind::NoContract)
        }
    }

    fn wallet(&self, name: String) -> Result<String, ErrorKind> {
        if self.wallets.contains(&name) {
            Ok(name)
        } else {
            Err(ErrorKind::UndefinedName {
                what: "wallet",
                name,
            })
        }
    }

    fn gateway(&self, name: String) -> Result<String, ErrorKind> {
        if self.gateways.contains(&name) {
            Ok(name)
        } else {
            Err(ErrorKind::UndefinedName {
                what: "gateway",
                name,
            })
        }
    }

    /// A declared opcode name, or a numeric literal such as `0x01`.
    fn op(&self, name: &str) -> Result<OpCode, ErrorKind> {
        if let Some(op) = self.ops.get(name) {
            return Ok(*op);
        }
        if name.starts_with(|c: char| c.is_ascii_digit()) {
            return parse_u8_literal("op", name).map(OpCode);
        }
        Err(ErrorKind::UndefinedName {
            what: "opcode",
            name: name.to_string(),
        })
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}
