//! Simulated IoT gateways.
//!
//! A gateway knows the URIs and supported opcodes of its devices. It watches
//! `Operation` events and, for every device registered under the event's URI
//! digest that supports the opcode, evaluates its local policies and then
//! actuates. Gateways only read the ledger; they hold no keys.
//!
//! URI digests cannot be prefix-matched, so hierarchical groups are built by
//! registering a device under each URI it belongs to (its own, its room's,
//! its floor's).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::sync::mpsc::Receiver;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::bus::EventRecord;
use crate::contract::{Event, OpCode, UriDigest};
use crate::crypto::Address;
use crate::ledger::StateReader;

pub type DeviceId = String;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRecord {
    pub id: DeviceId,
    pub uris: BTreeSet<String>,
    pub digests: BTreeSet<UriDigest>,
    pub supported_ops: BTreeSet<OpCode>,
    /// (block height, opcode) of every actuation, oldest first.
    pub actuation_log: Vec<(u64, OpCode)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("device {0} has no URIs")]
    EmptyUris(DeviceId),
    #[error("device {0} is already registered")]
    DuplicateDevice(DeviceId),
}

/// A context value supplied to policies.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(untagged)]
pub enum ContextValue {
    Int(i64),
    Text(String),
}

impl ContextValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            ContextValue::Int(v) => Some(*v),
            ContextValue::Text(_) => None,
        }
    }

    /// Integers parse as `Int`, anything else is kept as text.
    pub fn parse(s: &str) -> Self {
        s.parse()
            .map_or_else(|_| ContextValue::Text(s.to_string()), ContextValue::Int)
    }
}

impl fmt::Display for ContextValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextValue::Int(v) => write!(f, "{v}"),
            ContextValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Context = BTreeMap<String, ContextValue>;

/// Everything a local policy may look at.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub sender: Address,
    pub sender_balance: u64,
    pub op: OpCode,
    pub context: &'a Context,
}

/// A second-step check run after the contract has authorized an operation.
/// Implementations must be pure functions of their input.
pub trait LocalPolicy: fmt::Debug + Send + Sync {
    fn name(&self) -> String;
    fn allows(&self, input: &PolicyInput<'_>) -> bool;
}

/// Requires the sender to hold at least this many tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinBalance(pub u64);

impl LocalPolicy for MinBalance {
    fn name(&self) -> String {
        format!("min_balance({})", self.0)
    }

    fn allows(&self, input: &PolicyInput<'_>) -> bool {
        input.sender_balance >= self.0
    }
}

/// Allows operations while `context["hour"]` lies in `[start, end)`.
/// A window with `start > end` wraps past midnight. A missing or
/// non-integer hour is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HourWindow {
    pub start: u8,
    pub end: u8,
}

impl HourWindow {
    pub const KEY: &'static str = "hour";

    pub fn new(start: u8, end: u8) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, hour: i64) -> bool {
        let (s, e) = (i64::from(self.start), i64::from(self.end));
        if s <= e {
            s <= hour && hour < e
        } else {
            (hour >= s || hour < e) && (0..24).contains(&hour)
        }
    }
}

impl LocalPolicy for HourWindow {
    fn name(&self) -> String {
        format!("hours({}-{})", self.start, self.end)
    }

    fn allows(&self, input: &PolicyInput<'_>) -> bool {
        input
            .context
            .get(Self::KEY)
            .and_then(ContextValue::as_int)
            .is_some_and(|h| self.contains(h))
    }
}

/// Policy from a closure.
pub struct FnPolicy<F> {
    name: String,
    f: F,
}

impl<F> FnPolicy<F>
where
    F: Fn(&PolicyInput<'_>) -> bool + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> fmt::Debug for FnPolicy<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPolicy")
            .field("name", &self.name)
            .finish()
    }
}

impl<F> LocalPolicy for FnPolicy<F>
where
    F: Fn(&PolicyInput<'_>) -> bool + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn allows(&self, input: &PolicyInput<'_>) -> bool {
        (self.f)(input)
    }
}

/// Supplies real-world context for the block being processed.
pub trait ContextProvider: fmt::Debug + Send + Sync {
    fn context(&self, height: u64) -> Context;
}

#[derive(Debug, Clone, Default)]
pub struct FixedContext(pub Context);

impl ContextProvider for FixedContext {
    fn context(&self, _height: u64) -> Context {
        self.0.clone()
    }
}

/// Context keyed by height; a height uses the latest entry at or below it.
#[derive(Debug, Clone, Default)]
pub struct ScriptedContext(pub BTreeMap<u64, Context>);

impl ContextProvider for ScriptedContext {
    fn context(&self, height: u64) -> Context {
        self.0
            .range(..=height)
            .next_back()
            .map(|(_, c)| c.clone())
            .unwrap_or_default()
    }
}

/// Context set from outside between blocks, e.g. by a scenario runner.
#[derive(Debug, Clone, Default)]
pub struct SharedContext(Arc<RwLock<Context>>);

impl SharedContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, key: impl Into<String>, value: ContextValue) {
        self.0
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.into(), value);
    }
}

impl ContextProvider for SharedContext {
    fn context(&self, _height: u64) -> Context {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Binds actuations to physical devices. The default does nothing beyond
/// the gateway's own logs.
pub trait DeviceAdapter: fmt::Debug + Send {
    fn actuate(&mut self, device: &DeviceRecord, op: OpCode, height: u64);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubAdapter;

impl DeviceAdapter for StubAdapter {
    fn actuate(&mut self, _device: &DeviceRecord, _op: OpCode, _height: u64) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuationStatus {
    Actuated,
    Rejected,
    Ignored,
}

impl ActuationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ActuationStatus::Actuated => "actuated",
            ActuationStatus::Rejected => "rejected",
            ActuationStatus::Ignored => "ignored",
        }
    }
}

impl fmt::Display for ActuationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActuationEntry {
    pub gateway: String,
    pub device_id: DeviceId,
    pub height: u64,
    #[serde(rename = "opcode")]
    pub op: OpCode,
    pub status: ActuationStatus,
}

pub struct Gateway {
    name: String,
    reader: StateReader,
    devices: BTreeMap<DeviceId, DeviceRecord>,
    index: HashMap<UriDigest, Vec<DeviceId>>,
    policies: Vec<Box<dyn LocalPolicy>>,
    context: Box<dyn ContextProvider>,
    adapter: Box<dyn DeviceAdapter>,
    inbox: Vec<Receiver<EventRecord>>,
    log: Vec<ActuationEntry>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("name", &self.name)
            .field("devices", &self.devices.len())
            .field("policies", &self.policies)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(name: impl Into<String>, reader: StateReader) -> Self {
        Self {
            name: name.into(),
            reader,
            devices: BTreeMap::new(),
            index: HashMap::new(),
            policies: Vec::new(),
            context: Box::new(FixedContext::default()),
            adapter: Box::new(StubAdapter),
            inbox: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn with_context(mut self, provider: impl ContextProvider + 'static) -> Self {
        self.context = Box::new(provider);
        self
    }

    pub fn with_adapter(mut self, adapter: impl DeviceAdapter + 'static) -> Self {
        self.adapter = Box::new(adapter);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn register_device<I, S>(
        &mut self,
        id: impl Into<DeviceId>,
        uris: I,
        supported_ops: impl IntoIterator<Item = OpCode>,
    ) -> Result<(), GatewayError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let id = id.into();
        if self.devices.contains_key(&id) {
            return Err(GatewayError::DuplicateDevice(id));
        }
        let uris: BTreeSet<String> = uris.into_iter().map(Into::into).collect();
        if uris.is_empty() {
            return Err(GatewayError::EmptyUris(id));
        }
        let digests: BTreeSet<UriDigest> = uris.iter().map(|u| UriDigest::of(u)).collect();
        for d in &digests {
            self.index.entry(*d).or_default().push(id.clone());
        }
        self.devices.insert(
            id.clone(),
            DeviceRecord {
                id,
                uris,
                digests,
                supported_ops: supported_ops.into_iter().collect(),
                actuation_log: Vec::new(),
            },
        );
        Ok(())
    }

    pub fn set_policy(&mut self, policy: impl LocalPolicy + 'static) {
        self.policies.push(Box::new(policy));
    }

    pub fn policies(&self) -> impl Iterator<Item = &dyn LocalPolicy> {
        self.policies.iter().map(|p| p.as_ref())
    }

    /// Adds an event queue to drain in [`Gateway::process_pending`].
    pub fn attach(&mut self, inbox: Receiver<EventRecord>) {
        self.inbox.push(inbox);
    }

    pub fn device(&self, id: &str) -> Option<&DeviceRecord> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    /// Number of distinct URI digests served.
    pub fn digest_count(&self) -> usize {
        self.index.len()
    }

    pub fn log(&self) -> &[ActuationEntry] {
        &self.log
    }

    /// Handles one event and returns the log entries it produced.
    pub fn on_event(&mut self, record: &EventRecord) -> Vec<ActuationEntry> {
        let Event::Operation { op, uri } = record.event else {
            return Vec::new();
        };
        let Some(ids) = self.index.get(&uri) else {
            return Vec::new();
        };
        let mut ids = ids.clone();
        ids.sort();
        ids.dedup();

        let supported: Vec<bool> = ids
            .iter()
            .map(|id| self.devices[id].supported_ops.contains(&op))
            .collect();
        let allowed = !supported.contains(&true) || self.policies_allow(record, op);

        let mut out = Vec::with_capacity(ids.len());
        for (id, supports) in ids.iter().zip(supported) {
            let status = match (supports, allowed) {
                (false, _) => ActuationStatus::Ignored,
                (true, false) => ActuationStatus::Rejected,
                (true, true) => ActuationStatus::Actuated,
            };
            if status == ActuationStatus::Actuated {
                let device = self.devices.get_mut(id).expect("indexed device exists");
                device.actuation_log.push((record.height, op));
                self.adapter.actuate(device, op, record.height);
            }
            out.push(ActuationEntry {
                gateway: self.name.clone(),
                device_id: id.clone(),
                height: record.height,
                op,
                status,
            });
        }
        self.log.extend(out.iter().cloned());
        out
    }

    fn policies_allow(&self, record: &EventRecord, op: OpCode) -> bool {
        if self.policies.is_empty() {
            return true;
        }
        let context = self.context.context(record.height);
        let input = PolicyInput {
            sender: record.sender,
            sender_balance: self.reader.balance_of(&record.sender),
            op,
            context: &context,
        };
        self.policies.iter().all(|p| p.allows(&input))
    }

    /// Drains every attached queue and returns the number of events handled.
    pub fn process_pending(&mut self) -> usize {
        let mut records = Vec::new();
        for rx in &self.inbox {
            records.extend(rx.try_iter());
        }
        records.sort_by_key(|r| (r.height, r.log_index));
        for r in &records {
            self.on_event(r);
        }
        records.len()
    }

    pub fn export_log<W: Write>(&self, w: W) -> io::Result<()> {
        export_actuations(&self.log, w)
    }
}

/// One JSON object per entry: gateway, device_id, height, opcode, status.
pub fn export_actuations<W: Write>(entries: &[ActuationEntry], mut w: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    w.flush()
}
