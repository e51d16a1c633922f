//! Event subscriptions over committed blocks.
//!
//! A watcher subscribes to one event name of one contract, optionally
//! constrained by equality on up to three indexed attributes. Matching is
//! node-local: every node receives the whole block anyway, so subscribers
//! never add traffic between nodes.
//!
//! Each subscription has its own unbounded queue, fed in block order when a
//! block is dispatched. The receiving end may be drained on another thread.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::sync::mpsc::{self, Receiver, Sender};

use serde_json::json;

use crate::contract::{Event, EventName, OpCode, Topic, UriDigest};
use crate::crypto::{Address, TxHash};
use crate::ledger::Block;

/// Maximum number of indexed attributes per event, and so per filter.
pub const MAX_INDEXED: usize = 3;

/// Position of an indexed attribute within an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexedAttr(pub u8);

impl IndexedAttr {
    pub const OPCODE: IndexedAttr = IndexedAttr(0);
    pub const URI_RESOURCE: IndexedAttr = IndexedAttr(1);

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "OPCode" => Some(Self::OPCODE),
            "URIResource" => Some(Self::URI_RESOURCE),
            _ => None,
        }
    }
}

impl fmt::Display for IndexedAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::OPCODE => f.write_str("OPCode"),
            Self::URI_RESOURCE => f.write_str("URIResource"),
            IndexedAttr(i) => write!(f, "topic{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("filter has {0} keys; at most {MAX_INDEXED} indexed attributes can be filtered")]
    TooManyFilterKeys(usize),
    #[error("attribute {0} is not indexed")]
    NotIndexed(IndexedAttr),
    #[error("attribute {0} appears twice in the filter")]
    DuplicateKey(IndexedAttr),
}

/// Conjunction of equality constraints on indexed attributes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    conditions: BTreeMap<IndexedAttr, Topic>,
}

impl Filter {
    /// The empty filter matches every event.
    pub fn any() -> Self {
        Self::default()
    }

    pub fn new(
        conditions: impl IntoIterator<Item = (IndexedAttr, Topic)>,
    ) -> Result<Self, BusError> {
        let conditions: Vec<_> = conditions.into_iter().collect();
        if conditions.len() > MAX_INDEXED {
            return Err(BusError::TooManyFilterKeys(conditions.len()));
        }
        let mut map = BTreeMap::new();
        for (attr, value) in conditions {
            if usize::from(attr.0) >= MAX_INDEXED {
                return Err(BusError::NotIndexed(attr));
            }
            if map.insert(attr, value).is_some() {
                return Err(BusError::DuplicateKey(attr));
            }
        }
        Ok(Self { conditions: map })
    }

    pub fn opcode(op: OpCode) -> Self {
        Self::new([(IndexedAttr::OPCODE, op.topic())]).expect("one key")
    }

    pub fn uri(uri: UriDigest) -> Self {
        Self::new([(IndexedAttr::URI_RESOURCE, uri.topic())]).expect("one key")
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn matches(&self, event: &Event) -> bool {
        let indexed = event.indexed();
        self.conditions
            .iter()
            .all(|(attr, want)| indexed.get(usize::from(attr.0)) == Some(want))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriptionId(pub u64);

/// An event as delivered to a watcher, with its position in the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub height: u64,
    pub tx_index: u32,
    pub log_index: u32,
    pub tx_hash: TxHash,
    pub contract: Address,
    /// Signer of the transaction that emitted the event.
    pub sender: Address,
    pub event: Event,
}

impl EventRecord {
    /// Every event of `block`, in order.
    pub fn from_block(block: &Block) -> Vec<EventRecord> {
        let mut log_index = 0u32;
        block
            .events()
            .map(|(i, tx, ev)| {
                let rec = EventRecord {
                    height: block.height,
                    tx_index: i as u32,
                    log_index,
                    tx_hash: tx.hash(),
                    contract: tx.contract,
                    sender: tx.sender,
                    event: *ev,
                };
                log_index += 1;
                rec
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "height": self.height,
            "tx_index": self.tx_index,
            "name": self.event.name().as_str(),
            "indexed": self.event.indexed().iter().map(hex::encode).collect::<Vec<_>>(),
            "data": hex::encode(self.event.data()),
        })
    }
}

/// Writes one JSON object per event: height, tx index, name, indexed
/// attributes as hex, and data as hex.
pub fn export_events<W: Write>(records: &[EventRecord], mut w: W) -> io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json())?;
    }
    w.flush()
}

#[derive(Debug)]
struct Entry {
    id: SubscriptionId,
    watcher: String,
    contract: Address,
    event_name: EventName,
    filter: Filter,
    queue: Sender<EventRecord>,
}

/// Subscription registry of one node.
#[derive(Debug, Default)]
pub struct EventBus {
    entries: Vec<Entry>,
    next_id: u64,
    next_height: u64,
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a watcher. It receives matching events from every block
    /// dispatched after this call.
    pub fn subscribe(
        &mut self,
        watcher: impl Into<String>,
        contract: Address,
        event_name: EventName,
        filter: Filter,
    ) -> (SubscriptionId, Receiver<EventRecord>) {
        let id = SubscriptionId(self.next_id);
        self.next_id += 1;
        let (tx, rx) = mpsc::channel();
        self.entries.push(Entry {
            id,
            watcher: watcher.into(),
            contract,
            event_name,
            filter,
            queue: tx,
        });
        (id, rx)
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> bool {
        let before = self.entries.len();
        self.entries.retain(|e| e.id != id);
        self.entries.len() != before
    }

    pub fn subscription_count(&self) -> usize {
        self.entries.len()
    }

    pub fn watchers(&self) -> impl Iterator<Item = (SubscriptionId, &str)> {
        self.entries.iter().map(|e| (e.id, e.watcher.as_str()))
    }

    /// Delivers the block's events to every matching subscription and
    /// returns the number of deliveries. A block at or below an already
    /// dispatched height delivers nothing.
    pub fn dispatch(&mut self, block: &Block) -> usize {
        if block.height < self.next_height {
            return 0;
        }
        self.next_height = block.height + 1;
        let records = EventRecord::from_block(block);
        let mut delivered = 0;
        // a dropped receiver ends its subscription
        self.entries.retain(|entry| {
            for rec in &records {
                if rec.contract == entry.contract
                    && rec.event.name() == entry.event_name
                    && entry.filter.matches(&rec.event)
                {
                    if entry.queue.send(rec.clone()).is_err() {
                        return false;
                    }
                    delivered += 1;
                }
            }
            true
        });
        delivered
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{BlockHash, Keypair, StateCommitment};
    use crate::gas::GasBreakdown;
    use crate::ledger::{Receipt, Transaction, TxStatus};
    use crate::Call;

    const CONTRACT: Address = Address([0xcc; 20]);
    const LIGHTS: OpCode = OpCode(1);
    const DOORS: OpCode = OpCode(2);

    fn block_with(height: u64, events: Vec<Event>) -> Block {
        let kp = Keypair::from_secret([1; 32]);
        let (txs, receipts) = events
            .into_iter()
            .enumerate()
            .map(|(i, ev)| {
                let tx = Transaction::signed(
                    &kp,
                    i as u64,
                    CONTRACT,
                    Call::InvokeOperation {
                        op: ev.op(),
                        uri: ev.uri(),
                    },
                    1,
                );
                let r = Receipt {
                    status: TxStatus::Success,
                    gas_used: 0,
                    gas: GasBreakdown::new(),
                    events: vec![ev],
                    output: None,
                };
                (tx, r)
            })
            .unzip();
        Block {
            height,
            timestamp: 14 * height,
            parent: BlockHash([0; 32]),
            txs,
            receipts,
            state_commitment: StateCommitment([0; 32]),
        }
    }

    fn op(op: OpCode, uri: &str) -> Event {
        Event::Operation {
            op,
            uri: UriDigest::of(uri),
        }
    }

    #[test]
    fn opcode_filter_delivers_only_that_opcode() {
        let mut bus = EventBus::new();
        let (_, rx) = bus.subscribe("gw", CONTRACT, EventName::Operation, Filter::opcode(LIGHTS));
        let n = bus.dispatch(&block_with(
            1,
            vec![op(LIGHTS, "a"), op(DOORS, "a"), op(LIGHTS, "b")],
        ));
        assert_eq!(n, 2);
        let got: Vec<_> = rx.try_iter().map(|r| r.event.op()).collect();
        assert_eq!(got, vec![LIGHTS, LIGHTS]);
    }

    #[test]
    fn empty_filter_delivers_all_operation_events() {
        let mut bus = EventBus::new();
        let (_, rx) = bus.subscribe("gw", CONTRACT, EventName::Operation, Filter::any());
        let auth = Event::AuthorizationRequest {
            op: LIGHTS,
            uri: UriDigest::of("a"),
            requester: Address([1; 20]),
        };
        bus.dispatch(&block_with(1, vec![op(LIGHTS, "a"), auth, op(DOORS, "b")]));
        assert_eq!(rx.try_iter().count(), 2);
    }

    #[test]
    fn four_key_filter_rejected() {
        let keys = (0..4).map(|i| (IndexedAttr(i), [0u8; 32]));
        assert_eq!(Filter::new(keys), Err(BusError::TooManyFilterKeys(4)));
        assert_eq!(
            Filter::new([(IndexedAttr(3), [0u8; 32])]),
            Err(BusError::NotIndexed(IndexedAttr(3)))
        );
        assert_eq!(
            Filter::new([
                (IndexedAttr::OPCODE, [0u8; 32]),
                (IndexedAttr::OPCODE, [1u8; 32])
            ]),
            Err(BusError::DuplicateKey(IndexedAttr::OPCODE))
        );
    }

    #[test]
    fn three_watchers_three_deliveries() {
        let mut bus = EventBus::new();
        let rxs: Vec<_> = (0..3)
            .map(|i| {
                bus.subscribe(
                    format!("w{i}"),
                    CONTRACT,
                    EventName::Operation,
                    Filter::any(),
                )
                .1
            })
            .collect();
        assert_eq!(bus.dispatch(&block_with(1, vec![op(LIGHTS, "a")])), 3);
        for rx in rxs {
            assert_eq!(rx.try_iter().count(), 1);
        }
    }

    #[test]
    fn non_matching_opcode_delivers_nothing() {
        let mut bus = EventBus::new();
        let (_, rx) = bus.subscribe("gw", CONTRACT, EventName::Operation, Filter::opcode(DOORS));
        assert_eq!(bus.dispatch(&block_with(1, vec![op(LIGHTS, "a")])), 0);
        assert!(rx.try_recv().is_err());
    }

    /// Two URI-filtered gateways, two events: enumerate all four
    /// (event, filter) pairs and compare against what each queue received.
    #[test]
    fn uri_filters_split_events_between_gateways() {
        let uris = ["building6/floor3/room1", "building6/floor3/room2"];
        let events: Vec<Event> = uris.iter().map(|u| op(LIGHTS, u)).collect();
        let mut bus = EventBus::new();
        let rxs: Vec<_> = uris
            .iter()
            .map(|u| {
                bus.subscribe(
                    *u,
                    CONTRACT,
                    EventName::Operation,
                    Filter::uri(UriDigest::of(u)),
                )
                .1
            })
            .collect();
        bus.dispatch(&block_with(1, events.clone()));

        for (g, rx) in rxs.iter().enumerate() {
            let expected: Vec<Event> = events
                .iter()
                .filter(|e| e.uri() == UriDigest::of(uris[g]))
                .copied()
                .collect();
            let got: Vec<Event> = rx.try_iter().map(|r| r.event).collect();
            assert_eq!(got, expected);
            assert_eq!(got.len(), 1);
        }
    }

    #[test]
    fn delivery_is_exactly_once_and_in_order() {
        let mut bus = EventBus::new();
        let (_, rx) = bus.subscribe("gw", CONTRACT, EventName::Operation, Filter::any());
        let b1 = block_with(1, vec![op(LIGHTS, "a"), op(LIGHTS, "b")]);
        let b2 = block_with(2, vec![op(DOORS, "c")]);
        bus.dispatch(&b1);
        bus.dispatch(&b1);
        bus.dispatch(&b2);
        let got: Vec<_> = rx.try_iter().map(|r| (r.height, r.log_index)).collect();
        assert_eq!(got, vec![(1, 0), (1, 1), (2, 0)]);
    }

    #[test]
    fn subscription_sees_only_future_blocks() {
        let mut bus = EventBus::new();
        bus.dispatch(&block_with(1, vec![op(LIGHTS, "a")]));
        let (_, rx) = bus.subscribe("late", CONTRACT, EventName::Operation, Filter::any());
        bus.dispatch(&block_with(2, vec![op(LIGHTS, "b")]));
        let heights: Vec<_> = rx.try_iter().map(|r| r.height).collect();
        assert_eq!(heights, vec![2]);
    }

    #[test]
    fn dropped_receiver_is_unsubscribed() {
        let mut bus = EventBus::new();
        let (_, rx) = bus.subscribe("gw", CONTRACT, EventName::Operation, Filter::any());
        drop(rx);
        bus.dispatch(&block_with(1, vec![op(LIGHTS, "a")]));
        assert_eq!(bus.subscription_count(), 0);
    }

    #[test]
    fn export_lines() {
        let recs = EventRecord::from_block(&block_with(4, vec![op(LIGHTS, "a")]));
        let mut buf = Vec::new();
        export_events(&recs, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["height"], 4);
        assert_eq!(v["name"], "Operation");
        assert_eq!(v["indexed"][1], UriDigest::of("a").to_hex());
    }
}
