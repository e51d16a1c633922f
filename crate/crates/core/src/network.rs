//! A fixed node topology: one producer and a set of peer replicas.
//!
//! The producer seals a block and sends it once to every peer. Each node
//! then re-executes it and dispatches its events to its own local
//! subscriptions. Watchers therefore never change what travels between
//! nodes.

use std::sync::mpsc::Receiver;

use crate::bus::{EventBus, EventRecord, Filter, SubscriptionId};
use crate::contract::EventName;
use crate::crypto::{Address, TxHash};
use crate::ledger::{
    Block, Genesis, Ledger, LedgerError, Replica, StateReader, SubmitError, Transaction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const PRODUCER: NodeId = NodeId(0);
}

/// What committing one block cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BroadcastStats {
    pub height: u64,
    /// Inter-node messages: one block transfer per peer.
    pub wire_messages: usize,
    /// Local event deliveries, summed over all nodes.
    pub deliveries: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("network needs at least one node")]
    NoNodes,
    #[error("no node {0}")]
    UnknownNode(usize),
    #[error("node {node}: {source}")]
    Replica { node: usize, source: LedgerError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug)]
pub struct Network {
    producer: Ledger,
    peers: Vec<Replica>,
    buses: Vec<EventBus>,
    wire_messages: usize,
}

impl Network {
    /// Builds `nodes` nodes from the same genesis; node 0 produces blocks.
    pub fn new(genesis: Genesis, nodes: usize) -> Result<Self, NetworkError> {
        if nodes == 0 {
            return Err(NetworkError::NoNodes);
        }
        let peers = (1..nodes)
            .map(|_| Replica::new(genesis.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            producer: Ledger::new(genesis)?,
            peers,
            buses: (0..nodes).map(|_| EventBus::new()).collect(),
            wire_messages: 0,
        })
    }

    pub fn with_max_block_txs(mut self, max: usize) -> Self {
        self.producer = self.producer.with_max_block_txs(max);
        self
    }

    pub fn node_count(&self) -> usize {
        self.buses.len()
    }

    pub fn producer(&self) -> &Ledger {
        &self.producer
    }

    pub fn producer_mut(&mut self) -> &mut Ledger {
        &mut self.producer
    }

    pub fn contract_address(&self) -> Address {
        self.producer.contract_address()
    }

    pub fn height(&self) -> u64 {
        self.producer.height()
    }

    pub fn replica(&self, node: NodeId) -> Option<&Replica> {
        match node.0 {
            0 => Some(self.producer.replica()),
            i => self.peers.get(i - 1),
        }
    }

    pub fn reader(&self, node: NodeId) -> Result<StateReader, NetworkError> {
        self.replica(node)
            .map(Replica::reader)
            .ok_or(NetworkError::UnknownNode(node.0))
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<TxHash, SubmitError> {
        self.producer.submit_transaction(tx)
    }

    pub fn subscribe(
        &mut self,
        node: NodeId,
        watcher: impl Into<String>,
        contract: Address,
        event_name: EventName,
        filter: Filter,
    ) -> Result<(SubscriptionId, Receiver<EventRecord>), NetworkError> {
        let bus = self
            .buses
            .get_mut(node.0)
            .ok_or(NetworkError::UnknownNode(node.0))?;
        Ok(bus.subscribe(watcher, contract, event_name, filter))
    }

    pub fn bus(&self, node: NodeId) -> Option<&EventBus> {
        self.buses.get(node.0)
    }

    pub fn subscription_count(&self) -> usize {
        self.buses.iter().map(EventBus::subscription_count).sum()
    }

    /// Total inter-node messages since start.
    pub fn wire_messages(&self) -> usize {
        self.wire_messages
    }

    /// Produces a block, ships it to every peer, and dispatches its events
    /// on every node.
    pub fn commit_next_block(&mut self) -> Result<(Block, BroadcastStats), NetworkError> {
        let block = self.producer.produce_block();
        let mut wire = 0;
        for (i, peer) in self.peers.iter_mut().enumerate() {
            wire += 1;
            peer.apply_block(&block)
                .map_err(|source| NetworkError::Replica {
                    node: i + 1,
                    source,
                })?;
        }
        self.wire_messages += wire;
        let deliveries = self.buses.iter_mut().map(|b| b.dispatch(&block)).sum();
        let stats = BroadcastStats {
            height: block.height,
            wire_messages: wire,
            deliveries,
        };
        Ok((block, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{Call, OpCode, UriDigest};
    use crate::crypto::Keypair;

    const LIGHTS: OpCode = OpCode(1);

    fn run_with_watchers(watchers: usize) -> Vec<BroadcastStats> {
        let owner = Keypair::from_secret([0xaa; 32]);
        let genesis = Genesis::new(owner.address(), 100, vec![(LIGHTS, 1)]);
        let mut net = Network::new(genesis, 4).unwrap();
        let c = net.contract_address();
        let _receivers: Vec<_> = (0..watchers)
            .map(|w| {
                let node = NodeId(w % net.node_count());
                net.subscribe(
                    node,
                    format!("w{w}"),
                    c,
                    EventName::Operation,
                    Filter::any(),
                )
                .unwrap()
                .1
            })
            .collect();
        let mut out = Vec::new();
        for n in 0..3 {
            net.submit(Transaction::signed(
                &owner,
                n,
                c,
                Call::InvokeOperation {
                    op: LIGHTS,
                    uri: UriDigest::of("room"),
                },
                1,
            ))
            .unwrap();
            out.push(net.commit_next_block().unwrap().1);
        }
        out
    }

    #[test]
    fn wire_cost_ignores_watchers() {
        let none = run_with_watchers(0);
        let many = run_with_watchers(30);
        for (a, b) in none.iter().zip(&many) {
            assert_eq!(a.wire_messages, 3);
            assert_eq!(a.wire_messages, b.wire_messages);
            assert_eq!(a.deliveries, 0);
            assert_eq!(b.deliveries, 30);
        }
    }

    #[test]
    fn all_nodes_agree() {
        let owner = Keypair::from_secret([0xaa; 32]);
        let genesis = Genesis::new(owner.address(), 100, vec![(LIGHTS, 1)]);
        let mut net = Network::new(genesis, 3).unwrap();
        let c = net.contract_address();
        net.submit(Transaction::signed(
            &owner,
            0,
            c,
            Call::Transfer {
                to: Address([1; 20]),
                amount: 7,
            },
            1,
        ))
        .unwrap();
        net.commit_next_block().unwrap();
        for i in 0..3 {
            let r = net.reader(NodeId(i)).unwrap();
            assert_eq!(r.height(), 1);
            assert_eq!(r.balance_of(&Address([1; 20])), 7);
        }
        assert_eq!(
            net.replica(NodeId(1)).unwrap().commitment(),
            net.replica(NodeId(2)).unwrap().commitment()
        );
    }

    #[test]
    fn zero_nodes_rejected() {
        let g = Genesis::new(Address([1; 20]), 1, vec![]);
        assert!(matches!(Network::new(g, 0), Err(NetworkError::NoNodes)));
    }
}
