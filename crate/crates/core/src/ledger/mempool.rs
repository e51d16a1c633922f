use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::crypto::Address;

use super::{SubmitError, Transaction};

#[derive(Debug, Clone)]
struct Pending {
    tx: Transaction,
    arrival: u64,
}

/// Pending transactions, per sender in nonce order.
///
/// Selection is highest gas price first, earlier arrival on ties, subject to
/// each sender's transactions leaving in consecutive nonce order.
#[derive(Debug, Default, Clone)]
pub struct Mempool {
    queues: BTreeMap<Address, BTreeMap<u64, Pending>>,
    next_arrival: u64,
    len: usize,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds an already validated transaction. A second transaction with the
    /// same sender and nonce is refused.
    pub fn insert(&mut self, tx: Transaction) -> Result<(), SubmitError> {
        let queue = self.queues.entry(tx.sender).or_default();
        if queue.contains_key(&tx.nonce) {
            return Err(SubmitError::Duplicate);
        }
        let arrival = self.next_arrival;
        self.next_arrival += 1;
        queue.insert(tx.nonce, Pending { tx, arrival });
        self.len += 1;
        Ok(())
    }

    /// Highest nonce such that every nonce from `committed` up to it is
    /// pending, plus one. Equals `committed` when nothing is executable.
    pub fn next_nonce(&self, sender: &Address, committed: u64) -> u64 {
        let mut next = committed;
        if let Some(queue) = self.queues.get(sender) {
            while queue.contains_key(&next) {
                next += 1;
            }
        }
        next
    }

    /// Removes and returns up to `limit` executable transactions in block order.
    pub fn select(
        &mut self,
        nonce_of: impl Fn(&Address) -> u64,
        limit: Option<usize>,
    ) -> Vec<Transaction> {
        let mut heap = BinaryHeap::new();
        for (sender, queue) in &self.queues {
            if let Some(p) = queue.get(&nonce_of(sender)) {
                heap.push((p.tx.gas_price, Reverse(p.arrival), *sender));
            }
        }

        let limit = limit.unwrap_or(usize::MAX);
        let mut out = Vec::new();
        while out.len() < limit {
            let Some((_, _, sender)) = heap.pop() else {
                break;
            };
            let queue = self.queues.get_mut(&sender).expect("queued sender");
            let (_, head) = queue.pop_first().expect("non-empty queue");
            if let Some(next) = queue.get(&(head.tx.nonce + 1)) {
                heap.push((next.tx.gas_price, Reverse(next.arrival), sender));
            }
            if queue.is_empty() {
                self.queues.remove(&sender);
            }
            self.len -= 1;
            out.push(head.tx);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::Call;
    use crate::crypto::Keypair;

    fn tx(kp: &Keypair, nonce: u64, price: u64) -> Transaction {
        Transaction::signed(
            kp,
            nonce,
            Address([7; 20]),
            Call::Panic { target: None },
            price,
        )
    }

    #[test]
    fn higher_price_goes_first() {
        let a = Keypair::from_secret([1; 32]);
        let b = Keypair::from_secret([2; 32]);
        let mut pool = Mempool::new();
        pool.insert(tx(&a, 0, 2)).unwrap();
        pool.insert(tx(&b, 0, 5)).unwrap();
        let order: Vec<_> = pool
            .select(|_| 0, None)
            .iter()
            .map(|t| t.gas_price)
            .collect();
        assert_eq!(order, vec![5, 2]);
        assert!(pool.is_empty());
    }

    #[test]
    fn ties_break_by_arrival() {
        let a = Keypair::from_secret([1; 32]);
        let b = Keypair::from_secret([2; 32]);
        let mut pool = Mempool::new();
        pool.insert(tx(&b, 0, 3)).unwrap();
        pool.insert(tx(&a, 0, 3)).unwrap();
        let order: Vec<_> = pool.select(|_| 0, None).iter().map(|t| t.sender).collect();
        assert_eq!(order, vec![b.address(), a.address()]);
    }

    #[test]
    fn same_sender_leaves_in_nonce_order() {
        let a = Keypair::from_secret([1; 32]);
        let b = Keypair::from_secret([2; 32]);
        let mut pool = Mempool::new();
        pool.insert(tx(&a, 1, 10)).unwrap();
        pool.insert(tx(&a, 0, 1)).unwrap();
        pool.insert(tx(&b, 0, 5)).unwrap();
        let order: Vec<_> = pool
            .select(|_| 0, None)
            .iter()
            .map(|t| (t.gas_price, t.nonce))
            .collect();
        assert_eq!(order, vec![(5, 0), (1, 0), (10, 1)]);
    }

    #[test]
    fn nonce_gap_holds_back_later_transactions() {
        let a = Keypair::from_secret([1; 32]);
        let mut pool = Mempool::new();
        pool.insert(tx(&a, 2, 10)).unwrap();
        assert!(pool.select(|_| 0, None).is_empty());
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.next_nonce(&a.address(), 0), 0);
        pool.insert(tx(&a, 0, 1)).unwrap();
        pool.insert(tx(&a, 1, 1)).unwrap();
        assert_eq!(pool.next_nonce(&a.address(), 0), 3);
        assert_eq!(pool.select(|_| 0, Some(2)).len(), 2);
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn duplicate_sender_nonce_rejected() {
        let a = Keypair::from_secret([1; 32]);
        let mut pool = Mempool::new();
        pool.insert(tx(&a, 0, 1)).unwrap();
        assert_eq!(pool.insert(tx(&a, 0, 1)), Err(SubmitError::Duplicate));
        assert_eq!(pool.insert(tx(&a, 0, 9)), Err(SubmitError::Duplicate));
        assert_eq!(pool.len(), 1);
    }
}
