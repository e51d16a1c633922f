use crate::crypto::{Address, TxHash};

use super::{
    check_transaction, execute_transactions, Block, BlockLog, ChainState, Genesis, LedgerError,
    Mempool, Query, Replica, StateReader, StateValue, SubmitError, Transaction,
};

/// The designated block producer: a replica with a mempool.
#[derive(Debug)]
pub struct Ledger {
    replica: Replica,
    mempool: Mempool,
    max_block_txs: Option<usize>,
}

impl Ledger {
    pub fn new(genesis: Genesis) -> Result<Self, LedgerError> {
        Ok(Self {
            replica: Replica::new(genesis)?,
            mempool: Mempool::new(),
            max_block_txs: None,
        })
    }

    /// Caps the number of transactions per block. The rest wait, which is
    /// where the gas price starts to matter for latency.
    pub fn with_max_block_txs(mut self, max: usize) -> Self {
        self.max_block_txs = Some(max);
        self
    }

    pub fn replica(&self) -> &Replica {
        &self.replica
    }

    pub fn genesis(&self) -> &Genesis {
        self.replica.genesis()
    }

    pub fn contract_address(&self) -> Address {
        self.replica.contract_address()
    }

    pub fn height(&self) -> u64 {
        self.replica.height()
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn reader(&self) -> StateReader {
        self.replica.reader()
    }

    /// Free read against the last committed state.
    pub fn read_state(&self, query: &Query) -> StateValue {
        self.replica.state().read(query)
    }

    /// Next nonce for `account`, counting consecutive pending transactions.
    pub fn expected_nonce(&self, account: &Address) -> u64 {
        let committed = self.replica.state().nonce_of(account);
        self.mempool.next_nonce(account, committed)
    }

    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<TxHash, SubmitError> {
        let committed = self.replica.state().nonce_of(&tx.sender);
        check_transaction(&tx, self.contract_address(), committed)?;
        let hash = tx.hash();
        self.mempool.insert(tx)?;
        Ok(hash)
    }

    /// Seals the next block from the mempool and commits it locally.
    pub fn produce_block(&mut self) -> Block {
        let state = self.replica.state();
        let txs = self
            .mempool
            .select(|a| state.nonce_of(a), self.max_block_txs);
        let mut next = ChainState::clone(state);
        let height = self.replica.height() + 1;
        let receipts = execute_transactions(
            &mut next,
            &txs,
            self.contract_address(),
            &self.genesis().gas,
            height,
        )
        .expect("mempool only releases valid, in-order transactions");
        let block = Block {
            height,
            timestamp: self.replica.next_timestamp(),
            parent: self.replica.head().hash(),
            txs,
            receipts,
            state_commitment: next.commitment(),
        };
        self.replica.commit(block.clone(), next);
        block
    }

    pub fn block_log(&self) -> BlockLog {
        BlockLog {
            genesis: self.genesis().clone(),
            blocks: self.replica.blocks().to_vec(),
        }
    }
}
