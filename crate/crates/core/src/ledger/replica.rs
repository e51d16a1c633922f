use std::sync::Arc;

use crate::crypto::{Address, BlockHash};

use super::{execute_transactions, Block, ChainState, Genesis, LedgerError, StateReader};

/// A node that follows the chain by re-executing blocks.
#[derive(Debug)]
pub struct Replica {
    genesis: Genesis,
    contract: Address,
    blocks: Vec<Block>,
    /// Post-state of every committed height.
    history: Vec<Arc<ChainState>>,
    reader: StateReader,
    halted: Option<LedgerError>,
}

impl Replica {
    pub fn new(genesis: Genesis) -> Result<Self, LedgerError> {
        genesis.gas.validate()?;
        if genesis.block_interval == 0 {
            return Err(LedgerError::ZeroBlockInterval);
        }
        let state = Arc::new(ChainState::from_genesis(&genesis)?);
        let block0 = Block {
            height: 0,
            timestamp: 0,
            parent: BlockHash([0; 32]),
            txs: Vec::new(),
            receipts: Vec::new(),
            state_commitment: state.commitment(),
        };
        Ok(Self {
            contract: genesis.contract_address(),
            genesis,
            blocks: vec![block0],
            reader: StateReader::new(0, Arc::clone(&state)),
            history: vec![state],
            halted: None,
        })
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn contract_address(&self) -> Address {
        self.contract
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis block always present")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    pub fn state(&self) -> &Arc<ChainState> {
        self.history.last().expect("genesis state always present")
    }

    pub fn state_at(&self, height: u64) -> Option<&Arc<ChainState>> {
        self.history.get(usize::try_from(height).ok()?)
    }

    pub fn commitment(&self) -> super::StateCommitment {
        self.head().state_commitment
    }

    /// Read handle onto this replica's committed state.
    pub fn reader(&self) -> StateReader {
        self.reader.clone()
    }

    pub fn is_halted(&self) -> bool {
        self.halted.is_some()
    }

    pub(crate) fn next_timestamp(&self) -> u64 {
        self.head().timestamp + self.genesis.block_interval
    }

    /// Re-executes `block` on top of the head and commits it if the result
    /// matches. A mismatching commitment or receipt halts the replica for
    /// good; structural errors (wrong height, parent or timestamp) do not.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), LedgerError> {
        if let Some(e) = &self.halted {
            return Err(LedgerError::Halted(Box::new(e.clone())));
        }
        let expected = self.height() + 1;
        if block.height != expected {
            return Err(LedgerError::HeightGap {
                expected,
                got: block.height,
            });
        }
        if block.parent != self.head().hash() {
            return Err(LedgerError::ParentMismatch {
                height: block.height,
            });
        }
        let ts = self.next_timestamp();
        if block.timestamp != ts {
            return Err(LedgerError::TimestampMismatch {
                height: block.height,
                expected: ts,
                got: block.timestamp,
            });
        }

        let mut state = ChainState::clone(self.state());
        let receipts = match execute_transactions(
            &mut state,
            &block.txs,
            self.contract,
            &self.genesis.gas,
            block.height,
        ) {
            Ok(r) => r,
            Err(e) => return Err(self.halt(e)),
        };
        let local = state.commitment();
        if local != block.state_commitment {
            return Err(self.halt(LedgerError::CommitmentMismatch {
                height: block.height,
                expected: local,
                got: block.state_commitment,
            }));
        }
        if let Some(index) =
            (0..receipts.len()).find(|&i| block.receipts.get(i) != Some(&receipts[i]))
        {
            return Err(self.halt(LedgerError::ReceiptMismatch {
                height: block.height,
                index,
            }));
        }
        if block.receipts.len() != receipts.len() {
            return Err(self.halt(LedgerError::ReceiptMismatch {
                height: block.height,
                index: receipts.len(),
            }));
        }
        self.commit(block.clone(), state);
        Ok(())
    }

    fn halt(&mut self, e: LedgerError) -> LedgerError {
        self.halted = Some(e.clone());
        e
    }

    pub(crate) fn commit(&mut self, block: Block, state: ChainState) {
        let state = Arc::new(state);
        let height = block.height;
        self.blocks.push(block);
        self.history.push(Arc::clone(&state));
        self.reader.publish(height, state);
    }
}
