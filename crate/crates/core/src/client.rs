//! Client wallets, transaction builders and the RPC relay model.
//!
//! A wallet signs; whatever carries the transaction afterwards can only
//! deliver it unchanged or lose it. [`Relay`] models a third-party full node
//! that may be offline or drop transactions at a seeded random rate. A
//! tamper hook lets tests check that a modified transaction is refused.
//!
//! Key files are plain hex with no encryption. They exist for the
//! simulator only and must never hold real keys.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contract::{Call, OpCode, UriDigest};
use crate::crypto::{decode_fixed, Address, HexError, Keypair, PublicKey, TxHash};
use crate::ledger::{Ledger, SubmitError, Transaction};
use crate::network::Network;

/// Anything that can report the next nonce an account must use.
pub trait NonceSource {
    fn expected_nonce(&self, account: &Address) -> u64;
}

impl NonceSource for Ledger {
    fn expected_nonce(&self, account: &Address) -> u64 {
        Ledger::expected_nonce(self, account)
    }
}

impl NonceSource for Network {
    fn expected_nonce(&self, account: &Address) -> u64 {
        self.producer().expected_nonce(account)
    }
}

/// Anything that accepts signed transactions.
pub trait TransactionSink {
    fn submit(&mut self, tx: Transaction) -> Result<TxHash, SubmitError>;
}

impl TransactionSink for Ledger {
    fn submit(&mut self, tx: Transaction) -> Result<TxHash, SubmitError> {
        self.submit_transaction(tx)
    }
}

impl TransactionSink for Network {
    fn submit(&mut self, tx: Transaction) -> Result<TxHash, SubmitError> {
        Network::submit(self, tx)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KeyFileError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("key file must have two lines (private, public)")]
    Format,
    #[error("bad hex: {0}")]
    Hex(#[from] HexError),
    #[error("public key does not match private key")]
    KeyMismatch,
}

#[derive(Clone)]
pub struct Wallet {
    keypair: Keypair,
    next_nonce: u64,
}

impl fmt::Debug for Wallet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Wallet")
            .field("address", &self.address())
            .field("next_nonce", &self.next_nonce)
            .finish()
    }
}

impl Wallet {
    pub fn from_keypair(keypair: Keypair) -> Self {
        Self {
            keypair,
            next_nonce: 0,
        }
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        Self::from_keypair(Keypair::from_secret(secret))
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_keypair(Keypair::generate(rng))
    }

    pub fn keypair(&self) -> &Keypair {
        &self.keypair
    }

    pub fn address(&self) -> Address {
        self.keypair.address()
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public()
    }

    pub fn next_nonce(&self) -> u64 {
        self.next_nonce
    }

    /// Adopts the ledger's view of the next nonce.
    pub fn sync(&mut self, source: &impl NonceSource) {
        self.next_nonce = source.expected_nonce(&self.address());
    }

    /// Signs `call` with the next nonce and advances the local counter.
    pub fn build(&mut self, contract: Address, call: Call, gas_price: u64) -> Transaction {
        let tx = Transaction::signed(&self.keypair, self.next_nonce, contract, call, gas_price);
        self.next_nonce += 1;
        tx
    }

    pub fn build_invoke(
        &mut self,
        contract: Address,
        op: OpCode,
        uri: &str,
        gas_price: u64,
    ) -> Transaction {
        let uri = UriDigest::of(uri);
        self.build(contract, Call::InvokeOperation { op, uri }, gas_price)
    }

    /// Two hex lines: private key, then public key.
    pub fn to_key_file(&self) -> String {
        format!(
            "{}\n{}\n",
            hex::encode(self.keypair.secret()),
            hex::encode(self.public_key().as_bytes())
        )
    }

    pub fn from_key_file(text: &str) -> Result<Self, KeyFileError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let (Some(private), Some(public), None) = (lines.next(), lines.next(), lines.next()) else {
            return Err(KeyFileError::Format);
        };
        let secret = decode_fixed::<32>(private)?;
        let public: PublicKey = public.parse()?;
        let wallet = Self::from_secret(secret);
        if wallet.public_key() != public {
            return Err(KeyFileError::KeyMismatch);
        }
        Ok(wallet)
    }

    pub fn save(&self, path: &Path) -> Result<(), KeyFileError> {
        fs::write(path, self.to_key_file())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KeyFileError> {
        Self::from_key_file(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayMode {
    /// The client runs its own full node.
    Direct,
    /// Transactions go through a third-party RPC server.
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayConfig {
    pub mode: RelayMode,
    pub drop_probability: f64,
    pub offline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("drop probability {0} is outside [0, 1]")]
pub struct BadProbability(pub f64);

impl RelayConfig {
    pub fn direct() -> Self {
        Self {
            mode: RelayMode::Direct,
            drop_probability: 0.0,
            offline: false,
        }
    }

    pub fn relay(drop_probability: f64) -> Result<Self, BadProbability> {
        if !(0.0..=1.0).contains(&drop_probability) {
            return Err(BadProbability(drop_probability));
        }
        Ok(Self {
            mode: RelayMode::Relay,
            drop_probability,
            offline: false,
        })
    }

    pub fn offline(mut self) -> Self {
        self.offline = true;
        self
    }
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self::direct()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendOutcome {
    /// Reached the ledger, which accepted or refused it.
    Delivered(Result<TxHash, SubmitError>),
    Dropped,
    Offline,
}

impl SendOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, SendOutcome::Delivered(Ok(_)))
    }
}

type Tamper = Box<dyn FnMut(&mut Transaction) + Send>;

/// Path from a wallet to the ledger.
pub struct Relay {
    config: RelayConfig,
    rng: ChaCha8Rng,
    tamper: Option<Tamper>,
}

impl fmt::Debug for Relay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Relay")
            .field("config", &self.config)
            .field("tampering", &self.tamper.is_some())
            .finish()
    }
}

impl Relay {
    pub fn new(config: RelayConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tamper: None,
        }
    }

    /// A relay that rewrites transactions before forwarding them.
    pub fn with_tamper(mut self, f: impl FnMut(&mut Transaction) + Send + 'static) -> Self {
        self.tamper = Some(Box::new(f));
        self
    }

    pub fn config(&self) -> &RelayConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: RelayConfig) {
        self.config = config;
    }

    pub fn send(&mut self, tx: Transaction, sink: &mut impl TransactionSink) -> SendOutcome {
        if self.config.mode == RelayMode::Direct {
            return SendOutcome::Delivered(sink.submit(tx));
        }
        if self.config.offline {
            return SendOutcome::Offline;
        }
        if self.rng.random_bool(self.config.drop_probability) {
            return SendOutcome::Dropped;
        }
        let mut tx = tx;
        if let Some(f) = self.tamper.as_mut() {
            f(&mut tx);
        }
        SendOutcome::Delivered(sink.submit(tx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Genesis;
    use sha2::{Digest, Sha256};

    const LIGHTS: OpCode = OpCode(1);
    const ROOM: &str = "building6/floor3/room2";

    fn setup() -> (Ledger, Wallet) {
        let owner = Wallet::from_secret([0xaa; 32]);
        let ledger = Ledger::new(Genesis::new(owner.address(), 100, vec![(LIGHTS, 1)])).unwrap();
        (ledger, owner)
    }

    #[test]
    fn built_invoke_is_accepted() {
        let (mut ledger, mut w) = setup();
        let c = ledger.contract_address();
        let tx = w.build_invoke(c, LIGHTS, ROOM, 5);
        assert!(ledger.submit_transaction(tx).is_ok());
    }

    #[test]
    fn consecutive_builds_use_consecutive_nonces() {
        let (ledger, mut w) = setup();
        let c = ledger.contract_address();
        let a = w.build_invoke(c, LIGHTS, ROOM, 1);
        let b = w.build_invoke(c, LIGHTS, ROOM, 1);
        assert_eq!((a.nonce, b.nonce), (0, 1));
        assert_eq!(w.next_nonce(), 2);
    }

    #[test]
    fn invoke_digest_matches_reference_hash() {
        let (ledger, mut w) = setup();
        let tx = w.build_invoke(ledger.contract_address(), LIGHTS, ROOM, 1);
        let reference: [u8; 32] = Sha256::digest(ROOM.as_bytes()).into();
        match tx.call {
            Call::InvokeOperation { uri, .. } => assert_eq!(uri.0, reference),
            other => panic!("unexpected call {other:?}"),
        }
    }

    #[test]
    fn sync_recovers_after_drops() {
        let (mut ledger, mut w) = setup();
        let c = ledger.contract_address();
        let mut relay = Relay::new(RelayConfig::relay(1.0).unwrap(), 1);
        assert_eq!(
            relay.send(w.build_invoke(c, LIGHTS, ROOM, 1), &mut ledger),
            SendOutcome::Dropped
        );
        assert_eq!(w.next_nonce(), 1);
        w.sync(&ledger);
        assert_eq!(w.next_nonce(), 0);
        ledger
            .submit_transaction(w.build_invoke(c, LIGHTS, ROOM, 1))
            .unwrap();
        w.sync(&ledger);
        assert_eq!(w.next_nonce(), ledger.expected_nonce(&w.address()));
        assert_eq!(w.next_nonce(), 1);
    }

    #[test]
    fn direct_always_delivers() {
        let (mut ledger, mut w) = setup();
        let c = ledger.contract_address();
        let mut relay = Relay::new(RelayConfig::direct(), 0);
        for _ in 0..20 {
            assert!(relay
                .send(w.build_invoke(c, LIGHTS, ROOM, 1), &mut ledger)
                .is_accepted());
        }
        assert_eq!(ledger.mempool().len(), 20);
    }

    #[test]
    fn offline_relay_leaves_mempool_unchanged() {
        let (mut ledger, mut w) = setup();
        let c = ledger.contract_address();
        let mut relay = Relay::new(RelayConfig::relay(0.0).unwrap().offline(), 0);
        assert_eq!(
            relay.send(w.build_invoke(c, LIGHTS, ROOM, 1), &mut ledger),
            SendOutcome::Offline
        );
        assert!(ledger.mempool().is_empty());
    }

    #[test]
    fn mutated_gas_price_is_bad_signature() {
        let (mut ledger, mut w) = setup();
        let c = ledger.contract_address();
        let mut relay =
            Relay::new(RelayConfig::relay(0.0).unwrap(), 0).with_tamper(|tx| tx.gas_price += 100);
        let out = relay.send(w.build_invoke(c, LIGHTS, ROOM, 5), &mut ledger);
        assert_eq!(out, SendOutcome::Delivered(Err(SubmitError::BadSignature)));
        assert!(ledger.mempool().is_empty());
    }

    #[test]
    fn delivered_tx_is_bit_identical() {
        let (_, mut w) = setup();
        struct Capture(Vec<Transaction>);
        impl TransactionSink for Capture {
            fn submit(&mut self, tx: Transaction) -> Result<TxHash, SubmitError> {
                let h = tx.hash();
                self.0.push(tx);
                Ok(h)
            }
        }
        let mut sink = Capture(Vec::new());
        let mut relay = Relay::new(RelayConfig::relay(0.5).unwrap(), 3);
        let mut built = Vec::new();
        for _ in 0..50 {
            let tx = w.build_invoke(Address([1; 20]), LIGHTS, ROOM, 2);
            if relay.send(tx.clone(), &mut sink).is_accepted() {
                built.push(tx);
            }
        }
        assert_eq!(sink.0, built);
    }

    #[test]
    fn drop_rate_within_two_points() {
        struct Null;
        impl TransactionSink for Null {
            fn submit(&mut self, tx: Transaction) -> Result<TxHash, SubmitError> {
                Ok(tx.hash())
            }
        }
        let (_, mut w) = setup();
        let tx = w.build_invoke(Address([1; 20]), LIGHTS, ROOM, 1);
        for (seed, p) in [(1u64, 0.1), (2, 0.3), (3, 0.5), (4, 0.9)] {
            let mut relay = Relay::new(RelayConfig::relay(p).unwrap(), seed);
            let n = 10_000;
            let dropped = (0..n)
                .filter(|_| relay.send(tx.clone(), &mut Null) == SendOutcome::Dropped)
                .count();
            let rate = dropped as f64 / n as f64;
            assert!((rate - p).abs() <= 0.02, "p={p} observed {rate}");
        }
    }

    #[test]
    fn bad_probability_rejected() {
        assert!(RelayConfig::relay(1.5).is_err());
        assert!(RelayConfig::relay(-0.1).is_err());
    }

    #[test]
    fn key_file_round_trip() {
        let w = Wallet::from_secret([3; 32]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.key");
        w.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(Wallet::load(&path).unwrap().address(), w.address());

        let other = Wallet::from_secret([4; 32]);
        let forged = format!(
            "{}\n{}\n",
            hex::encode([3u8; 32]),
            hex::encode(other.public_key().as_bytes())
        );
        assert!(matches!(
            Wallet::from_key_file(&forged),
            Err(KeyFileError::KeyMismatch)
        ));
        assert!(matches!(
            Wallet::from_key_file("abc"),
            Err(KeyFileError::Format)
        ));
    }
}
