//! Keys, addresses and hashing.
//!
//! Signatures are Ed25519. An [`Address`] is the first 20 bytes of the
//! SHA-256 digest of the 32-byte public key.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

/// SHA-256 of `data`.
pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HexError {
    #[error("invalid hex: {0}")]
    Invalid(#[from] hex::FromHexError),
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
}

pub(crate) fn decode_fixed<const N: usize>(s: &str) -> Result<[u8; N], HexError> {
    let s = s.strip_prefix("0x").unwrap_or(s);
    let bytes = hex::decode(s)?;
    bytes.as_slice().try_into().map_err(|_| HexError::Length {
        expected: N,
        got: bytes.len(),
    })
}

macro_rules! byte_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(0x{})", stringify!($name), hex::encode(self.0))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl FromStr for $name {
            type Err = HexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                decode_fixed::<$len>(s).map(Self)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }
    };
}

byte_newtype!(
    /// 20-byte account identifier.
    Address,
    20
);
byte_newtype!(
    /// Ed25519 verifying key bytes.
    PublicKey,
    32
);
byte_newtype!(
    /// Ed25519 signature bytes.
    Signature,
    64
);
byte_newtype!(
    /// SHA-256 of a canonically encoded transaction.
    TxHash,
    32
);
byte_newtype!(
    /// SHA-256 of a canonically encoded block.
    BlockHash,
    32
);
byte_newtype!(
    /// SHA-256 of the canonical encoding of the full chain state.
    StateCommitment,
    32
);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub fn from_public_key(key: &PublicKey) -> Self {
        let digest = sha256(&key.0);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Address(out)
    }

    /// Short form used in reports: first four bytes.
    pub fn short(&self) -> String {
        format!("0x{}", hex::encode(&self.0[..4]))
    }
}

impl PublicKey {
    pub fn address(&self) -> Address {
        Address::from_public_key(self)
    }

    /// Verifies `signature` over `message`. Malformed keys never verify.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify_strict(message, &sig).is_ok()
    }
}

/// An Ed25519 signing key with its derived public key and address.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
    public: PublicKey,
}

impl Keypair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&secret);
        let public = PublicKey(signing.verifying_key().to_bytes());
        Self { signing, public }
    }

    pub fn generate<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(secret)
    }

    pub fn secret(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn address(&self) -> Address {
        self.public.address()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_is_truncated_key_digest() {
        let kp = Keypair::from_secret([7u8; 32]);
        let digest = sha256(&kp.public().0);
        assert_eq!(&kp.address().0[..], &digest[..20]);
        assert_eq!(kp.address(), Keypair::from_secret([7u8; 32]).address());
    }

    #[test]
    fn distinct_keys_give_distinct_addresses() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..=255u8 {
            let kp = Keypair::from_secret([i; 32]);
            assert!(seen.insert(kp.address()));
        }
    }

    #[test]
    fn sign_and_verify() {
        let kp = Keypair::from_secret([1u8; 32]);
        let sig = kp.sign(b"hello");
        assert!(kp.public().verify(b"hello", &sig));
        assert!(!kp.public().verify(b"hellp", &sig));
        let mut bad = sig;
        bad.0[0] ^= 0xff;
        assert!(!kp.public().verify(b"hello", &bad));
        let other = Keypair::from_secret([2u8; 32]);
        assert!(!other.public().verify(b"hello", &sig));
    }

    #[test]
    fn hex_round_trip() {
        let a: Address = "0x00112233445566778899aabbccddeeff00112233"
            .parse()
            .unwrap();
        assert_eq!(a.to_string(), "0x00112233445566778899aabbccddeeff00112233");
        assert!("0x0011".parse::<Address>().is_err());
        assert!("zz".parse::<Address>().is_err());
    }
}
