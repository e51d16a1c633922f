//! Canonical binary encoding.
//!
//! All integers are big-endian and fixed width. Fixed-size byte strings
//! (addresses, keys, digests) are written raw. Sequences carry a `u32`
//! element count. `Option<T>` is a tag byte (`0` none, `1` some) followed
//! by the value. `bool` is one byte, `0` or `1`; any other value is rejected.
//!
//! The same encoding is used for signing payloads, state commitments and the
//! block log, so two values are equal iff their encodings are equal.

use crate::crypto::{Address, BlockHash, PublicKey, Signature, StateCommitment, TxHash};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("unexpected end of input: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("invalid {what} tag {tag:#04x}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes after value")]
    Trailing(usize),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn len(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("sequence longer than u32::MAX"))
    }

    pub fn put<T: Canonical>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn seq<T: Canonical>(&mut self, items: &[T]) -> &mut Self {
        self.len(items.len());
        for item in items {
            item.encode(self);
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    input: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input }
    }

    pub fn remaining(&self) -> usize {
        self.input.len()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.input.len() {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.input.len() < n {
            return Err(CodecError::Truncated {
                needed: n - self.input.len(),
            });
        }
        let (head, tail) = self.input.split_at(n);
        self.input = tail;
        Ok(head)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::InvalidTag { what: "bool", tag }),
        }
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn get<T: Canonical>(&mut self) -> Result<T, CodecError> {
        T::decode(self)
    }

    pub fn seq<T: Canonical>(&mut self) -> Result<Vec<T>, CodecError> {
        let n = self.u32()? as usize;
        // every element takes at least one byte
        if n > self.remaining() {
            return Err(CodecError::Truncated {
                needed: n - self.remaining(),
            });
        }
        (0..n).map(|_| T::decode(self)).collect()
    }
}

/// A type with a single canonical byte encoding.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    /// Decodes a value that must span all of `bytes`.
    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Canonical for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.u64()
    }
}

impl<T: Canonical> Canonical for Option<T> {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            None => {
                enc.u8(0);
            }
            Some(v) => {
                enc.u8(1).put(v);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        match dec.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(dec)?)),
            tag => Err(CodecError::InvalidTag {
                what: "option",
                tag,
            }),
        }
    }
}

impl<A: Canonical, B: Canonical> Canonical for (A, B) {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.0).put(&self.1);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok((dec.get()?, dec.get()?))
    }
}

macro_rules! canonical_bytes {
    ($($ty:ident),*) => {$(
        impl Canonical for $ty {
            fn encode(&self, enc: &mut Encoder) {
                enc.raw(&self.0);
            }

            fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
                Ok($ty(dec.array()?))
            }
        }
    )*};
}

canonical_bytes!(
    Address,
    PublicKey,
    Signature,
    TxHash,
    BlockHash,
    StateCommitment
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_big_endian() {
        let mut enc = Encoder::new();
        enc.u32(1).u64(0x0102);
        assert_eq!(enc.finish(), vec![0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 2]);
    }

    #[test]
    fn truncated_and_trailing_input_rejected() {
        assert_eq!(
            u64::from_canonical_bytes(&[0, 1]),
            Err(CodecError::Truncated { needed: 6 })
        );
        assert_eq!(
            u64::from_canonical_bytes(&[0; 9]),
            Err(CodecError::Trailing(1))
        );
        assert!(matches!(
            Option::<u64>::from_canonical_bytes(&[2]),
            Err(CodecError::InvalidTag { .. })
        ));
    }

    #[test]
    fn bool_rejects_non_binary() {
        let mut dec = Decoder::new(&[2]);
        assert!(dec.bool().is_err());
    }

    #[test]
    fn absurd_sequence_length_is_truncation() {
        let mut dec = Decoder::new(&[0xff, 0xff, 0xff, 0xff, 0]);
        assert!(matches!(
            dec.seq::<u64>(),
            Err(CodecError::Truncated { .. })
        ));
    }
}
