//! Encrypted range-query index toolkit.
//!
//! Two client/server index constructions over a shared binary range tree:
//!
//! * **Scheme A** — forward-private. Each tree node keeps a chain of search
//!   tokens advanced by a trapdoor permutation inverse on every update; the
//!   server can only replay the chain forward once handed the newest token,
//!   so update tokens are unlinkable to anything it has seen before.
//! * **Scheme B** — backward-private. Each tree node has one fixed update
//!   token and a single Paillier ciphertext accumulating a bit-string of
//!   document slots; adds and deletes are both homomorphic additions and
//!   are indistinguishable on the wire.
//!
//! Range queries are answered by covering the requested interval with the
//! minimal set of tree nodes ([`tree::minimal_cover`]) and querying each
//! cover node as a keyword.
//!
//! The crate also ships the framed TCP protocol and durable store used by
//! the `rdsse serve` daemon ([`wire`], [`store`], [`server`]), a transcript
//! recorder with leakage-pattern analysis ([`transcript`]), and a seeded
//! workload driver that checks the whole pipeline against a plaintext
//! oracle ([`workload`]).

pub mod bitstring;
pub mod crypto;
pub mod error;
pub mod keystore;
pub mod scheme_a;
pub mod scheme_b;
pub mod server;
pub mod shadow;
pub mod store;
pub mod transcript;
pub mod tree;
pub mod wire;
pub mod workload;

pub use error::{Error, Result};

/// Fixed width of a document identifier, in bytes.
pub const DOC_ID_LEN: usize = 16;

/// A fixed-width document identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocId(pub [u8; DOC_ID_LEN]);

impl DocId {
    /// Builds an id from arbitrary bytes, zero-padding on the right.
    /// Errors if the input is longer than [`DOC_ID_LEN`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() > DOC_ID_LEN {
            return Err(Error::DocIdTooLong(bytes.len()));
        }
        let mut id = [0u8; DOC_ID_LEN];
        id[..bytes.len()].copy_from_slice(bytes);
        Ok(DocId(id))
    }

    pub fn as_bytes(&self) -> &[u8; DOC_ID_LEN] {
        &self.0
    }

    /// Renders a printable form: the UTF-8 content up to trailing NULs if
    /// it is clean text, hex otherwise.
    pub fn display(&self) -> String {
        let trimmed: &[u8] = {
            let end = self.0.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
            &self.0[..end]
        };
        match std::str::from_utf8(trimmed) {
            Ok(s) if !s.is_empty() && s.chars().all(|c| !c.is_control()) => s.to_owned(),
            _ => format!("0x{}", hex::encode(self.0)),
        }
    }
}

impl std::fmt::Debug for DocId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DocId({})", self.display())
    }
}

/// Update operation kind. Scheme A supports `Add` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOp {
    Add,
    Del,
}

/// Which construction a store or keystore belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    A,
    B,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::A => "a",
            Scheme::B => "b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Scheme::A),
            "b" | "B" => Ok(Scheme::B),
            other => Err(Error::Protocol(format!("unknown scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_id_padding_and_display() {
        let id = DocId::from_bytes(b"sydney").unwrap();
        assert_eq!(&id.0[..6], b"sydney");
        assert_eq!(id.0[6..], [0u8; 10]);
        assert_eq!(id.display(), "sydney");
        assert!(DocId::from_bytes(&[0u8; 17]).is_err());
    }

    #[test]
    fn doc_id_binary_displays_as_hex() {
        let id = DocId([0xff; 16]);
        assert!(id.display().starts_with("0x"));
    }
}
