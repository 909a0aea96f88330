//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Tree arithmetic.
    #[error("node label {label} out of range for capacity {capacity}")]
    LabelOutOfRange { label: u64, capacity: u64 },
    #[error("value {value} out of range for capacity {capacity}")]
    ValueOutOfRange { value: u64, capacity: u64 },
    #[error("operation on an empty tree")]
    EmptyTree,
    #[error("invalid range [{a}, {b}]")]
    InvalidRange { a: u64, b: u64 },
    #[error("grow expects the next value {expected}, got {got}")]
    NonAppendGrow { expected: u64, got: u64 },

    // Crypto.
    #[error("element is not in the permutation domain")]
    NotInDomain,
    #[error("plaintext out of range for the public modulus")]
    PlaintextOutOfRange,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("token has wrong width: expected {expected} bytes, got {got}")]
    TokenWidth { expected: usize, got: usize },

    // Bit-string codec.
    #[error("document slot {slot} out of capacity for mask width {width}")]
    SlotOutOfRange { slot: u32, width: u32 },
    #[error("mask width {width} does not fit below the plaintext modulus")]
    MaskWidthTooLarge { width: u32 },

    // Scheme contracts.
    #[error("document already present")]
    DocAlreadyPresent,
    #[error("document not present at value {value}")]
    DocNotPresent { value: u64 },
    #[error("document capacity exhausted ({slots} slots)")]
    CapacityExhausted { slots: u32 },
    #[error("value {value} not yet in the tree (next appendable value is {next})")]
    ValueAhead { value: u64, next: u64 },
    #[error("duplicate update token")]
    DuplicateUpdateToken,
    #[error("copy destination already present")]
    CopyDestinationExists,
    #[error("unsupported by construction A: {0}")]
    UnsupportedByA(&'static str),
    #[error("document id longer than {max} bytes: {0}", max = crate::DOC_ID_LEN)]
    DocIdTooLong(usize),

    // Store, wire, files.
    #[error("scheme mismatch: store holds scheme {store}, request targets scheme {request}")]
    SchemeMismatch { store: crate::Scheme, request: crate::Scheme },
    #[error("payload width mismatch: store expects {expected} bytes, got {got}")]
    PayloadWidth { expected: usize, got: usize },
    #[error("store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("keystore error: {0}")]
    Keystore(String),
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
