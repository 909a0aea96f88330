//! Cryptographic primitives: the PRF, the keyed hash oracles, the trapdoor
//! permutation, and the Paillier cryptosystem.
//!
//! All keyed evaluation goes through HMAC-SHA256 with one-byte domain tags
//! so the two hash oracles and the two PRF use sites can never collide on
//! identical inputs.

pub mod paillier;
pub mod primes;
pub mod tdp;

use crate::tree::NodeLabel;
use crate::DOC_ID_LEN;
use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

/// Output width of the PRF and of the H1 oracle.
pub const TOKEN_LEN: usize = 32;

/// Domain separation tags. H1/H2 take 0x01/0x02; the PRF use sites get
/// their own bytes so a PRF output can never equal a hash-oracle output on
/// the same key material.
const TAG_H1: u8 = 0x01;
const TAG_H2: u8 = 0x02;
const TAG_PRF_KEY_DERIVE: u8 = 0x03;
const TAG_PRF_UPDATE_TOKEN: u8 = 0x04;

/// Where a PRF evaluation is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrfContext {
    /// Scheme A: deriving the per-node hash key `K_n`.
    KeyDerive,
    /// Scheme B: deriving the fixed per-node update token.
    UpdateToken,
}

impl PrfContext {
    fn tag(self) -> u8 {
        match self {
            PrfContext::KeyDerive => TAG_PRF_KEY_DERIVE,
            PrfContext::UpdateToken => TAG_PRF_UPDATE_TOKEN,
        }
    }
}

/// Client PRF key. Never leaves the client; keystore serialization is the
/// only place it is written out.
#[derive(Clone, PartialEq, Eq)]
pub struct PrfKey([u8; TOKEN_LEN]);

impl PrfKey {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut key = [0u8; TOKEN_LEN];
        rng.fill_bytes(&mut key);
        PrfKey(key)
    }

    pub fn from_bytes(bytes: [u8; TOKEN_LEN]) -> Self {
        PrfKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrfKey(..)")
    }
}

/// A 32-byte update token: the key under which the server stores a posting
/// (scheme A) or a node accumulator (scheme B).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UpdateToken(pub [u8; TOKEN_LEN]);

impl UpdateToken {
    pub fn as_bytes(&self) -> &[u8; TOKEN_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for UpdateToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "UpdateToken({})", hex::encode(&self.0[..6]))
    }
}

fn hmac_tagged(key: &[u8], tag: u8, message: &[u8]) -> [u8; TOKEN_LEN] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(&[tag]);
    mac.update(message);
    let out = mac.finalize().into_bytes();
    let mut bytes = [0u8; TOKEN_LEN];
    bytes.copy_from_slice(&out);
    bytes
}

/// `F_K(n)`: deterministic, context-separated PRF over node labels.
pub fn prf_eval(key: &PrfKey, ctx: PrfContext, label: NodeLabel) -> [u8; TOKEN_LEN] {
    hmac_tagged(&key.0, ctx.tag(), &label.0.to_be_bytes())
}

/// `H1(K_n, ST)`: derives the update token for one chain position.
pub fn h1(k_n: &[u8; TOKEN_LEN], st: &tdp::SearchToken) -> UpdateToken {
    UpdateToken(hmac_tagged(k_n, TAG_H1, st.as_bytes()))
}

/// `H2(K_n, ST)`: derives the pad that masks a document id.
pub fn h2(k_n: &[u8; TOKEN_LEN], st: &tdp::SearchToken) -> [u8; DOC_ID_LEN] {
    let full = hmac_tagged(k_n, TAG_H2, st.as_bytes());
    let mut pad = [0u8; DOC_ID_LEN];
    pad.copy_from_slice(&full[..DOC_ID_LEN]);
    pad
}

pub fn xor_id(id: &[u8; DOC_ID_LEN], pad: &[u8; DOC_ID_LEN]) -> [u8; DOC_ID_LEN] {
    let mut out = [0u8; DOC_ID_LEN];
    for (o, (a, b)) in out.iter_mut().zip(id.iter().zip(pad.iter())) {
        *o = a ^ b;
    }
    out
}
