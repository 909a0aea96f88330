//! Scheme B: backward-private index with homomorphic bit-string
//! accumulators.
//!
//! Every tree node keyword has one *fixed* update token `F_K(label)` and a
//! single Paillier ciphertext on the server accumulating the node's
//! document set as a bit string. Adds and deletes are both homomorphic
//! additions of a freshly encrypted mask, so the two operations are
//! indistinguishable on the wire and a search returns at most one
//! ciphertext per cover node. Deleted documents vanish arithmetically:
//! once the complement mask lands, no decryption of any later state
//! contains the slot.
//!
//! On a capacity doubling the old root's ciphertext is copied to the new
//! root's token with an explicit client-to-server copy message, after
//! which both roots accumulate independently (every path through the old
//! half now ends at both).
//!
//! Client cryptographic state is constant-size: keys only, no per-node
//! tokens. The client does keep a slot directory mapping live documents to
//! mask bit positions; slots are recycled through a free list once their
//! deletion has cancelled everywhere.

use crate::bitstring::{self, slot_capacity};
use crate::crypto::paillier::{self, Ciphertext, PaillierKeypair, PaillierPublicKey};
use crate::crypto::{prf_eval, PrfContext, PrfKey, UpdateToken};
use crate::store::EncryptedIndex;
use crate::tree::{self, TreeGeometry};
use crate::{DocId, Error, Result, Scheme, UpdateOp};
use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;
use std::collections::{BTreeMap, BTreeSet};

/// One accumulator update: the node's fixed token plus an independently
/// randomized encryption of the mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateMessageB {
    pub token: UpdateToken,
    pub ciphertext: Ciphertext,
}

/// Root migration during a capacity doubling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopyMessage {
    pub src: UpdateToken,
    pub dst: UpdateToken,
}

/// Everything one update emits: copies first (root migration), then one
/// labelled message per path node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateBatchB {
    pub copies: Vec<(tree::NodeLabel, CopyMessage)>,
    pub updates: Vec<(tree::NodeLabel, UpdateMessageB)>,
}

/// Client-side assignment of a live document to a mask slot and a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotAssignment {
    pub slot: u32,
    pub value: u64,
}

/// Bidirectional map between live documents and mask slots, with free-list
/// reuse. A slot is recycled only after its deletion mask has been issued,
/// at which point it is clear at every node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotDirectory {
    by_id: BTreeMap<DocId, SlotAssignment>,
    by_slot: BTreeMap<u32, DocId>,
    free: Vec<u32>,
    next_slot: u32,
}

impl SlotDirectory {
    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn assignment(&self, ind: &DocId) -> Option<SlotAssignment> {
        self.by_id.get(ind).copied()
    }

    pub fn doc_at_slot(&self, slot: u32) -> Option<&DocId> {
        self.by_slot.get(&slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DocId, &SlotAssignment)> {
        self.by_id.iter()
    }

    fn check_assign(&self, ind: &DocId, capacity: u32) -> Result<()> {
        if self.by_id.contains_key(ind) {
            return Err(Error::DocAlreadyPresent);
        }
        if self.free.is_empty() && self.next_slot >= capacity {
            return Err(Error::CapacityExhausted { slots: capacity });
        }
        Ok(())
    }

    fn assign(&mut self, ind: DocId, value: u64, capacity: u32) -> Result<u32> {
        self.check_assign(&ind, capacity)?;
        let slot = self.free.pop().unwrap_or_else(|| {
            let s = self.next_slot;
            self.next_slot += 1;
            s
        });
        self.by_id.insert(ind, SlotAssignment { slot, value });
        self.by_slot.insert(slot, ind);
        Ok(slot)
    }

    fn check_release(&self, ind: &DocId, value: u64) -> Result<()> {
        match self.by_id.get(ind) {
            Some(entry) if entry.value == value => Ok(()),
            _ => Err(Error::DocNotPresent { value }),
        }
    }

    fn release(&mut self, ind: &DocId, value: u64) -> Result<u32> {
        self.check_release(ind, value)?;
        let entry = self.by_id.remove(ind).expect("checked");
        self.by_slot.remove(&entry.slot);
        self.free.push(entry.slot);
        Ok(entry.slot)
    }

    /// Replay variants for transcript analysis: same allocation policy,
    /// no capacity ceiling.
    pub(crate) fn replay_assign(&mut self, ind: DocId, value: u64) -> crate::Result<u32> {
        self.assign(ind, value, u32::MAX)
    }

    pub(crate) fn replay_release(&mut self, ind: &DocId, value: u64) -> crate::Result<u32> {
        self.release(ind, value)
    }

    pub(crate) fn from_parts(
        entries: Vec<(DocId, SlotAssignment)>,
        free: Vec<u32>,
        next_slot: u32,
    ) -> Self {
        let by_slot = entries.iter().map(|(id, a)| (a.slot, *id)).collect();
        SlotDirectory { by_id: entries.into_iter().collect(), by_slot, free, next_slot }
    }

    pub(crate) fn parts(&self) -> (Vec<(DocId, SlotAssignment)>, &[u32], u32) {
        (self.by_id.iter().map(|(id, a)| (*id, *a)).collect(), &self.free, self.next_slot)
    }
}

/// Client state: keys, geometry, mask width, and the slot directory.
pub struct ClientStateB {
    prf_key: PrfKey,
    paillier: PaillierKeypair,
    geo: TreeGeometry,
    mask_width: u32,
    directory: SlotDirectory,
}

/// Fresh client state plus the matching empty server index. Fails if the
/// mask width does not fit under the Paillier modulus.
pub fn setup_b(
    modulus_bits: usize,
    mask_width: u32,
    rng: &mut impl RngCore,
) -> Result<(ClientStateB, EncryptedIndex)> {
    let client = ClientStateB::generate(modulus_bits, mask_width, rng)?;
    let index = EncryptedIndex::new_b(&client.paillier.public, mask_width);
    Ok((client, index))
}

impl ClientStateB {
    pub fn generate(
        modulus_bits: usize,
        mask_width: u32,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        let paillier = paillier::keygen(modulus_bits, rng);
        Self::with_keys(PrfKey::generate(rng), paillier, mask_width)
    }

    /// Builds a fresh client around externally managed keys.
    pub fn with_keys(
        prf_key: PrfKey,
        paillier: PaillierKeypair,
        mask_width: u32,
    ) -> Result<Self> {
        Self::from_keys(prf_key, paillier, TreeGeometry::empty(), mask_width, SlotDirectory::default())
    }

    pub(crate) fn from_keys(
        prf_key: PrfKey,
        paillier: PaillierKeypair,
        geo: TreeGeometry,
        mask_width: u32,
        directory: SlotDirectory,
    ) -> Result<Self> {
        if (BigUint::one() << mask_width) >= *paillier.public.modulus() {
            return Err(Error::MaskWidthTooLarge { width: mask_width });
        }
        Ok(ClientStateB { prf_key, paillier, geo, mask_width, directory })
    }

    pub fn geometry(&self) -> TreeGeometry {
        self.geo
    }

    pub fn value_count(&self) -> u64 {
        self.geo.value_count()
    }

    pub fn mask_width(&self) -> u32 {
        self.mask_width
    }

    /// Most documents that can be live at once.
    pub fn max_documents(&self) -> u32 {
        slot_capacity(self.mask_width)
    }

    pub fn live_documents(&self) -> usize {
        self.directory.len()
    }

    pub fn directory(&self) -> &SlotDirectory {
        &self.directory
    }

    pub fn paillier_public(&self) -> &PaillierPublicKey {
        &self.paillier.public
    }

    pub fn paillier(&self) -> &PaillierKeypair {
        &self.paillier
    }

    /// Delete headroom of a single accumulator under this configuration.
    pub fn max_safe_updates(&self) -> BigUint {
        bitstring::max_safe_updates(self.mask_width, self.paillier.public.modulus())
            .expect("checked at construction")
    }

    /// Serialized size of the client's cryptographic state (PRF key plus
    /// Paillier key material). Constant for the life of a client: there is
    /// no per-node token state to grow.
    pub fn crypto_state_bytes(&self) -> usize {
        let (beta, mu) = self.paillier.secret.parts();
        crate::crypto::TOKEN_LEN
            + self.paillier.public.modulus().to_bytes_be().len()
            + beta.to_bytes_be().len()
            + mu.to_bytes_be().len()
    }

    pub fn node_token(&self, label: tree::NodeLabel) -> UpdateToken {
        UpdateToken(prf_eval(&self.prf_key, PrfContext::UpdateToken, label))
    }

    fn grow_step(&mut self) -> Result<Vec<(tree::NodeLabel, CopyMessage)>> {
        let plan = tree::grow(&self.geo, self.geo.value_count())?;
        let copies = plan
            .doublings
            .iter()
            .map(|d| {
                (
                    d.new_root,
                    CopyMessage {
                        src: self.node_token(d.old_root),
                        dst: self.node_token(d.new_root),
                    },
                )
            })
            .collect();
        self.geo = TreeGeometry::with_values(plan.new_value_count);
        Ok(copies)
    }

    /// Grows the tree until value `v` exists, emitting any root copies the
    /// doublings require (labelled with the new root). The copies must
    /// reach the server before later updates.
    pub fn extend_to(&mut self, v: u64) -> Result<Vec<(tree::NodeLabel, CopyMessage)>> {
        let mut copies = Vec::new();
        while self.geo.value_count() < v {
            copies.extend(self.grow_step()?);
        }
        Ok(copies)
    }

    /// Adds or deletes `(v, ind)`. Requires `v <= m`; `v == m` grows the
    /// tree first. Returns one update message per path node plus any copy
    /// messages from a doubling; copies precede updates on the wire. Node
    /// labels are client-side metadata and never cross the wire.
    pub fn update(
        &mut self,
        op: UpdateOp,
        v: u64,
        ind: &DocId,
        rng: &mut impl RngCore,
    ) -> Result<UpdateBatchB> {
        let m = self.geo.value_count();
        if v > m {
            return Err(Error::ValueAhead { value: v, next: m });
        }
        // Validate the directory move before any state changes so a
        // rejected update cannot leave half-applied growth behind.
        match op {
            UpdateOp::Add => self.directory.check_assign(ind, self.max_documents())?,
            UpdateOp::Del => self.directory.check_release(ind, v)?,
        }
        let copies = if v == m { self.grow_step()? } else { Vec::new() };
        let slot = match op {
            UpdateOp::Add => self.directory.assign(*ind, v, self.max_documents())?,
            UpdateOp::Del => self.directory.release(ind, v)?,
        };
        let mask = match op {
            UpdateOp::Add => bitstring::encode_add(slot, self.mask_width)?,
            UpdateOp::Del => bitstring::encode_del(slot, self.mask_width)?,
        };
        let path = tree::path_to_root(v, self.geo.capacity())?;
        let mut updates = Vec::with_capacity(path.len());
        for label in path {
            updates.push((
                label,
                UpdateMessageB {
                    token: self.node_token(label),
                    ciphertext: paillier::enc(&self.paillier.public, mask.value(), rng)?,
                },
            ));
        }
        Ok(UpdateBatchB { copies, updates })
    }

    /// Like [`update`](Self::update) but accepts `v > m` for adds by
    /// appending filler values until the tree reaches `v`.
    pub fn update_at(
        &mut self,
        op: UpdateOp,
        v: u64,
        ind: &DocId,
        rng: &mut impl RngCore,
    ) -> Result<UpdateBatchB> {
        let mut copies = Vec::new();
        if v > self.geo.value_count() {
            if op == UpdateOp::Del {
                return Err(Error::DocNotPresent { value: v });
            }
            copies = self.extend_to(v)?;
        }
        let mut batch = self.update(op, v, ind, rng)?;
        copies.extend(batch.copies);
        batch.copies = copies;
        Ok(batch)
    }

    /// One fixed token per cover node. The cover is geometric: nodes that
    /// were never updated still get a token, and the server's absent reply
    /// is itself part of the observable surface.
    pub fn search(&self, a: u64, b: u64) -> Result<Vec<(tree::NodeLabel, UpdateToken)>> {
        if a > b {
            return Err(Error::InvalidRange { a, b });
        }
        let m = self.geo.value_count();
        if m == 0 || a >= m {
            return Ok(Vec::new());
        }
        let cover = tree::minimal_cover(a, b.min(m - 1), &self.geo)?;
        Ok(cover
            .into_iter()
            .map(|label| (label, self.node_token(label)))
            .collect())
    }

    /// Decrypts and decodes server replies, mapping slots to documents
    /// through the directory. Cover disjointness makes per-node sets
    /// disjoint, but the union is a set regardless.
    pub fn decode_results(&self, ciphertexts: &[Ciphertext]) -> Result<BTreeSet<DocId>> {
        let mut out = BTreeSet::new();
        for ct in ciphertexts {
            let plain = paillier::dec(&self.paillier.public, &self.paillier.secret, ct)?;
            for slot in bitstring::decode(&plain, self.mask_width) {
                if let Some(ind) = self.directory.doc_at_slot(slot) {
                    out.insert(*ind);
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn parts(
        &self,
    ) -> (&PrfKey, &PaillierKeypair, &TreeGeometry, u32, &SlotDirectory) {
        (&self.prf_key, &self.paillier, &self.geo, self.mask_width, &self.directory)
    }
}

pub fn check_update_b(index: &EncryptedIndex, msg: &UpdateMessageB) -> Result<()> {
    index.require_scheme(Scheme::B)?;
    let (pk, _) = index.paillier_public()?;
    if !msg.ciphertext.in_range(&pk) {
        return Err(Error::MalformedCiphertext);
    }
    Ok(())
}

/// Folds one encrypted mask into the node's accumulator, creating it on
/// first touch.
pub fn server_update_b(index: &mut EncryptedIndex, msg: &UpdateMessageB) -> Result<()> {
    check_update_b(index, msg)?;
    let (pk, _) = index.paillier_public()?;
    let payload = match index.get(&msg.token) {
        Some(existing) => {
            let acc = Ciphertext::from_bytes(existing, &pk)?;
            paillier::add(&pk, &acc, &msg.ciphertext)?.to_fixed_bytes(&pk)
        }
        None => msg.ciphertext.to_fixed_bytes(&pk),
    };
    index.put_unchecked(msg.token, payload);
    Ok(())
}

pub fn check_copy_b(index: &EncryptedIndex, msg: &CopyMessage) -> Result<()> {
    index.require_scheme(Scheme::B)?;
    if index.get(&msg.dst).is_some() {
        return Err(Error::CopyDestinationExists);
    }
    Ok(())
}

/// Root migration: bitwise-copies the source accumulator to the
/// destination token. Absent source (an empty old tree) is a no-op;
/// an existing destination is a contract violation.
pub fn server_copy_b(index: &mut EncryptedIndex, msg: &CopyMessage) -> Result<()> {
    check_copy_b(index, msg)?;
    if let Some(payload) = index.get(&msg.src).cloned() {
        index.put_unchecked(msg.dst, payload);
    }
    Ok(())
}

/// At most one ciphertext per token; absent nodes yield nothing.
pub fn server_search_b(index: &EncryptedIndex, token: &UpdateToken) -> Result<Option<Ciphertext>> {
    index.require_scheme(Scheme::B)?;
    let (pk, _) = index.paillier_public()?;
    index.get(token).map(|bytes| Ciphertext::from_bytes(bytes, &pk)).transpose()
}
