//! Scheme A: forward-private index with per-node search-token chains.
//!
//! Every tree node keyword keeps a chain of search tokens in the trapdoor
//! permutation's domain. Each update to a node steps its chain once via the
//! secret inverse direction and stores the posting under
//! `H1(K_node, ST_new)`; a search hands the server the newest token of the
//! chain, which the server replays forward with the public key, deriving
//! every older update token as it goes. The server can never step a chain
//! backward, so tokens of future updates are unlinkable to anything it has
//! already seen.
//!
//! When the tree's capacity doubles, the new root must answer for the whole
//! old tree. The new root starts a fresh chain under its own key and
//! records the old root's chain (and whatever that one had inherited) as
//! *inherited segments*, each replayed under its original key at search
//! time. Counter numbering continues across the inheritance boundary, so
//! the segments of one node form one descending counter line. The old root
//! keeps advancing its own chain for updates in the left half.

use crate::crypto::tdp::{self, SearchToken, TdpKeypair, TdpPublicKey};
use crate::crypto::{h1, h2, prf_eval, xor_id, PrfContext, PrfKey, UpdateToken, TOKEN_LEN};
use crate::store::EncryptedIndex;
use crate::tree::{self, NodeLabel, TreeGeometry};
use crate::{DocId, Error, Result, Scheme, DOC_ID_LEN};
use rand::RngCore;
use std::collections::BTreeMap;

/// A contiguous slice of one node keyword's token chain, ending at
/// `to_counter` (inclusive, `from_counter >= to_counter`). `head` is the
/// token at `from_counter`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSegment {
    pub key_label: NodeLabel,
    pub head: SearchToken,
    pub from_counter: u64,
    pub to_counter: u64,
}

/// One segment of a search request, carrying the 32-byte hash key of its
/// originating label so the server can derive update tokens and pads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestSegment {
    pub key: [u8; TOKEN_LEN],
    pub head: SearchToken,
    pub from_counter: u64,
    pub to_counter: u64,
}

/// Search request for a single cover node: its own segment first, then any
/// inherited segments, newest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchRequestA {
    pub segments: Vec<RequestSegment>,
}

/// One update posting: a fresh 32-byte map key and the masked document id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateMessageA {
    pub token: UpdateToken,
    pub masked_id: [u8; DOC_ID_LEN],
}

/// Per-node chain state.
///
/// `emitted == 0` means the sampled head token is staged but has never been
/// used for a posting (a root created by growth before its first update).
/// The first emission gets counter `base_counter`, which sits just above
/// the highest inherited counter so all segments of the node share one
/// counter line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct NodeChain {
    pub(crate) head: SearchToken,
    pub(crate) base_counter: u64,
    pub(crate) emitted: u64,
    pub(crate) inherited: Vec<ChainSegment>,
}

impl NodeChain {
    fn own_segment(&self, label: NodeLabel) -> Option<ChainSegment> {
        (self.emitted > 0).then(|| ChainSegment {
            key_label: label,
            head: self.head.clone(),
            from_counter: self.base_counter + self.emitted - 1,
            to_counter: self.base_counter,
        })
    }

    /// Full segment view: own slice plus inherited, descending counters.
    fn view(&self, label: NodeLabel) -> Vec<ChainSegment> {
        let mut segments = Vec::with_capacity(1 + self.inherited.len());
        segments.extend(self.own_segment(label));
        segments.extend(self.inherited.iter().cloned());
        segments
    }
}

/// Client state: all secrets, the tree geometry, and the chain table.
pub struct ClientStateA {
    prf_key: PrfKey,
    tdp: TdpKeypair,
    geo: TreeGeometry,
    chains: BTreeMap<u64, NodeChain>,
}

/// Fresh client state plus the matching empty server index.
pub fn setup_a(modulus_bits: usize, rng: &mut impl RngCore) -> (ClientStateA, EncryptedIndex) {
    let client = ClientStateA::generate(modulus_bits, rng);
    let index = EncryptedIndex::new_a(&client.tdp.public);
    (client, index)
}

impl ClientStateA {
    pub fn generate(modulus_bits: usize, rng: &mut impl RngCore) -> Self {
        Self::with_keys(PrfKey::generate(rng), tdp::keygen(modulus_bits, rng))
    }

    /// Builds a fresh client around externally managed keys.
    pub fn with_keys(prf_key: PrfKey, tdp: TdpKeypair) -> Self {
        ClientStateA { prf_key, tdp, geo: TreeGeometry::empty(), chains: BTreeMap::new() }
    }

    pub fn geometry(&self) -> TreeGeometry {
        self.geo
    }

    pub fn value_count(&self) -> u64 {
        self.geo.value_count()
    }

    pub fn tdp_public(&self) -> &TdpPublicKey {
        &self.tdp.public
    }

    /// Number of node chain entries held client-side (bounded by 2C - 1).
    pub fn chain_entry_count(&self) -> u64 {
        self.chains.len() as u64
    }

    /// Appends the next value to the tree without posting any document.
    /// On a capacity doubling the new root stages a fresh chain head and
    /// inherits the old root's full segment view.
    fn grow_step(&mut self, rng: &mut impl RngCore) -> Result<()> {
        let plan = tree::grow(&self.geo, self.geo.value_count())?;
        for doubling in &plan.doublings {
            let inherited = self
                .chains
                .get(&doubling.old_root.0)
                .map(|chain| chain.view(doubling.old_root))
                .unwrap_or_default();
            let base_counter = inherited.first().map(|s| s.from_counter + 1).unwrap_or(0);
            let staged = NodeChain {
                head: tdp::sample(&self.tdp.public, rng),
                base_counter,
                emitted: 0,
                inherited,
            };
            let displaced = self.chains.insert(doubling.new_root.0, staged);
            debug_assert!(displaced.is_none(), "a root label can only be created once");
        }
        self.geo = TreeGeometry::with_values(plan.new_value_count);
        Ok(())
    }

    /// Grows the tree until value `v` exists (exclusive of `v` itself).
    pub fn extend_to(&mut self, v: u64, rng: &mut impl RngCore) -> Result<()> {
        while self.geo.value_count() < v {
            self.grow_step(rng)?;
        }
        Ok(())
    }

    /// Adds `(v, ind)`. Requires `v <= m`; `v == m` grows the tree first.
    /// Emits one posting per node on the leaf-to-root path, labelled with
    /// the node it belongs to (the label is client-side metadata and never
    /// crosses the wire).
    pub fn update(
        &mut self,
        v: u64,
        ind: &DocId,
        rng: &mut impl RngCore,
    ) -> Result<Vec<(NodeLabel, UpdateMessageA)>> {
        let m = self.geo.value_count();
        if v > m {
            return Err(Error::ValueAhead { value: v, next: m });
        }
        if v == m {
            self.grow_step(rng)?;
        }
        let capacity = self.geo.capacity();
        let path = tree::path_to_root(v, capacity)?;
        let mut messages = Vec::with_capacity(path.len());
        for label in path {
            let key = prf_eval(&self.prf_key, PrfContext::KeyDerive, label);
            let chain = self.chains.entry(label.0).or_insert_with(|| NodeChain {
                head: tdp::sample(&self.tdp.public, rng),
                base_counter: 0,
                emitted: 0,
                inherited: Vec::new(),
            });
            if chain.emitted > 0 {
                chain.head = tdp::inverse(&self.tdp, &chain.head)?;
            }
            chain.emitted += 1;
            let st = chain.head.clone();
            messages.push((
                label,
                UpdateMessageA {
                    token: h1(&key, &st),
                    masked_id: xor_id(ind.as_bytes(), &h2(&key, &st)),
                },
            ));
        }
        Ok(messages)
    }

    /// Like [`update`](Self::update) but accepts `v > m` by appending
    /// filler values until the tree reaches `v`.
    pub fn update_at(
        &mut self,
        v: u64,
        ind: &DocId,
        rng: &mut impl RngCore,
    ) -> Result<Vec<(NodeLabel, UpdateMessageA)>> {
        self.extend_to(v, rng)?;
        self.update(v, ind, rng)
    }

    /// Builds one request per cover node that has any chain state. An empty
    /// database, or a range entirely past the data, yields no requests.
    pub fn search(&self, a: u64, b: u64) -> Result<Vec<(NodeLabel, SearchRequestA)>> {
        if a > b {
            return Err(Error::InvalidRange { a, b });
        }
        let m = self.geo.value_count();
        if m == 0 || a >= m {
            return Ok(Vec::new());
        }
        let b = b.min(m - 1);
        let cover = tree::minimal_cover(a, b, &self.geo)?;
        let mut requests = Vec::new();
        for label in cover {
            let Some(chain) = self.chains.get(&label.0) else { continue };
            let segments = chain.view(label);
            if segments.is_empty() {
                continue;
            }
            requests.push((
                label,
                SearchRequestA {
                    segments: segments
                        .into_iter()
                        .map(|seg| RequestSegment {
                            key: prf_eval(&self.prf_key, PrfContext::KeyDerive, seg.key_label),
                            head: seg.head,
                            from_counter: seg.from_counter,
                            to_counter: seg.to_counter,
                        })
                        .collect(),
                },
            ));
        }
        Ok(requests)
    }

    /// Deduplicates server results, newest first.
    pub fn collect_results(&self, results: &[SearchResultsA]) -> Vec<DocId> {
        let mut seen = std::collections::HashSet::new();
        let mut ids = Vec::new();
        for res in results {
            for id in &res.ids {
                if seen.insert(*id) {
                    ids.push(*id);
                }
            }
        }
        ids
    }

    pub(crate) fn parts(
        &self,
    ) -> (&PrfKey, &TdpKeypair, &TreeGeometry, &BTreeMap<u64, NodeChain>) {
        (&self.prf_key, &self.tdp, &self.geo, &self.chains)
    }

    pub(crate) fn from_parts(
        prf_key: PrfKey,
        tdp: TdpKeypair,
        geo: TreeGeometry,
        chains: BTreeMap<u64, NodeChain>,
    ) -> Self {
        ClientStateA { prf_key, tdp, geo, chains }
    }
}

/// Server-side result of one request: ids in chain order (newest first)
/// plus the count of derived tokens that had no entry in the store.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchResultsA {
    pub ids: Vec<DocId>,
    pub anomalies: u64,
}

pub fn check_update_a(index: &EncryptedIndex, msg: &UpdateMessageA) -> Result<()> {
    index.require_scheme(Scheme::A)?;
    if index.get(&msg.token).is_some() {
        return Err(Error::DuplicateUpdateToken);
    }
    Ok(())
}

/// Stores one posting. A repeated token means a broken client and is
/// rejected.
pub fn server_update_a(index: &mut EncryptedIndex, msg: &UpdateMessageA) -> Result<()> {
    check_update_a(index, msg)?;
    index.insert_unchecked(msg.token, msg.masked_id.to_vec());
    Ok(())
}

/// Replays every segment of the request forward, unmasking postings as
/// they are found. Missing entries are counted, not fatal.
pub fn server_search_a(index: &EncryptedIndex, req: &SearchRequestA) -> Result<SearchResultsA> {
    index.require_scheme(Scheme::A)?;
    let tpk = index.tdp_public()?;
    let mut out = SearchResultsA::default();
    for seg in &req.segments {
        if seg.from_counter < seg.to_counter {
            return Err(Error::Protocol("segment counters out of order".into()));
        }
        if seg.head.width() != tpk.token_width() {
            return Err(Error::TokenWidth {
                expected: tpk.token_width(),
                got: seg.head.width(),
            });
        }
        let mut st = seg.head.clone();
        let mut counter = seg.from_counter;
        loop {
            let token = h1(&seg.key, &st);
            match index.get(&token) {
                Some(payload) => {
                    let mut masked = [0u8; DOC_ID_LEN];
                    masked.copy_from_slice(payload);
                    out.ids.push(DocId(xor_id(&masked, &h2(&seg.key, &st))));
                }
                None => out.anomalies += 1,
            }
            if counter == seg.to_counter {
                break;
            }
            st = tdp::forward(&tpk, &st)?;
            counter -= 1;
        }
    }
    Ok(out)
}
