//! Transcript recording and leakage analysis.
//!
//! A transcript is the ordered record of every client-to-server message:
//! the exact wire bytes (the honest-but-curious server's view) plus
//! client-side ground truth (which node, which operation, which document)
//! used to evaluate what those bytes give away.
//!
//! Three pattern functions are computable over a transcript:
//!
//! * [`Transcript::sp`] — search pattern: when each node keyword was
//!   searched.
//! * [`Transcript::hist`] — update history: every update a node received.
//! * [`Transcript::cp`] — contain pattern: earlier searches whose result
//!   sets contained the current one, the inherited leakage of range covers
//!   once result identifiers are visible.
//!
//! The two audits check the *necessary* token-level conditions of the
//! schemes' privacy goals over real transcripts — freshness and structure
//! for scheme A updates, fixed tokens, format indistinguishability and
//! deleted-document absence for scheme B. They are necessary conditions,
//! not sufficiency proofs.

use crate::bitstring;
use crate::crypto::paillier;
use crate::crypto::tdp::{self, TdpPublicKey};
use crate::crypto::{h1, TOKEN_LEN};
use crate::scheme_b::{ClientStateB, SlotDirectory};
use crate::store::EncryptedIndex;
use crate::tree::NodeLabel;
use crate::wire::{self, Message};
use crate::{DocId, Error, Result, Scheme, UpdateOp, DOC_ID_LEN};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Search,
    Update,
    Copy,
}

/// One client-to-server message with ground truth attached.
///
/// `wire_bytes` is exactly the frame payload that was (or would be) sent;
/// the server-view projection of a transcript is these bytes and nothing
/// else. `keywords_touched` carries the per-update path length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEvent {
    pub t: u64,
    pub kind: EventKind,
    pub node: NodeLabel,
    pub op: Option<UpdateOp>,
    pub ind: Option<DocId>,
    pub wire_bytes: Vec<u8>,
    pub keywords_touched: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    events: Vec<TranscriptEvent>,
    next_t: u64,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    /// Allocates the timestamp for the next logical client operation; all
    /// messages of that operation share it.
    pub fn begin_op(&mut self) -> u64 {
        let t = self.next_t;
        self.next_t += 1;
        t
    }

    fn push(&mut self, event: TranscriptEvent) {
        debug_assert!(
            self.events.last().is_none_or(|last| event.t >= last.t),
            "timestamps must be monotone"
        );
        self.events.push(event);
    }

    pub fn record_search(&mut self, t: u64, node: NodeLabel, wire_bytes: Vec<u8>) {
        self.push(TranscriptEvent {
            t,
            kind: EventKind::Search,
            node,
            op: None,
            ind: None,
            wire_bytes,
            keywords_touched: 0,
        });
    }

    pub fn record_update(
        &mut self,
        t: u64,
        node: NodeLabel,
        op: UpdateOp,
        ind: DocId,
        wire_bytes: Vec<u8>,
        path_len: u32,
    ) {
        self.push(TranscriptEvent {
            t,
            kind: EventKind::Update,
            node,
            op: Some(op),
            ind: Some(ind),
            wire_bytes,
            keywords_touched: path_len,
        });
    }

    pub fn record_copy(&mut self, t: u64, dst_root: NodeLabel, wire_bytes: Vec<u8>) {
        self.push(TranscriptEvent {
            t,
            kind: EventKind::Copy,
            node: dst_root,
            op: None,
            ind: None,
            wire_bytes,
            keywords_touched: 0,
        });
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// What the server saw: wire bytes in arrival order, nothing else.
    pub fn server_view(&self) -> Vec<&[u8]> {
        self.events.iter().map(|e| e.wire_bytes.as_slice()).collect()
    }

    /// Search pattern: timestamps of every search whose cover included `n`.
    pub fn sp(&self, n: NodeLabel) -> BTreeSet<u64> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Search && e.node == n)
            .map(|e| e.t)
            .collect()
    }

    /// Update history of node `n`, chronological.
    pub fn hist(&self, n: NodeLabel) -> Vec<(u64, UpdateOp, DocId)> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Update && e.node == n)
            .map(|e| (e.t, e.op.expect("update has op"), e.ind.expect("update has ind")))
            .collect()
    }

    /// Ground-truth document set of node `n` just before time `t`.
    pub fn db_at(&self, n: NodeLabel, t: u64) -> BTreeSet<DocId> {
        let mut set = BTreeSet::new();
        for e in self.events.iter().filter(|e| e.kind == EventKind::Update && e.node == n) {
            if e.t >= t {
                break;
            }
            match e.op.expect("update has op") {
                UpdateOp::Add => {
                    set.insert(e.ind.expect("update has ind"));
                }
                UpdateOp::Del => {
                    set.remove(&e.ind.expect("update has ind"));
                }
            }
        }
        set
    }

    /// Contain pattern for the search on `n` at time `t`: timestamps of
    /// earlier searches on nodes whose document set (at their own search
    /// time) contained `n`'s set at `t`. `(t, n)` must be a search event.
    pub fn cp(&self, n: NodeLabel, t: u64) -> Result<BTreeSet<u64>> {
        let is_search = self
            .events
            .iter()
            .any(|e| e.kind == EventKind::Search && e.node == n && e.t == t);
        if !is_search {
            return Err(Error::Transcript(format!(
                "cp target ({t}, {}) is not a recorded search",
                n.0
            )));
        }
        let target = self.db_at(n, t);
        let mut out = BTreeSet::new();
        for e in self.events.iter().filter(|e| e.kind == EventKind::Search && e.t < t) {
            if out.contains(&e.t) {
                continue;
            }
            if target.is_subset(&self.db_at(e.node, e.t)) {
                out.insert(e.t);
            }
        }
        Ok(out)
    }

    /// The contain pattern as the honest-but-curious server can compute it
    /// for scheme A, where search replies reveal plaintext ids: replay the
    /// store from the update wire bytes, derive every search event's
    /// result set, and relate sets by inclusion. Under functional
    /// correctness this agrees with [`cp`](Self::cp) computed from client
    /// ground truth.
    pub fn cp_from_server_view_a(
        &self,
        tpk: &TdpPublicKey,
    ) -> Result<BTreeMap<(u64, NodeLabel), BTreeSet<u64>>> {
        let mut index = EncryptedIndex::new_a(tpk);
        let mut result_sets: Vec<(u64, NodeLabel, BTreeSet<DocId>)> = Vec::new();
        for event in &self.events {
            match event.kind {
                EventKind::Update => {
                    let Message::UpdateA(m) =
                        wire::decode_message(wire::MSG_UPDATE_A, &event.wire_bytes)?
                    else {
                        return Err(Error::Transcript("expected UPDATE_A".into()));
                    };
                    crate::scheme_a::server_update_a(&mut index, &m.to_update_a()?)?;
                }
                EventKind::Search => {
                    let Message::SearchA(m) =
                        wire::decode_message(wire::MSG_SEARCH_A, &event.wire_bytes)?
                    else {
                        return Err(Error::Transcript("expected SEARCH_A".into()));
                    };
                    let results =
                        crate::scheme_a::server_search_a(&index, &m.to_search_a()?)?;
                    result_sets.push((
                        event.t,
                        event.node,
                        results.ids.into_iter().collect(),
                    ));
                }
                EventKind::Copy => {
                    return Err(Error::Transcript("copy in a scheme-A transcript".into()))
                }
            }
        }
        let mut out = BTreeMap::new();
        for (i, (t, node, set)) in result_sets.iter().enumerate() {
            let mut contains = BTreeSet::new();
            for (prev_t, _, prev_set) in &result_sets[..i] {
                if prev_t < t && set.is_subset(prev_set) {
                    contains.insert(*prev_t);
                }
            }
            out.insert((*t, *node), contains);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(TRANSCRIPT_MAGIC)?;
        for event in &self.events {
            let record = encode_event(event);
            file.write_all(&(record.len() as u32).to_be_bytes())?;
            file.write_all(&record)?;
        }
        file.sync_data()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < TRANSCRIPT_MAGIC.len() || &buf[..TRANSCRIPT_MAGIC.len()] != TRANSCRIPT_MAGIC
        {
            return Err(Error::Transcript("bad transcript magic".into()));
        }
        let mut rest = &buf[TRANSCRIPT_MAGIC.len()..];
        let mut events = Vec::new();
        while !rest.is_empty() {
            if rest.len() < 4 {
                return Err(Error::Transcript("truncated record length".into()));
            }
            let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
            rest = &rest[4..];
            if rest.len() < len {
                return Err(Error::Transcript("truncated record".into()));
            }
            events.push(decode_event(&rest[..len])?);
            rest = &rest[len..];
        }
        let next_t = events.last().map(|e| e.t + 1).unwrap_or(0);
        Ok(Transcript { events, next_t })
    }

    /// Appends this transcript's events to a file, creating it if absent.
    /// Timestamps continue from whatever the file already holds.
    pub fn append_to_file(path: &Path, events: &[TranscriptEvent]) -> Result<()> {
        let mut existing = if path.exists() {
            Transcript::load(path)?
        } else {
            Transcript::new()
        };
        let offset = existing.next_t;
        for event in events {
            let mut shifted = event.clone();
            shifted.t += offset;
            existing.next_t = shifted.t + 1;
            existing.push(shifted);
        }
        existing.save(path)
    }
}

const TRANSCRIPT_MAGIC: &[u8; 8] = b"RDSSETR1";

fn encode_event(e: &TranscriptEvent) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + e.wire_bytes.len());
    out.extend_from_slice(&e.t.to_be_bytes());
    out.push(match e.kind {
        EventKind::Search => 0,
        EventKind::Update => 1,
        EventKind::Copy => 2,
    });
    out.extend_from_slice(&e.node.0.to_be_bytes());
    out.push(match e.op {
        None => 0,
        Some(UpdateOp::Add) => 1,
        Some(UpdateOp::Del) => 2,
    });
    match &e.ind {
        None => out.push(0),
        Some(id) => {
            out.push(1);
            out.extend_from_slice(id.as_bytes());
        }
    }
    out.extend_from_slice(&e.keywords_touched.to_be_bytes());
    out.extend_from_slice(&(e.wire_bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&e.wire_bytes);
    out
}

struct RecordReader<'a> {
    buf: &'a [u8],
}

impl<'a> RecordReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Transcript("bad event record: short".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
}

fn decode_event(bytes: &[u8]) -> Result<TranscriptEvent> {
    let bad = |msg: &str| Error::Transcript(format!("bad event record: {msg}"));
    let mut r = RecordReader { buf: bytes };
    let t = u64::from_be_bytes(r.take(8)?.try_into().unwrap());
    let kind = match r.take(1)?[0] {
        0 => EventKind::Search,
        1 => EventKind::Update,
        2 => EventKind::Copy,
        _ => return Err(bad("kind")),
    };
    let node = NodeLabel(u64::from_be_bytes(r.take(8)?.try_into().unwrap()));
    let op = match r.take(1)?[0] {
        0 => None,
        1 => Some(UpdateOp::Add),
        2 => Some(UpdateOp::Del),
        _ => return Err(bad("op")),
    };
    let ind = match r.take(1)?[0] {
        0 => None,
        1 => {
            let mut id = [0u8; DOC_ID_LEN];
            id.copy_from_slice(r.take(DOC_ID_LEN)?);
            Some(DocId(id))
        }
        _ => return Err(bad("ind flag")),
    };
    let keywords_touched = u32::from_be_bytes(r.take(4)?.try_into().unwrap());
    let wire_len = u32::from_be_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let wire_bytes = r.take(wire_len)?.to_vec();
    if !r.buf.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(TranscriptEvent { t, kind, node, op, ind, wire_bytes, keywords_touched })
}

/// Incrementally maintained leakage patterns; must always agree with the
/// from-scratch scans on [`Transcript`]. The contain pattern is computed
/// at ingest time from the running per-node document sets.
#[derive(Debug, Default)]
pub struct IncrementalLeakage {
    sp: BTreeMap<u64, BTreeSet<u64>>,
    hist: BTreeMap<u64, Vec<(u64, UpdateOp, DocId)>>,
    db: BTreeMap<u64, BTreeSet<DocId>>,
    searched_sets: Vec<(u64, BTreeSet<DocId>)>,
    cp: BTreeMap<(u64, u64), BTreeSet<u64>>,
}

impl IncrementalLeakage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest(&mut self, event: &TranscriptEvent) {
        match event.kind {
            EventKind::Search => {
                self.sp.entry(event.node.0).or_default().insert(event.t);
                let current = self.db.get(&event.node.0).cloned().unwrap_or_default();
                let contains: BTreeSet<u64> = self
                    .searched_sets
                    .iter()
                    .filter(|(t, set)| *t < event.t && current.is_subset(set))
                    .map(|(t, _)| *t)
                    .collect();
                self.cp.insert((event.t, event.node.0), contains);
                self.searched_sets.push((event.t, current));
            }
            EventKind::Update => {
                let op = event.op.expect("update has op");
                let ind = event.ind.expect("update has ind");
                self.hist.entry(event.node.0).or_default().push((event.t, op, ind));
                let set = self.db.entry(event.node.0).or_default();
                match op {
                    UpdateOp::Add => {
                        set.insert(ind);
                    }
                    UpdateOp::Del => {
                        set.remove(&ind);
                    }
                }
            }
            EventKind::Copy => {}
        }
    }

    pub fn sp(&self, n: NodeLabel) -> BTreeSet<u64> {
        self.sp.get(&n.0).cloned().unwrap_or_default()
    }

    pub fn hist(&self, n: NodeLabel) -> Vec<(u64, UpdateOp, DocId)> {
        self.hist.get(&n.0).cloned().unwrap_or_default()
    }

    /// Contain pattern of the search on `n` at `t`, if one was ingested.
    pub fn cp_at(&self, n: NodeLabel, t: u64) -> Option<&BTreeSet<u64>> {
        self.cp.get(&(t, n.0))
    }
}

/// One named audit check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

/// Outcome of an audit run: deterministic for a given transcript.
#[derive(Debug, Clone)]
pub struct AuditReport {
    pub scheme: Scheme,
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for check in &self.checks {
            out.push_str(&format!(
                "{} {:<32} {}\n",
                if check.passed { "PASS" } else { "FAIL" },
                check.name,
                check.details
            ));
        }
        out.push_str(&format!(
            "audit[scheme {}]: {}\n",
            self.scheme,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn check(name: &'static str, violations: Vec<String>, ok_detail: String) -> CheckResult {
    if violations.is_empty() {
        CheckResult { name, passed: true, details: ok_detail }
    } else {
        let shown = violations.iter().take(3).cloned().collect::<Vec<_>>().join("; ");
        CheckResult {
            name,
            passed: false,
            details: format!("{} violation(s): {}", violations.len(), shown),
        }
    }
}

/// Forward-privacy necessary conditions for a scheme-A transcript:
///
/// 1. every update token is fresh relative to everything the server could
///    already have derived (prior updates plus chain replays of prior
///    searches);
/// 2. update payloads have one constant width;
/// 3. each update operation consists of exactly its recorded number of
///    per-keyword messages, all of identical shape.
pub fn audit_forward_a(tr: &Transcript, tpk: &TdpPublicKey) -> AuditReport {
    let mut checks = Vec::new();

    // 1. Token freshness against the server-derivable set.
    let mut violations = Vec::new();
    let mut seen: HashMap<[u8; TOKEN_LEN], usize> = HashMap::new();
    let mut updates = 0u64;
    for (idx, event) in tr.events().iter().enumerate() {
        match event.kind {
            EventKind::Update => {
                updates += 1;
                match parse_update_a_token(&event.wire_bytes) {
                    Ok(token) => {
                        if let Some(first) = seen.get(&token) {
                            violations.push(format!(
                                "event {idx} (t={}) reuses token first seen at event {first}",
                                event.t
                            ));
                        } else {
                            seen.insert(token, idx);
                        }
                    }
                    Err(e) => violations.push(format!("event {idx}: unparseable update: {e}")),
                }
            }
            EventKind::Search => {
                match derive_search_a_tokens(&event.wire_bytes, tpk) {
                    Ok(tokens) => {
                        for token in tokens {
                            seen.entry(token).or_insert(idx);
                        }
                    }
                    Err(e) => violations.push(format!("event {idx}: unreplayable search: {e}")),
                }
            }
            EventKind::Copy => {
                violations.push(format!("event {idx}: copy message in a scheme-A transcript"));
            }
        }
    }
    checks.push(check(
        "update-token-freshness",
        violations,
        format!("{updates} update tokens, all fresh"),
    ));

    // 2. Constant payload width.
    let mut violations = Vec::new();
    let mut widths = BTreeSet::new();
    for (idx, event) in tr.events().iter().enumerate() {
        if event.kind != EventKind::Update {
            continue;
        }
        match wire::decode_message(wire::MSG_UPDATE_A, &event.wire_bytes) {
            Ok(Message::UpdateA(m)) => {
                match wire::unb64(&m.masked_id) {
                    Ok(bytes) => {
                        widths.insert(bytes.len());
                    }
                    Err(e) => violations.push(format!("event {idx}: {e}")),
                }
            }
            _ => violations.push(format!("event {idx}: not an UPDATE_A payload")),
        }
    }
    if widths.len() > 1 {
        violations.push(format!("mixed payload widths: {widths:?}"));
    }
    checks.push(check(
        "update-payload-width",
        violations,
        format!("constant width {:?}", widths.iter().next().copied().unwrap_or(DOC_ID_LEN)),
    ));

    // 3. Update structure: count per operation equals the recorded path
    // length, and every message of the operation records the same length.
    let mut violations = Vec::new();
    let mut by_t: BTreeMap<u64, Vec<&TranscriptEvent>> = BTreeMap::new();
    for event in tr.events().iter().filter(|e| e.kind == EventKind::Update) {
        by_t.entry(event.t).or_default().push(event);
    }
    for (t, group) in &by_t {
        let count = group.len() as u32;
        if group.iter().any(|e| e.keywords_touched != count) {
            violations.push(format!(
                "operation t={t}: {count} messages but recorded fan-out {:?}",
                group.iter().map(|e| e.keywords_touched).collect::<BTreeSet<_>>()
            ));
        }
    }
    checks.push(check(
        "update-structure",
        violations,
        format!("{} update operations match their fan-out", by_t.len()),
    ));

    AuditReport { scheme: Scheme::A, checks }
}

fn parse_update_a_token(payload: &[u8]) -> Result<[u8; TOKEN_LEN]> {
    match wire::decode_message(wire::MSG_UPDATE_A, payload)? {
        Message::UpdateA(m) => {
            let bytes = wire::unb64(&m.token)?;
            bytes
                .try_into()
                .map_err(|_| Error::Protocol("token width".into()))
        }
        _ => Err(Error::Protocol("not an UPDATE_A payload".into())),
    }
}

/// Every token the server derives while serving one scheme-A search.
fn derive_search_a_tokens(payload: &[u8], tpk: &TdpPublicKey) -> Result<Vec<[u8; TOKEN_LEN]>> {
    let Message::SearchA(msg) = wire::decode_message(wire::MSG_SEARCH_A, payload)? else {
        return Err(Error::Protocol("not a SEARCH_A payload".into()));
    };
    let req = msg.to_search_a()?;
    let mut tokens = Vec::new();
    for seg in &req.segments {
        let mut st = seg.head.clone();
        let mut counter = seg.from_counter;
        loop {
            tokens.push(h1(&seg.key, &st).0);
            if counter == seg.to_counter {
                break;
            }
            st = tdp::forward(tpk, &st)?;
            counter -= 1;
        }
    }
    Ok(tokens)
}

/// Backward-privacy necessary conditions for a scheme-B transcript:
///
/// 1. each node's update token is constant and equals `F_K(node)`; tokens
///    of distinct nodes are distinct;
/// 2. add and delete messages are byte-format-indistinguishable (same
///    field shape, same fixed ciphertext width) and ciphertexts never
///    repeat;
/// 3. a document added and deleted with no intervening search on a
///    covering node never appears in any later decrypted search reply or
///    in the final store, while its slot is unrecycled;
/// 4. search messages reveal only the fixed token, so their repetition
///    pattern equals the search pattern `sp`.
///
/// Needs the client state: absence checks decrypt with the secret key.
pub fn audit_backward_b(tr: &Transcript, client: &ClientStateB) -> AuditReport {
    let mut checks = Vec::new();
    let pk = client.paillier_public().clone();

    // 1. Fixed per-node tokens.
    let mut violations = Vec::new();
    let mut token_of_node: BTreeMap<u64, [u8; TOKEN_LEN]> = BTreeMap::new();
    for (idx, event) in tr.events().iter().enumerate() {
        let observed: Option<[u8; TOKEN_LEN]> = match event.kind {
            EventKind::Update => match wire::decode_message(wire::MSG_UPDATE_B, &event.wire_bytes)
            {
                Ok(Message::UpdateB(m)) => match wire::unb64(&m.token) {
                    Ok(b) => b.try_into().ok(),
                    Err(_) => None,
                },
                _ => None,
            },
            EventKind::Search => match wire::decode_message(wire::MSG_SEARCH_B, &event.wire_bytes)
            {
                Ok(Message::SearchB(m)) => match wire::unb64(&m.token) {
                    Ok(b) => b.try_into().ok(),
                    Err(_) => None,
                },
                _ => None,
            },
            EventKind::Copy => match wire::decode_message(wire::MSG_COPY_B, &event.wire_bytes) {
                Ok(Message::CopyB(m)) => match wire::unb64(&m.dst) {
                    Ok(b) => b.try_into().ok(),
                    Err(_) => None,
                },
                _ => None,
            },
        };
        let Some(token) = observed else {
            violations.push(format!("event {idx}: unparseable payload"));
            continue;
        };
        let expected = client.node_token(event.node).0;
        if token != expected {
            violations.push(format!(
                "event {idx} (t={}): token does not match F_K({})",
                event.t, event.node.0
            ));
        }
        if let Some(prev) = token_of_node.insert(event.node.0, token) {
            if prev != token {
                violations.push(format!("node {} changed tokens", event.node.0));
            }
        }
    }
    let distinct: BTreeSet<_> = token_of_node.values().collect();
    if distinct.len() != token_of_node.len() {
        violations.push("distinct nodes share a token".into());
    }
    checks.push(check(
        "fixed-node-token",
        violations,
        format!("{} nodes, each with one constant token", token_of_node.len()),
    ));

    // 2. Add/del format indistinguishability.
    let mut violations = Vec::new();
    let mut shapes: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    let mut ciphertexts_seen: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut add_shape = None;
    let mut del_shape = None;
    for (idx, event) in tr.events().iter().enumerate() {
        if event.kind != EventKind::Update {
            continue;
        }
        match wire::decode_message(wire::MSG_UPDATE_B, &event.wire_bytes) {
            Ok(Message::UpdateB(m)) => {
                let token_len = wire::unb64(&m.token).map(|b| b.len()).unwrap_or(0);
                let ct_bytes = wire::unb64(&m.ciphertext).unwrap_or_default();
                let shape = (event.wire_bytes.len(), token_len, ct_bytes.len());
                shapes.insert(shape);
                match event.op {
                    Some(UpdateOp::Add) => add_shape = Some(shape),
                    Some(UpdateOp::Del) => del_shape = Some(shape),
                    None => violations.push(format!("event {idx}: update without op")),
                }
                if ct_bytes.len() != pk.ciphertext_width() {
                    violations.push(format!(
                        "event {idx}: ciphertext width {} != fixed {}",
                        ct_bytes.len(),
                        pk.ciphertext_width()
                    ));
                }
                if !ciphertexts_seen.insert(ct_bytes) {
                    violations.push(format!("event {idx}: repeated ciphertext bytes"));
                }
            }
            _ => violations.push(format!("event {idx}: not an UPDATE_B payload")),
        }
    }
    if shapes.len() > 1 {
        violations.push(format!("mixed message shapes: {shapes:?}"));
    }
    if let (Some(a), Some(d)) = (add_shape, del_shape) {
        if a != d {
            violations.push("add and del messages differ in shape".into());
        }
    }
    checks.push(check(
        "op-indistinguishable-format",
        violations,
        format!("uniform shape {:?}", shapes.iter().next()),
    ));

    // 3 & 4 need the store replayed from wire bytes.
    let (absence_violations, absent_replies, sp_violations) = replay_b(tr, client);
    checks.push(check(
        "deleted-doc-absence",
        absence_violations,
        format!("checked with secret key; {absent_replies} absent replies observed"),
    ));
    checks.push(check(
        "search-pattern-consistency",
        sp_violations,
        "token repetition matches sp(n)".into(),
    ));

    AuditReport { scheme: Scheme::B, checks }
}

/// Replays a scheme-B transcript: rebuilds the store from wire bytes,
/// replays slot assignment from ground truth, and checks deleted-document
/// absence plus search-pattern consistency.
fn replay_b(tr: &Transcript, client: &ClientStateB) -> (Vec<String>, u64, Vec<String>) {
    let mut absence = Vec::new();
    let mut sp_violations = Vec::new();
    let pk = client.paillier_public().clone();
    let width = client.mask_width();
    let mut index = EncryptedIndex::new_b(&pk, width);

    // Group update events into logical operations by timestamp to recover
    // (op, value, ind); the path's leaf node carries the value.
    #[derive(Debug)]
    struct DeletedDoc {
        ind: DocId,
        value: u64,
        slot: u32,
        add_t: u64,
        del_t: u64,
        reassigned_at: Option<u64>,
    }
    let mut directory = SlotDirectory::default();
    let mut deleted: Vec<DeletedDoc> = Vec::new();
    let mut op_seen: BTreeSet<u64> = BTreeSet::new();
    let mut add_time_of_slot: HashMap<u32, u64> = HashMap::new();

    // Search bookkeeping for checks 3 and 4.
    let mut token_first_searched: HashMap<[u8; TOKEN_LEN], u64> = HashMap::new();
    let mut absent_replies = 0u64;

    for (idx, event) in tr.events().iter().enumerate() {
        match event.kind {
            EventKind::Copy => {
                if let Ok(Message::CopyB(m)) =
                    wire::decode_message(wire::MSG_COPY_B, &event.wire_bytes)
                {
                    if let Ok(copy) = m.to_copy_b() {
                        if crate::scheme_b::server_copy_b(&mut index, &copy).is_err() {
                            absence.push(format!("event {idx}: copy replay failed"));
                        }
                    }
                }
            }
            EventKind::Update => {
                if let Ok(Message::UpdateB(m)) =
                    wire::decode_message(wire::MSG_UPDATE_B, &event.wire_bytes)
                {
                    if let Ok(msg) = m.to_update_b() {
                        if crate::scheme_b::server_update_b(&mut index, &msg).is_err() {
                            absence.push(format!("event {idx}: update replay failed"));
                        }
                    }
                }
                // Directory replay once per logical operation: the leaf
                // node of the path carries the value.
                if event.node.is_leaf() && !op_seen.contains(&event.t) {
                    op_seen.insert(event.t);
                    let value = event.node.0 / 2;
                    let ind = event.ind.expect("update has ind");
                    match event.op.expect("update has op") {
                        UpdateOp::Add => {
                            match directory.replay_assign(ind, value) {
                                Ok(slot) => {
                                    add_time_of_slot.insert(slot, event.t);
                                    for d in deleted.iter_mut() {
                                        if d.slot == slot && d.reassigned_at.is_none() {
                                            d.reassigned_at = Some(event.t);
                                        }
                                    }
                                }
                                Err(e) => absence
                                    .push(format!("event {idx}: directory replay: {e}")),
                            }
                        }
                        UpdateOp::Del => match directory.replay_release(&ind, value) {
                            Ok(slot) => deleted.push(DeletedDoc {
                                ind,
                                value,
                                slot,
                                add_t: add_time_of_slot.get(&slot).copied().unwrap_or(0),
                                del_t: event.t,
                                reassigned_at: None,
                            }),
                            Err(e) => {
                                absence.push(format!("event {idx}: directory replay: {e}"))
                            }
                        },
                    }
                }
            }
            EventKind::Search => {
                let token_bytes = match wire::decode_message(
                    wire::MSG_SEARCH_B,
                    &event.wire_bytes,
                ) {
                    Ok(Message::SearchB(m)) => wire::unb64(&m.token).ok(),
                    _ => None,
                };
                let Some(token_bytes) = token_bytes else {
                    sp_violations.push(format!("event {idx}: unparseable search"));
                    continue;
                };
                let token: [u8; TOKEN_LEN] = match token_bytes.try_into() {
                    Ok(t) => t,
                    Err(_) => {
                        sp_violations.push(format!("event {idx}: bad token width"));
                        continue;
                    }
                };
                token_first_searched.entry(token).or_insert(event.t);

                // Decrypt the current accumulator and check every deleted,
                // unrecycled slot is absent.
                match index.get(&crate::crypto::UpdateToken(token)) {
                    None => absent_replies += 1,
                    Some(bytes) => {
                        let Ok(ct) = paillier::Ciphertext::from_bytes(bytes, &pk) else {
                            absence.push(format!("event {idx}: stored bytes unparseable"));
                            continue;
                        };
                        let Ok(plain) = paillier::dec(&pk, &client.paillier().secret, &ct)
                        else {
                            absence.push(format!("event {idx}: decryption failed"));
                            continue;
                        };
                        let slots = bitstring::decode(&plain, width);
                        for d in deleted.iter().filter(|d| {
                            d.del_t < event.t
                                && d.reassigned_at.is_none_or(|r| event.t < r)
                        }) {
                            if slots.contains(&d.slot) {
                                absence.push(format!(
                                    "event {idx} (t={}): reply decodes deleted doc {} (slot {}, deleted at t={})",
                                    event.t,
                                    d.ind.display(),
                                    d.slot,
                                    d.del_t
                                ));
                            }
                        }
                    }
                }
            }
        }
    }

    // Final-store sweep: deleted docs whose slot was never recycled must
    // not decode anywhere. Only consider docs that were deleted before the
    // first search on a covering node (the backward-privacy window).
    let covering_search = |d: &DeletedDoc| -> Option<u64> {
        tr.events()
            .iter()
            .filter(|e| e.kind == EventKind::Search)
            .filter(|e| {
                let c = client.geometry().capacity();
                crate::tree::node_span(e.node, c)
                    .map(|span| span.lo <= d.value && d.value <= span.hi)
                    .unwrap_or(false)
            })
            .map(|e| e.t)
            .find(|t| (d.add_t..d.del_t).contains(t))
    };
    let eligible: Vec<&DeletedDoc> = deleted
        .iter()
        .filter(|d| covering_search(d).is_none() && d.reassigned_at.is_none())
        .collect();
    if !eligible.is_empty() {
        // Decrypt each final accumulator once, then test every slot.
        for (token, bytes) in index.entries() {
            let Ok(ct) = paillier::Ciphertext::from_bytes(bytes, &pk) else { continue };
            let Ok(plain) = paillier::dec(&pk, &client.paillier().secret, &ct) else {
                continue;
            };
            let slots = bitstring::decode(&plain, width);
            for d in &eligible {
                if slots.contains(&d.slot) {
                    absence.push(format!(
                        "final store token {} still decodes deleted doc {} (slot {})",
                        hex::encode(&token[..6]),
                        d.ind.display(),
                        d.slot
                    ));
                }
            }
        }
    }

    // Check 4: grouping search events by token must reproduce sp(n).
    let mut token_times: HashMap<[u8; TOKEN_LEN], BTreeSet<u64>> = HashMap::new();
    for event in tr.events().iter().filter(|e| e.kind == EventKind::Search) {
        if let Ok(Message::SearchB(m)) =
            wire::decode_message(wire::MSG_SEARCH_B, &event.wire_bytes)
        {
            if let Ok(bytes) = wire::unb64(&m.token) {
                if let Ok(token) = <[u8; TOKEN_LEN]>::try_from(bytes) {
                    token_times.entry(token).or_default().insert(event.t);
                }
            }
        }
    }
    let searched_nodes: BTreeSet<u64> = tr
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::Search)
        .map(|e| e.node.0)
        .collect();
    for node in searched_nodes {
        let expected = tr.sp(NodeLabel(node));
        let got = token_times
            .get(&client.node_token(NodeLabel(node)).0)
            .cloned()
            .unwrap_or_default();
        if expected != got {
            sp_violations.push(format!(
                "node {node}: token repetition {got:?} != sp {expected:?}"
            ));
        }
    }

    (absence, absent_replies, sp_violations)
}
