//! Seeded end-to-end workloads with oracle verification.
//!
//! A workload drives the full client/server pipeline in process — updates,
//! growth, searches — while a plaintext [`ShadowDb`] tracks ground truth
//! and a [`Transcript`] records every message. Every query's result set is
//! diffed against the shadow; the report also carries the structural
//! accounting the constructions promise: per-update fan-out of exactly
//! `log2(C) + 1` messages, per-search token counts equal to the cover
//! size, client storage bounds, and at most one ciphertext per cover node.

use crate::scheme_a::{self, ClientStateA};
use crate::scheme_b::{self};
use crate::shadow::ShadowDb;
use crate::store::EncryptedIndex;
use crate::transcript::{audit_backward_b, audit_forward_a, AuditReport, Transcript};
use crate::tree;
use crate::wire::{self, Message};
use crate::{DocId, Result, Scheme, UpdateOp};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub scheme: Scheme,
    /// Values live in `[0, max_value)`.
    pub max_value: u64,
    /// Number of add operations to perform.
    pub adds: u64,
    /// Number of range queries to run after the updates.
    pub queries: u64,
    /// Scheme B: fraction of operations that delete a live document.
    pub del_ratio: f64,
    pub modulus_bits: usize,
    /// Scheme B: mask width in bits.
    pub mask_width: u32,
    /// Add one document at every value first, so that every real node has
    /// state and search accounting is exact for scheme A too.
    pub dense_prefill: bool,
    /// Run the matching leakage audit over the recorded transcript.
    pub audit: bool,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            seed: 1,
            scheme: Scheme::A,
            max_value: 64,
            adds: 200,
            queries: 50,
            del_ratio: 0.3,
            modulus_bits: 512,
            mask_width: 256,
            dense_prefill: false,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Timing {
    pub setup_ms: u128,
    pub update_total_ms: u128,
    pub search_total_ms: u128,
}

#[derive(Debug, Clone)]
pub struct WorkloadReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub adds: u64,
    pub dels: u64,
    pub queries_run: u64,
    /// Result-set differences against the shadow oracle. Must be zero.
    pub mismatches: u64,
    /// Updates whose message count was not exactly `log2(C) + 1`.
    pub fanout_violations: u64,
    pub max_update_messages: usize,
    /// Searches whose request/token count broke the cover accounting.
    pub token_accounting_violations: u64,
    pub max_cover_size: usize,
    /// Covers exceeding `2 * log2(C)`.
    pub cover_bound_violations: u64,
    /// Scheme B searches yielding more than one ciphertext for a token
    /// (structurally impossible through the store; counted for the record).
    pub extra_ciphertext_violations: u64,
    /// Scheme B: store entries exceeding the count of real tree nodes
    /// (one accumulator per touched node is the ceiling).
    pub store_size_violations: u64,
    /// Scheme A: final chain-table size and its `2C - 1` bound.
    pub client_entries: u64,
    pub client_entry_bound: u64,
    pub entry_bound_violations: u64,
    /// Scheme B: serialized key-material size sampled over the run; must
    /// be constant (independent of tree and document count).
    pub crypto_state_sizes: Vec<usize>,
    pub capacity_doublings: u32,
    pub final_value_count: u64,
    pub store_entries: u64,
    pub timing: Timing,
    pub audit: Option<AuditReport>,
}

impl WorkloadReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
            && self.fanout_violations == 0
            && self.token_accounting_violations == 0
            && self.cover_bound_violations == 0
            && self.extra_ciphertext_violations == 0
            && self.store_size_violations == 0
            && self.entry_bound_violations == 0
            && self.crypto_state_sizes.windows(2).all(|w| w[0] == w[1])
            && self.audit.as_ref().is_none_or(|a| a.passed())
    }

    pub fn render(&self) -> String {
        fn row(out: &mut String, k: &str, v: String) {
            out.push_str(&format!("  {k:<28} {v}\n"));
        }
        let mut out = String::new();
        out.push_str(&format!("workload scheme={} seed={}\n", self.scheme, self.seed));
        row(&mut out, "adds / dels / queries", format!("{} / {} / {}", self.adds, self.dels, self.queries_run));
        row(&mut out, "result mismatches", self.mismatches.to_string());
        row(&mut out, "fan-out violations", format!("{} (max {} msgs)", self.fanout_violations, self.max_update_messages));
        row(&mut out, "token accounting violations", self.token_accounting_violations.to_string());
        row(&mut out, "cover bound violations", format!("{} (max cover {})", self.cover_bound_violations, self.max_cover_size));
        match self.scheme {
            Scheme::A => row(
                &mut out,
                "client entries / bound",
                format!("{} / {}  ({} violations)", self.client_entries, self.client_entry_bound, self.entry_bound_violations),
            ),
            Scheme::B => row(
                &mut out,
                "crypto state bytes",
                format!("{:?} (constant: {})", self.crypto_state_sizes, self.crypto_state_sizes.windows(2).all(|w| w[0] == w[1])),
            ),
        }
        row(&mut out, "capacity doublings", self.capacity_doublings.to_string());
        row(&mut out, "values / store entries", format!("{} / {}", self.final_value_count, self.store_entries));
        row(
            &mut out,
            "timing ms (setup/upd/srch)",
            format!("{} / {} / {}", self.timing.setup_ms, self.timing.update_total_ms, self.timing.search_total_ms),
        );
        if let Some(audit) = &self.audit {
            out.push_str(&audit.render());
        }
        out.push_str(&format!("verdict: {}\n", if self.passed() { "PASS" } else { "FAIL" }));
        out
    }
}

fn random_doc(rng: &mut ChaCha20Rng) -> DocId {
    let mut id = [0u8; crate::DOC_ID_LEN];
    rng.fill_bytes(&mut id);
    DocId(id)
}

fn expected_fanout(value_count: u64) -> usize {
    let capacity = tree::TreeGeometry::with_values(value_count).capacity();
    capacity.trailing_zeros() as usize + 1
}

fn cover_bound(value_count: u64) -> usize {
    let capacity = tree::TreeGeometry::with_values(value_count).capacity();
    (2 * capacity.trailing_zeros() as usize).max(1)
}

/// Picks a query range; occasionally overshoots `m` to exercise clamping.
fn random_range(rng: &mut ChaCha20Rng, m: u64) -> (u64, u64) {
    let a = rng.gen_range(0..m);
    let b = if rng.gen_bool(0.1) {
        a + rng.gen_range(0..m + 4)
    } else {
        rng.gen_range(a..m)
    };
    (a, b)
}

pub fn run_workload(spec: &WorkloadSpec) -> Result<WorkloadReport> {
    match spec.scheme {
        Scheme::A => run_a(spec),
        Scheme::B => run_b(spec),
    }
}

fn run_a(spec: &WorkloadSpec) -> Result<WorkloadReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let start = Instant::now();
    let (mut client, mut index) = scheme_a::setup_a(spec.modulus_bits, &mut rng);
    let mut report = blank_report(spec);
    report.timing.setup_ms = start.elapsed().as_millis();

    let mut transcript = Transcript::new();
    let mut shadow = ShadowDb::new();

    let do_add = |client: &mut ClientStateA,
                      index: &mut EncryptedIndex,
                      transcript: &mut Transcript,
                      shadow: &mut ShadowDb,
                      report: &mut WorkloadReport,
                      v: u64,
                      ind: DocId,
                      rng: &mut ChaCha20Rng|
     -> Result<()> {
        let t = transcript.begin_op();
        let messages = client.update_at(v, &ind, rng)?;
        let fanout = messages.len();
        report.max_update_messages = report.max_update_messages.max(fanout);
        if fanout != expected_fanout(client.value_count()) {
            report.fanout_violations += 1;
        }
        for (label, msg) in &messages {
            transcript.record_update(
                t,
                *label,
                UpdateOp::Add,
                ind,
                wire::payload_bytes(&Message::from_update_a(msg)),
                fanout as u32,
            );
            scheme_a::server_update_a(index, msg)?;
        }
        shadow.add(v, ind);
        report.adds += 1;
        let bound = 2 * client.geometry().capacity() - 1;
        if client.chain_entry_count() > bound {
            report.entry_bound_violations += 1;
        }
        Ok(())
    };

    let update_start = Instant::now();
    if spec.dense_prefill {
        for v in 0..spec.max_value {
            let ind = random_doc(&mut rng);
            do_add(&mut client, &mut index, &mut transcript, &mut shadow, &mut report, v, ind, &mut rng)?;
        }
    }
    while report.adds < spec.adds {
        let m = client.value_count();
        let v = if m == 0 || (m < spec.max_value && rng.gen_bool(0.2)) {
            m
        } else {
            rng.gen_range(0..m)
        };
        let ind = random_doc(&mut rng);
        do_add(&mut client, &mut index, &mut transcript, &mut shadow, &mut report, v, ind, &mut rng)?;
    }
    report.timing.update_total_ms = update_start.elapsed().as_millis();

    let search_start = Instant::now();
    let m = client.value_count();
    for _ in 0..spec.queries {
        let (a, b) = random_range(&mut rng, m);
        let t = transcript.begin_op();
        let requests = client.search(a, b)?;
        let clamped_b = b.min(m - 1);
        let cover = tree::minimal_cover(a, clamped_b, &client.geometry())?;
        report.max_cover_size = report.max_cover_size.max(cover.len());
        if cover.len() > cover_bound(m) {
            report.cover_bound_violations += 1;
        }
        // Requests may only skip stateless cover nodes; with a dense
        // prefill every cover node has state, so counts must be exact.
        let exact = spec.dense_prefill;
        if requests.len() > cover.len() || (exact && requests.len() != cover.len()) {
            report.token_accounting_violations += 1;
        }
        let mut results = Vec::new();
        for (label, request) in &requests {
            transcript.record_search(
                t,
                *label,
                wire::payload_bytes(&Message::from_search_a(request)),
            );
            results.push(scheme_a::server_search_a(&index, request)?);
        }
        let got: std::collections::BTreeSet<DocId> =
            client.collect_results(&results).into_iter().collect();
        let want = shadow.range(a, clamped_b);
        if got != want {
            report.mismatches += 1;
        }
        report.queries_run += 1;
    }
    report.timing.search_total_ms = search_start.elapsed().as_millis();

    report.client_entries = client.chain_entry_count();
    report.client_entry_bound = 2 * client.geometry().capacity() - 1;
    if report.client_entries > report.client_entry_bound {
        report.entry_bound_violations += 1;
    }
    report.capacity_doublings = client.geometry().capacity().trailing_zeros();
    report.final_value_count = client.value_count();
    report.store_entries = index.entry_count();
    if spec.audit {
        report.audit = Some(audit_forward_a(&transcript, client.tdp_public()));
    }
    Ok(report)
}

fn run_b(spec: &WorkloadSpec) -> Result<WorkloadReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let start = Instant::now();
    let (mut client, mut index) = scheme_b::setup_b(spec.modulus_bits, spec.mask_width, &mut rng)?;
    let mut report = blank_report(spec);
    report.timing.setup_ms = start.elapsed().as_millis();

    let mut transcript = Transcript::new();
    let mut shadow = ShadowDb::new();
    let mut live: Vec<(DocId, u64)> = Vec::new();
    report.crypto_state_sizes.push(client.crypto_state_bytes());

    let width = client.paillier_public().ciphertext_width();
    let apply_batch = |index: &mut EncryptedIndex,
                       transcript: &mut Transcript,
                       batch: &scheme_b::UpdateBatchB,
                       op: UpdateOp,
                       ind: DocId|
     -> Result<()> {
        let t = transcript.begin_op();
        for (label, copy) in &batch.copies {
            transcript.record_copy(t, *label, wire::payload_bytes(&Message::from_copy_b(copy)));
            scheme_b::server_copy_b(index, copy)?;
        }
        let fanout = batch.updates.len() as u32;
        for (label, msg) in &batch.updates {
            transcript.record_update(
                t,
                *label,
                op,
                ind,
                wire::payload_bytes(&Message::from_update_b(msg, width)),
                fanout,
            );
            scheme_b::server_update_b(index, msg)?;
        }
        Ok(())
    };

    let update_start = Instant::now();
    if spec.dense_prefill {
        for v in 0..spec.max_value {
            let ind = random_doc(&mut rng);
            let batch = client.update_at(UpdateOp::Add, v, &ind, &mut rng)?;
            let fanout = batch.updates.len();
            report.max_update_messages = report.max_update_messages.max(fanout);
            if fanout != expected_fanout(client.value_count()) {
                report.fanout_violations += 1;
            }
            apply_batch(&mut index, &mut transcript, &batch, UpdateOp::Add, ind)?;
            shadow.add(v, ind);
            live.push((ind, v));
            report.adds += 1;
        }
    }
    while report.adds < spec.adds {
        let cap_left = (client.max_documents() as usize).saturating_sub(client.live_documents());
        let must_del = cap_left == 0;
        let del = !live.is_empty() && (must_del || rng.gen_bool(spec.del_ratio));
        if del {
            let pick = rng.gen_range(0..live.len());
            let (ind, v) = live.swap_remove(pick);
            let batch = client.update(UpdateOp::Del, v, &ind, &mut rng)?;
            let fanout = batch.updates.len();
            report.max_update_messages = report.max_update_messages.max(fanout);
            if fanout != expected_fanout(client.value_count()) {
                report.fanout_violations += 1;
            }
            apply_batch(&mut index, &mut transcript, &batch, UpdateOp::Del, ind)?;
            shadow.del(v, &ind)?;
            report.dels += 1;
        } else {
            let m = client.value_count();
            let v = if m == 0 || (m < spec.max_value && rng.gen_bool(0.2)) {
                m
            } else {
                rng.gen_range(0..m)
            };
            let ind = random_doc(&mut rng);
            let batch = client.update_at(UpdateOp::Add, v, &ind, &mut rng)?;
            let fanout = batch.updates.len();
            report.max_update_messages = report.max_update_messages.max(fanout);
            if fanout != expected_fanout(client.value_count()) {
                report.fanout_violations += 1;
            }
            apply_batch(&mut index, &mut transcript, &batch, UpdateOp::Add, ind)?;
            shadow.add(v, ind);
            live.push((ind, v));
            report.adds += 1;
        }
    }
    report.timing.update_total_ms = update_start.elapsed().as_millis();
    report.crypto_state_sizes.push(client.crypto_state_bytes());

    let search_start = Instant::now();
    let m = client.value_count();
    for _ in 0..spec.queries {
        let (a, b) = random_range(&mut rng, m);
        let t = transcript.begin_op();
        let tokens = client.search(a, b)?;
        let clamped_b = b.min(m - 1);
        let cover = tree::minimal_cover(a, clamped_b, &client.geometry())?;
        report.max_cover_size = report.max_cover_size.max(cover.len());
        if cover.len() > cover_bound(m) {
            report.cover_bound_violations += 1;
        }
        if tokens.len() != cover.len() {
            report.token_accounting_violations += 1;
        }
        let mut replies = Vec::new();
        for (label, token) in &tokens {
            transcript.record_search(t, *label, wire::payload_bytes(&Message::from_search_b(token)));
            if let Some(ct) = scheme_b::server_search_b(&index, token)? {
                replies.push(ct);
            }
        }
        if replies.len() > tokens.len() {
            report.extra_ciphertext_violations += 1;
        }
        let got = client.decode_results(&replies)?;
        let want = shadow.range(a, clamped_b);
        if got != want {
            report.mismatches += 1;
        }
        report.queries_run += 1;
    }
    report.timing.search_total_ms = search_start.elapsed().as_millis();
    report.crypto_state_sizes.push(client.crypto_state_bytes());

    report.capacity_doublings = client.geometry().capacity().trailing_zeros();
    report.final_value_count = client.value_count();
    report.store_entries = index.entry_count();
    if report.store_entries > client.geometry().real_node_count() {
        report.store_size_violations += 1;
    }
    if spec.audit {
        report.audit = Some(audit_backward_b(&transcript, &client));
    }
    Ok(report)
}

fn blank_report(spec: &WorkloadSpec) -> WorkloadReport {
    WorkloadReport {
        scheme: spec.scheme,
        seed: spec.seed,
        adds: 0,
        dels: 0,
        queries_run: 0,
        mismatches: 0,
        fanout_violations: 0,
        max_update_messages: 0,
        token_accounting_violations: 0,
        max_cover_size: 0,
        cover_bound_violations: 0,
        extra_ciphertext_violations: 0,
        store_size_violations: 0,
        client_entries: 0,
        client_entry_bound: 0,
        entry_bound_violations: 0,
        crypto_state_sizes: Vec::new(),
        capacity_doublings: 0,
        final_value_count: 0,
        store_entries: 0,
        timing: Timing::default(),
        audit: None,
    }
}
