//! Acceptance suite: every release-gating property, one test per
//! criterion, each printing a PASS line when it holds. Run with
//! `cargo test -p rdsse --test acceptance -- --nocapture` to see them.
//!
//! All cryptographic work runs at the 512-bit test modulus profile.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rdsse::crypto::{paillier, tdp, PrfKey};
use rdsse::scheme_a::{self, UpdateMessageA};
use rdsse::scheme_b::{self};
use rdsse::store::{load, EncryptedIndex, PersistentStore, StoreMutation};
use rdsse::transcript::{audit_forward_a, EventKind, Transcript};
use rdsse::tree::{minimal_cover, NodeLabel, TreeGeometry};
use rdsse::wire::{self, Message};
use rdsse::workload::{run_workload, WorkloadSpec};
use rdsse::{DocId, Scheme, UpdateOp};
use std::collections::BTreeSet;

const TEST_BITS: usize = 512;

fn doc(tag: u64) -> DocId {
    DocId::from_bytes(format!("f{tag}").as_bytes()).unwrap()
}

fn pass(criterion: &str) {
    println!("ACCEPT PASS {criterion}");
}

/// Criterion 1: the worked cover examples hold exactly.
#[test]
fn criterion_1_cover_fixtures() {
    let geo = TreeGeometry::with_values(4);
    let cover: Vec<u64> = minimal_cover(0, 2, &geo).unwrap().iter().map(|n| n.0).collect();
    assert_eq!(cover, vec![1, 4]);
    let cover: Vec<u64> = minimal_cover(0, 3, &geo).unwrap().iter().map(|n| n.0).collect();
    assert_eq!(cover, vec![3]);
    pass("criterion 1: range covers match the worked four-value examples");
}

/// Criterion 2: moving a document between values through the full
/// scheme-B pipeline leaves the source accumulator decoding to {} and the
/// destination to {f0}, with mask width 6 as in the worked example.
#[test]
fn criterion_2_bitstring_move_fixture() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (mut client, mut index) = scheme_b::setup_b(TEST_BITS, 6, &mut rng).unwrap();

    // Four values with f0 at value 0 (the four-leaf tree).
    let batch = client.update(UpdateOp::Add, 0, &doc(0), &mut rng).unwrap();
    apply_b(&mut index, &batch);
    for (_, c) in client.extend_to(4).unwrap() {
        scheme_b::server_copy_b(&mut index, &c).unwrap();
    }
    assert_eq!(client.value_count(), 4);

    // Delete from value 0, add at value 2 (leaf label 4).
    let batch = client.update(UpdateOp::Del, 0, &doc(0), &mut rng).unwrap();
    apply_b(&mut index, &batch);
    let batch = client.update(UpdateOp::Add, 2, &doc(0), &mut rng).unwrap();
    apply_b(&mut index, &batch);

    let decode_node = |label: u64| -> BTreeSet<u32> {
        let token = client.node_token(NodeLabel(label));
        let ct = scheme_b::server_search_b(&index, &token).unwrap().unwrap();
        let plain =
            paillier::dec(client.paillier_public(), &client.paillier().secret, &ct).unwrap();
        rdsse::bitstring::decode(&plain, client.mask_width())
    };
    assert_eq!(decode_node(0), BTreeSet::new());
    assert_eq!(decode_node(4), BTreeSet::from([0u32]));

    // And through the search path: value 0 is empty, value 2 holds f0.
    let results = search_b(&client, &index, 0, 0);
    assert!(results.is_empty());
    let results = search_b(&client, &index, 2, 2);
    assert_eq!(results, BTreeSet::from([doc(0)]));
    pass("criterion 2: delete-then-re-add move decodes to {} and {f0}");
}

fn apply_b(index: &mut EncryptedIndex, batch: &scheme_b::UpdateBatchB) {
    for (_, c) in &batch.copies {
        scheme_b::server_copy_b(index, c).unwrap();
    }
    for (_, m) in &batch.updates {
        scheme_b::server_update_b(index, m).unwrap();
    }
}

fn search_b(
    client: &scheme_b::ClientStateB,
    index: &EncryptedIndex,
    a: u64,
    b: u64,
) -> BTreeSet<DocId> {
    let mut replies = Vec::new();
    for (_, token) in client.search(a, b).unwrap() {
        if let Some(ct) = scheme_b::server_search_b(index, &token).unwrap() {
            replies.push(ct);
        }
    }
    client.decode_results(&replies).unwrap()
}

/// Criterion 3: structural accounting. Every update sends exactly
/// log2(C)+1 messages, every search sends one token (or request) per cover
/// node, scheme-A client state stays within 2C-1 entries, scheme-B client
/// crypto state is constant-size, and scheme-B searches return at most one
/// ciphertext per cover node.
#[test]
fn criterion_3_table_accounting() {
    let report_a = run_workload(&WorkloadSpec {
        seed: 31,
        scheme: Scheme::A,
        max_value: 128,
        adds: 300,
        queries: 100,
        modulus_bits: TEST_BITS,
        dense_prefill: true,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(report_a.fanout_violations, 0, "{}", report_a.render());
    assert_eq!(report_a.token_accounting_violations, 0, "{}", report_a.render());
    assert_eq!(report_a.entry_bound_violations, 0, "{}", report_a.render());
    assert!(report_a.client_entries <= report_a.client_entry_bound);
    assert_eq!(report_a.mismatches, 0);

    let report_b = run_workload(&WorkloadSpec {
        seed: 32,
        scheme: Scheme::B,
        max_value: 128,
        adds: 250,
        queries: 100,
        del_ratio: 0.3,
        modulus_bits: TEST_BITS,
        mask_width: 256,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(report_b.fanout_violations, 0, "{}", report_b.render());
    assert_eq!(report_b.token_accounting_violations, 0, "{}", report_b.render());
    assert_eq!(report_b.extra_ciphertext_violations, 0, "{}", report_b.render());
    assert!(
        report_b.crypto_state_sizes.windows(2).all(|w| w[0] == w[1]),
        "scheme-B crypto state must be constant-size: {:?}",
        report_b.crypto_state_sizes
    );
    assert_eq!(report_b.mismatches, 0);
    pass("criterion 3: update fan-out, search token, and storage accounting exact");
}

/// Criterion 4: twenty seeded workloads per scheme agree with the
/// plaintext oracle on every one of 200 random range queries.
#[test]
fn criterion_4_oracle_equivalence() {
    for seed in 0..20u64 {
        let (max_value, adds) = match seed % 5 {
            0 => (256, 2000),
            1 => (32, 150),
            2 => (64, 300),
            3 => (128, 500),
            _ => (256, 400),
        };
        let report = run_workload(&WorkloadSpec {
            seed: 400 + seed,
            scheme: Scheme::A,
            max_value,
            adds,
            queries: 200,
            modulus_bits: TEST_BITS,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.mismatches, 0, "scheme A seed {seed}: {}", report.render());
        assert_eq!(report.queries_run, 200);
    }
    for seed in 0..20u64 {
        let (max_value, adds) = match seed % 5 {
            0 => (256, 1000),
            1 => (32, 120),
            2 => (64, 250),
            3 => (128, 400),
            _ => (256, 300),
        };
        let report = run_workload(&WorkloadSpec {
            seed: 500 + seed,
            scheme: Scheme::B,
            max_value,
            adds,
            queries: 200,
            del_ratio: 0.3,
            modulus_bits: TEST_BITS,
            mask_width: 256,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.mismatches, 0, "scheme B seed {seed}: {}", report.render());
        assert_eq!(report.queries_run, 200);
        assert!(report.dels > 0, "workload must exercise deletion");
    }
    pass("criterion 4: 40 seeded workloads, 8000 queries, zero oracle mismatches");
}

/// Criterion 5: the crypto-algebra identities, 1000 trials each.
#[test]
fn criterion_5_crypto_algebra() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let paillier_kp = paillier::keygen(TEST_BITS, &mut rng);

    use num_bigint::RandBigInt;
    for _ in 0..1000 {
        let m1 = rng.gen_biguint_below(paillier_kp.public.modulus());
        let m2 = rng.gen_biguint_below(paillier_kp.public.modulus());
        let c1 = paillier::enc(&paillier_kp.public, &m1, &mut rng).unwrap();
        let c2 = paillier::enc(&paillier_kp.public, &m2, &mut rng).unwrap();
        let sum = paillier::add(&paillier_kp.public, &c1, &c2).unwrap();
        let got = paillier::dec(&paillier_kp.public, &paillier_kp.secret, &sum).unwrap();
        assert_eq!(got, (m1 + m2) % paillier_kp.public.modulus());
    }

    let tdp_kp = tdp::keygen(TEST_BITS, &mut rng);
    for _ in 0..1000 {
        let x = tdp::sample(&tdp_kp.public, &mut rng);
        let y = tdp::inverse(&tdp_kp, &x).unwrap();
        assert_eq!(tdp::forward(&tdp_kp.public, &y).unwrap(), x);
    }
    // Chain identity: forward^(j-i) of inverse^j equals inverse^i.
    let start = tdp::sample(&tdp_kp.public, &mut rng);
    let mut chain = vec![start];
    for _ in 0..64 {
        let next = tdp::inverse(&tdp_kp, chain.last().unwrap()).unwrap();
        chain.push(next);
    }
    for i in 0..=64usize {
        let mut st = chain[64].clone();
        for _ in i..64 {
            st = tdp::forward(&tdp_kp.public, &st).unwrap();
        }
        assert_eq!(st, chain[i]);
    }
    pass("criterion 5: Paillier homomorphic addition and permutation chain identities, 1000 trials");
}

/// Criterion 6: growth-heavy workloads (at least three capacity
/// doublings) keep oracle equivalence, and the scheme-A transcript shows
/// no token ever repeating across chains (the audit's freshness check
/// walks every chain the server could derive).
#[test]
fn criterion_6_growth_correctness() {
    let report = run_workload(&WorkloadSpec {
        seed: 61,
        scheme: Scheme::A,
        max_value: 256,
        adds: 600,
        queries: 200,
        modulus_bits: TEST_BITS,
        audit: true,
        ..Default::default()
    })
    .unwrap();
    assert!(report.capacity_doublings >= 3, "only {} doublings", report.capacity_doublings);
    assert_eq!(report.mismatches, 0, "{}", report.render());
    let audit = report.audit.as_ref().expect("audit requested");
    assert!(audit.passed(), "{}", audit.render());

    let report = run_workload(&WorkloadSpec {
        seed: 62,
        scheme: Scheme::B,
        max_value: 256,
        adds: 400,
        queries: 200,
        del_ratio: 0.3,
        modulus_bits: TEST_BITS,
        mask_width: 256,
        audit: true,
        ..Default::default()
    })
    .unwrap();
    assert!(report.capacity_doublings >= 3, "only {} doublings", report.capacity_doublings);
    assert_eq!(report.mismatches, 0, "{}", report.render());
    assert!(report.audit.as_ref().unwrap().passed());
    pass("criterion 6: three-plus capacity doublings with oracle equivalence and fresh tokens");
}

/// Criterion 7: leakage audits pass on honest transcripts, and the
/// forward audit catches a client that reuses a search token.
#[test]
fn criterion_7_leakage_audits() {
    // Honest scheme A.
    let report = run_workload(&WorkloadSpec {
        seed: 71,
        scheme: Scheme::A,
        max_value: 64,
        adds: 200,
        queries: 60,
        modulus_bits: TEST_BITS,
        audit: true,
        ..Default::default()
    })
    .unwrap();
    let audit = report.audit.as_ref().unwrap();
    assert!(audit.passed(), "{}", audit.render());

    // Honest scheme B, including deleted-document absence.
    let report = run_workload(&WorkloadSpec {
        seed: 72,
        scheme: Scheme::B,
        max_value: 64,
        adds: 200,
        queries: 60,
        del_ratio: 0.35,
        modulus_bits: TEST_BITS,
        mask_width: 256,
        audit: true,
        ..Default::default()
    })
    .unwrap();
    assert!(report.dels > 0);
    let audit = report.audit.as_ref().unwrap();
    assert!(audit.passed(), "{}", audit.render());
    assert!(audit
        .checks
        .iter()
        .any(|c| c.name == "deleted-doc-absence" && c.passed));

    // Fault injection: a client that fails to advance its chain re-derives
    // the same update token. The audit must fail and name both events.
    let mut rng = ChaCha20Rng::seed_from_u64(73);
    let (mut client, mut index) = scheme_a::setup_a(TEST_BITS, &mut rng);
    let mut transcript = Transcript::new();
    let mut last_token = None;
    for v in 0..4u64 {
        let t = transcript.begin_op();
        let messages = client.update_at(v, &doc(v), &mut rng).unwrap();
        let fanout = messages.len() as u32;
        for (label, msg) in &messages {
            transcript.record_update(
                t,
                *label,
                UpdateOp::Add,
                doc(v),
                wire::payload_bytes(&Message::from_update_a(msg)),
                fanout,
            );
            scheme_a::server_update_a(&mut index, msg).unwrap();
            last_token = Some(msg.token);
        }
    }
    // The buggy emission: same token as an existing posting.
    let t = transcript.begin_op();
    let forged = UpdateMessageA { token: last_token.unwrap(), masked_id: [0x42; 16] };
    transcript.record_update(
        t,
        NodeLabel(0),
        UpdateOp::Add,
        doc(99),
        wire::payload_bytes(&Message::from_update_a(&forged)),
        1,
    );
    let audit = audit_forward_a(&transcript, client.tdp_public());
    assert!(!audit.passed());
    let freshness = audit
        .checks
        .iter()
        .find(|c| c.name == "update-token-freshness")
        .unwrap();
    assert!(!freshness.passed);
    assert!(freshness.details.contains("reuses token"), "{}", freshness.details);
    pass("criterion 7: audits pass honest transcripts and fail the token-reuse fixture");
}

/// Criterion 8: acknowledged mutations survive a crash; replaying the
/// store file yields search results identical to the uninterrupted run.
#[test]
fn criterion_8_crash_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);

    // Scheme A.
    let path = dir.path().join("a.rdsse");
    let (mut client, live_index) = scheme_a::setup_a(TEST_BITS, &mut rng);
    let mut store = PersistentStore::create(&path, live_index, None).unwrap();
    for i in 0..120u64 {
        let v = i % 32;
        for (_, m) in client.update_at(v, &doc(i), &mut rng).unwrap() {
            store.apply(&StoreMutation::UpdateA(m)).unwrap();
        }
    }
    let uninterrupted = store.index().clone();
    drop(store); // crash: no shutdown path, no compaction
    let recovered = load(&path).unwrap().index;
    assert_eq!(recovered, uninterrupted);
    for (a, b) in [(0u64, 31u64), (3, 17), (5, 5), (0, 70)] {
        let mut live_ids = Vec::new();
        let mut recovered_ids = Vec::new();
        for (_, req) in client.search(a, b).unwrap() {
            live_ids.push(scheme_a::server_search_a(&uninterrupted, &req).unwrap());
            recovered_ids.push(scheme_a::server_search_a(&recovered, &req).unwrap());
        }
        assert_eq!(
            client.collect_results(&live_ids),
            client.collect_results(&recovered_ids)
        );
    }

    // Scheme B with deletes and a mid-run snapshot.
    let path = dir.path().join("b.rdsse");
    let (mut client, live_index) = scheme_b::setup_b(TEST_BITS, 128, &mut rng).unwrap();
    let mut store = PersistentStore::create(&path, live_index, Some(64)).unwrap();
    let mut live_docs = Vec::new();
    for i in 0..90u64 {
        let v = i % 16;
        let batch = client.update_at(UpdateOp::Add, v, &doc(i), &mut rng).unwrap();
        for (_, c) in &batch.copies {
            store.apply(&StoreMutation::CopyB(*c)).unwrap();
        }
        for (_, m) in &batch.updates {
            store.apply(&StoreMutation::UpdateB(m.clone())).unwrap();
        }
        live_docs.push((doc(i), v));
        if i % 3 == 0 {
            let (ind, value) = live_docs.swap_remove(0);
            let batch = client.update(UpdateOp::Del, value, &ind, &mut rng).unwrap();
            for (_, m) in &batch.updates {
                store.apply(&StoreMutation::UpdateB(m.clone())).unwrap();
            }
        }
    }
    let uninterrupted = store.index().clone();
    drop(store);
    let recovered = load(&path).unwrap().index;
    assert_eq!(recovered, uninterrupted);
    for (a, b) in [(0u64, 15u64), (2, 9), (7, 7)] {
        let mut live_replies = Vec::new();
        let mut recovered_replies = Vec::new();
        for (_, token) in client.search(a, b).unwrap() {
            if let Some(ct) = scheme_b::server_search_b(&uninterrupted, &token).unwrap() {
                live_replies.push(ct);
            }
            if let Some(ct) = scheme_b::server_search_b(&recovered, &token).unwrap() {
                recovered_replies.push(ct);
            }
        }
        assert_eq!(
            client.decode_results(&live_replies).unwrap(),
            client.decode_results(&recovered_replies).unwrap()
        );
    }
    pass("criterion 8: crash-replayed stores answer identically to the uninterrupted run");
}

/// The spec's leakage functions agree between incremental and
/// from-scratch computation, exercised over a real workload transcript.
/// (Supports criterion 7; kept separate for visibility.)
#[test]
fn leakage_functions_incremental_vs_scratch() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (mut client, mut index) = scheme_a::setup_a(256, &mut rng);
    let mut transcript = Transcript::new();
    for i in 0..40u64 {
        let v = i % 8;
        let t = transcript.begin_op();
        let messages = client.update_at(v, &doc(i), &mut rng).unwrap();
        let fanout = messages.len() as u32;
        for (label, msg) in &messages {
            transcript.record_update(
                t,
                *label,
                UpdateOp::Add,
                doc(i),
                wire::payload_bytes(&Message::from_update_a(msg)),
                fanout,
            );
            scheme_a::server_update_a(&mut index, msg).unwrap();
        }
        if i % 4 == 0 {
            let t = transcript.begin_op();
            for (label, req) in client.search(0, v).unwrap() {
                transcript.record_search(
                    t,
                    label,
                    wire::payload_bytes(&Message::from_search_a(&req)),
                );
            }
        }
    }
    let mut incremental = rdsse::transcript::IncrementalLeakage::new();
    for event in transcript.events() {
        incremental.ingest(event);
    }
    for label in 0..16u64 {
        let n = NodeLabel(label);
        assert_eq!(incremental.sp(n), transcript.sp(n));
        assert_eq!(incremental.hist(n), transcript.hist(n));
    }
    // cp agrees between the incremental pass, a naive re-derivation, and
    // the server-view derivation from replayed plaintext result sets.
    let server_cp = transcript.cp_from_server_view_a(client.tdp_public()).unwrap();
    let mut searches_checked = 0;
    for event in transcript.events().iter().filter(|e| e.kind == EventKind::Search) {
        let cp = transcript.cp(event.node, event.t).unwrap();
        let target = transcript.db_at(event.node, event.t);
        let naive: BTreeSet<u64> = transcript
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::Search && e.t < event.t)
            .filter(|e| target.is_subset(&transcript.db_at(e.node, e.t)))
            .map(|e| e.t)
            .collect();
        assert_eq!(cp, naive);
        assert_eq!(
            Some(&cp),
            incremental.cp_at(event.node, event.t),
            "incremental cp diverged at t={}",
            event.t
        );
        assert_eq!(
            Some(&cp),
            server_cp.get(&(event.t, event.node)),
            "server-view cp diverged at t={}",
            event.t
        );
        searches_checked += 1;
    }
    assert!(searches_checked > 0);
}

/// Secret key material never appears in any server-bound byte stream or
/// in the persisted store file. The test owns the keys (built around
/// externally supplied key material), so it can scan for the exact bytes.
/// (Supports the daemon's security posture; grep-level subsequence scan.)
#[test]
fn no_secret_bytes_reach_the_server() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let dir = tempfile::tempdir().unwrap();

    // Scheme A: secrets are the PRF key and the factorization/exponent.
    let mut prf_bytes = [0u8; 32];
    rng.fill_bytes(&mut prf_bytes);
    let tdp_kp = tdp::keygen(TEST_BITS, &mut rng);
    let mut secrets: Vec<Vec<u8>> = vec![prf_bytes.to_vec()];
    {
        let (p, q, d) = tdp_kp.secret_parts();
        secrets.push(p.to_bytes_be());
        secrets.push(q.to_bytes_be());
        secrets.push(d.to_bytes_be());
    }
    let mut client =
        scheme_a::ClientStateA::with_keys(PrfKey::from_bytes(prf_bytes), tdp_kp.clone());
    let path = dir.path().join("a.rdsse");
    let mut store =
        PersistentStore::create(&path, EncryptedIndex::new_a(client.tdp_public()), None).unwrap();
    let mut server_bytes: Vec<u8> = Vec::new();
    for i in 0..40u64 {
        for (_, m) in client.update_at(i % 8, &doc(i), &mut rng).unwrap() {
            server_bytes.extend(wire::payload_bytes(&Message::from_update_a(&m)));
            store.apply(&StoreMutation::UpdateA(m)).unwrap();
        }
    }
    for (_, req) in client.search(0, 7).unwrap() {
        server_bytes.extend(wire::payload_bytes(&Message::from_search_a(&req)));
    }
    drop(store);
    server_bytes.extend(std::fs::read(&path).unwrap());
    for secret in &secrets {
        assert!(
            !contains_subslice(&server_bytes, secret),
            "scheme A secret bytes leaked into server-visible data"
        );
    }

    // Scheme B: PRF key and the Paillier trapdoor.
    let mut prf_bytes = [0u8; 32];
    rng.fill_bytes(&mut prf_bytes);
    let paillier_kp = paillier::keygen(TEST_BITS, &mut rng);
    let (beta, mu) = paillier_kp.secret.parts();
    let secrets = [prf_bytes.to_vec(), beta.to_bytes_be(), mu.to_bytes_be()];
    let mut client = scheme_b::ClientStateB::with_keys(
        PrfKey::from_bytes(prf_bytes),
        paillier_kp.clone(),
        64,
    )
    .unwrap();
    let path = dir.path().join("b.rdsse");
    let index = EncryptedIndex::new_b(client.paillier_public(), client.mask_width());
    let mut store = PersistentStore::create(&path, index, None).unwrap();
    let width = client.paillier_public().ciphertext_width();
    let mut server_bytes: Vec<u8> = Vec::new();
    for i in 0..30u64 {
        let batch = client.update_at(UpdateOp::Add, i % 8, &doc(i), &mut rng).unwrap();
        for (_, c) in &batch.copies {
            server_bytes.extend(wire::payload_bytes(&Message::from_copy_b(c)));
            store.apply(&StoreMutation::CopyB(*c)).unwrap();
        }
        for (_, m) in &batch.updates {
            server_bytes.extend(wire::payload_bytes(&Message::from_update_b(m, width)));
            store.apply(&StoreMutation::UpdateB(m.clone())).unwrap();
        }
    }
    for (_, token) in client.search(0, 7).unwrap() {
        server_bytes.extend(wire::payload_bytes(&Message::from_search_b(&token)));
    }
    drop(store);
    server_bytes.extend(std::fs::read(&path).unwrap());
    for secret in &secrets {
        assert!(
            !contains_subslice(&server_bytes, secret),
            "scheme B secret bytes leaked into server-visible data"
        );
    }
}

fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}
