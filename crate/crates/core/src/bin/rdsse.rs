//! Operator CLI: the stateful client, the index daemon, seeded
//! verification workloads, and transcript audits.

use clap::{Args, Parser, Subcommand};
use rdsse::server::{serve, NetClient, ServeConfig};
use rdsse::store::PublicParams;
use rdsse::transcript::{audit_backward_b, audit_forward_a, Transcript, TranscriptEvent};
use rdsse::wire::{self, Message};
use rdsse::workload::{run_workload, WorkloadSpec};
use rdsse::{keystore, DocId, Error, Result, Scheme, UpdateOp, DOC_ID_LEN};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "rdsse", version, about = "Encrypted range-query index toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the index daemon hosting one encrypted store.
    Serve {
        /// Which construction the store must hold.
        #[arg(long, value_parser = Scheme::parse)]
        scheme: Scheme,
        /// Store file; created on first HELLO if absent.
        #[arg(long)]
        store: PathBuf,
        /// Listen address, e.g. 127.0.0.1:7878.
        #[arg(long)]
        listen: String,
        /// Compact the store after this many logged mutations.
        #[arg(long)]
        snapshot_every: Option<u64>,
    },
    /// Generate client keys and initialize the server store.
    Setup {
        #[arg(long, value_parser = Scheme::parse)]
        scheme: Scheme,
        #[arg(long)]
        keystore: PathBuf,
        /// Server to greet; omit to only write the keystore.
        #[arg(long)]
        server: Option<String>,
        /// Modulus size in bits (trapdoor permutation or Paillier).
        #[arg(long, default_value_t = 2048)]
        bits: usize,
        /// Scheme B: bit-string width (capacity is width - 1 documents).
        #[arg(long, default_value_t = 1024)]
        mask_width: u32,
    },
    /// Add a document at a value.
    Add {
        #[command(flatten)]
        conn: ClientConn,
        value: u64,
        /// Document id: up to 16 bytes of text, or 0x-prefixed hex.
        id: String,
    },
    /// Delete a document from a value (scheme B only).
    Del {
        #[command(flatten)]
        conn: ClientConn,
        value: u64,
        id: String,
    },
    /// Search an inclusive value range.
    Search {
        #[command(flatten)]
        conn: ClientConn,
        /// Compare the result set against the local shadow database.
        #[arg(long)]
        verify: bool,
        a: u64,
        b: u64,
    },
    /// Query store statistics.
    Stats {
        #[arg(long)]
        server: String,
    },
    /// Run a seeded end-to-end workload against an in-process server and
    /// verify every query against the plaintext oracle.
    Verify {
        #[command(flatten)]
        knobs: WorkloadKnobs,
        /// Write a machine-readable summary here.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Replay a seeded workload and report timing and message counts.
    Bench {
        #[command(flatten)]
        knobs: WorkloadKnobs,
    },
    /// Analyze a recorded transcript: leakage patterns and privacy checks.
    Audit {
        #[arg(long)]
        transcript: PathBuf,
        /// Keystore of the client that produced the transcript.
        #[arg(long)]
        keystore: PathBuf,
    },
}

#[derive(Args)]
struct ClientConn {
    #[arg(long)]
    keystore: PathBuf,
    #[arg(long)]
    server: String,
    /// Append every sent message to this transcript file.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct WorkloadKnobs {
    #[arg(long, value_parser = Scheme::parse)]
    scheme: Scheme,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Values live in [0, this).
    #[arg(long, default_value_t = 64)]
    values: u64,
    /// Number of add operations.
    #[arg(long, default_value_t = 500)]
    ops: u64,
    #[arg(long, default_value_t = 200)]
    queries: u64,
    /// Scheme B: fraction of operations that delete.
    #[arg(long, default_value_t = 0.3)]
    del_ratio: f64,
    /// Test-profile modulus size.
    #[arg(long, default_value_t = 512)]
    bits: usize,
    #[arg(long, default_value_t = 256)]
    mask_width: u32,
    /// Prefill one document at every value first.
    #[arg(long)]
    dense: bool,
    /// Skip the leakage audit pass.
    #[arg(long)]
    no_audit: bool,
}

impl WorkloadKnobs {
    fn to_spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            seed: self.seed,
            scheme: self.scheme,
            max_value: self.values,
            adds: self.ops,
            queries: self.queries,
            del_ratio: self.del_ratio,
            modulus_bits: self.bits,
            mask_width: self.mask_width,
            dense_prefill: self.dense,
            audit: !self.no_audit,
        }
    }
}

fn parse_doc_id(s: &str) -> Result<DocId> {
    if let Some(hexpart) = s.strip_prefix("0x") {
        let bytes = hex::decode(hexpart)
            .map_err(|e| Error::Protocol(format!("bad hex id: {e}")))?;
        return DocId::from_bytes(&bytes);
    }
    DocId::from_bytes(s.as_bytes())
}

fn shadow_path(keystore: &Path) -> PathBuf {
    let mut name = keystore.file_name().unwrap_or_default().to_os_string();
    name.push(".shadow");
    keystore.with_file_name(name)
}

fn load_shadow_or_empty(keystore: &Path) -> Result<rdsse::shadow::ShadowDb> {
    let path = shadow_path(keystore);
    if path.exists() {
        keystore::load_shadow(&path)
    } else {
        Ok(rdsse::shadow::ShadowDb::new())
    }
}

fn append_transcript(path: &Option<PathBuf>, events: Vec<TranscriptEvent>) -> Result<()> {
    if let Some(path) = path {
        Transcript::append_to_file(path, &events)?;
    }
    Ok(())
}

fn cmd_setup(
    scheme: Scheme,
    keystore_path: &Path,
    server: Option<String>,
    bits: usize,
    mask_width: u32,
) -> Result<()> {
    let mut rng = rand::rngs::OsRng;
    let params = match scheme {
        Scheme::A => {
            let client = rdsse::scheme_a::ClientStateA::generate(bits, &mut rng);
            let params = PublicParams::A {
                tdp_modulus: client.tdp_public().modulus().clone(),
                tdp_exponent: client.tdp_public().exponent().clone(),
                id_len: DOC_ID_LEN as u8,
            };
            keystore::save_client_a(keystore_path, &client)?;
            params
        }
        Scheme::B => {
            let client = rdsse::scheme_b::ClientStateB::generate(bits, mask_width, &mut rng)?;
            let params = PublicParams::B {
                paillier_n: client.paillier_public().modulus().clone(),
                mask_width,
            };
            keystore::save_client_b(keystore_path, &client)?;
            params
        }
    };
    keystore::save_shadow(&shadow_path(keystore_path), &rdsse::shadow::ShadowDb::new())?;
    println!("keystore written to {}", keystore_path.display());
    if let Some(addr) = server {
        let mut net = NetClient::connect(&addr)?;
        net.hello(&params)?;
        println!("server {addr} initialized for scheme {scheme}");
    }
    Ok(())
}

fn cmd_add(conn: &ClientConn, value: u64, id: &str) -> Result<()> {
    let ind = parse_doc_id(id)?;
    let mut shadow = load_shadow_or_empty(&conn.keystore)?;
    let mut net = NetClient::connect(&conn.server)?;
    let mut events = Vec::new();
    match keystore::scheme_of(&conn.keystore)? {
        Scheme::A => {
            let mut client = keystore::load_client_a(&conn.keystore)?;
            let messages = client.update_at(value, &ind, &mut rand::rngs::OsRng)?;
            // Persist the advanced chain state before transmitting: a crash
            // between save and send loses postings but can never reuse a
            // token.
            keystore::save_client_a(&conn.keystore, &client)?;
            let fanout = messages.len() as u32;
            for (label, msg) in &messages {
                net.update_a(msg)?;
                events.push(TranscriptEvent {
                    t: 0,
                    kind: rdsse::transcript::EventKind::Update,
                    node: *label,
                    op: Some(UpdateOp::Add),
                    ind: Some(ind),
                    wire_bytes: wire::payload_bytes(&Message::from_update_a(msg)),
                    keywords_touched: fanout,
                });
            }
            println!("added {} at value {value} ({fanout} postings)", ind.display());
        }
        Scheme::B => {
            let mut client = keystore::load_client_b(&conn.keystore)?;
            let width = client.paillier_public().ciphertext_width();
            let batch = client.update_at(UpdateOp::Add, value, &ind, &mut rand::rngs::OsRng)?;
            keystore::save_client_b(&conn.keystore, &client)?;
            for (label, copy) in &batch.copies {
                net.copy_b(copy)?;
                events.push(TranscriptEvent {
                    t: 0,
                    kind: rdsse::transcript::EventKind::Copy,
                    node: *label,
                    op: None,
                    ind: None,
                    wire_bytes: wire::payload_bytes(&Message::from_copy_b(copy)),
                    keywords_touched: 0,
                });
            }
            let fanout = batch.updates.len() as u32;
            for (label, msg) in &batch.updates {
                net.update_b(msg, width)?;
                events.push(TranscriptEvent {
                    t: 0,
                    kind: rdsse::transcript::EventKind::Update,
                    node: *label,
                    op: Some(UpdateOp::Add),
                    ind: Some(ind),
                    wire_bytes: wire::payload_bytes(&Message::from_update_b(msg, width)),
                    keywords_touched: fanout,
                });
            }
            println!(
                "added {} at value {value} ({fanout} accumulator updates, {} copies)",
                ind.display(),
                batch.copies.len()
            );
        }
    }
    shadow.add(value, ind);
    keystore::save_shadow(&shadow_path(&conn.keystore), &shadow)?;
    append_transcript(&conn.transcript, events)
}

fn cmd_del(conn: &ClientConn, value: u64, id: &str) -> Result<()> {
    let ind = parse_doc_id(id)?;
    match keystore::scheme_of(&conn.keystore)? {
        Scheme::A => Err(Error::UnsupportedByA("delete")),
        Scheme::B => {
            let mut shadow = load_shadow_or_empty(&conn.keystore)?;
            let mut client = keystore::load_client_b(&conn.keystore)?;
            let width = client.paillier_public().ciphertext_width();
            let mut net = NetClient::connect(&conn.server)?;
            let batch = client.update(UpdateOp::Del, value, &ind, &mut rand::rngs::OsRng)?;
            keystore::save_client_b(&conn.keystore, &client)?;
            let mut events = Vec::new();
            let fanout = batch.updates.len() as u32;
            for (label, msg) in &batch.updates {
                net.update_b(msg, width)?;
                events.push(TranscriptEvent {
                    t: 0,
                    kind: rdsse::transcript::EventKind::Update,
                    node: *label,
                    op: Some(UpdateOp::Del),
                    ind: Some(ind),
                    wire_bytes: wire::payload_bytes(&Message::from_update_b(msg, width)),
                    keywords_touched: fanout,
                });
            }
            shadow.del(value, &ind)?;
            keystore::save_shadow(&shadow_path(&conn.keystore), &shadow)?;
            append_transcript(&conn.transcript, events)?;
            println!("deleted {} from value {value}", ind.display());
            Ok(())
        }
    }
}

fn cmd_search(conn: &ClientConn, verify: bool, a: u64, b: u64) -> Result<()> {
    let mut net = NetClient::connect(&conn.server)?;
    let mut events = Vec::new();
    let (results, clamped_b): (Vec<DocId>, u64) = match keystore::scheme_of(&conn.keystore)? {
        Scheme::A => {
            let client = keystore::load_client_a(&conn.keystore)?;
            let m = client.value_count();
            let requests = client.search(a, b)?;
            let mut collected = Vec::new();
            for (label, request) in &requests {
                events.push(TranscriptEvent {
                    t: 0,
                    kind: rdsse::transcript::EventKind::Search,
                    node: *label,
                    op: None,
                    ind: None,
                    wire_bytes: wire::payload_bytes(&Message::from_search_a(request)),
                    keywords_touched: 0,
                });
                collected.push(net.search_a(request)?);
            }
            (client.collect_results(&collected), b.min(m.saturating_sub(1)))
        }
        Scheme::B => {
            let client = keystore::load_client_b(&conn.keystore)?;
            let m = client.value_count();
            let tokens = client.search(a, b)?;
            let mut replies = Vec::new();
            for (label, token) in &tokens {
                events.push(TranscriptEvent {
                    t: 0,
                    kind: rdsse::transcript::EventKind::Search,
                    node: *label,
                    op: None,
                    ind: None,
                    wire_bytes: wire::payload_bytes(&Message::from_search_b(token)),
                    keywords_touched: 0,
                });
                if let Some(ct) = net.search_b(token)? {
                    replies.push(ct);
                }
            }
            (
                client.decode_results(&replies)?.into_iter().collect(),
                b.min(m.saturating_sub(1)),
            )
        }
    };
    for id in &results {
        println!("{}", id.display());
    }
    append_transcript(&conn.transcript, events)?;
    if verify {
        let shadow = load_shadow_or_empty(&conn.keystore)?;
        let want = shadow.range(a, clamped_b);
        let got: std::collections::BTreeSet<DocId> = results.iter().copied().collect();
        if got == want {
            eprintln!("verify: OK ({} documents)", got.len());
        } else {
            eprintln!(
                "verify: MISMATCH (got {}, expected {})",
                got.len(),
                want.len()
            );
            std::process::exit(1);
        }
    }
    Ok(())
}

fn report_json(report: &rdsse::workload::WorkloadReport) -> serde_json::Value {
    serde_json::json!({
        "scheme": report.scheme.as_str(),
        "seed": report.seed,
        "adds": report.adds,
        "dels": report.dels,
        "queries": report.queries_run,
        "mismatches": report.mismatches,
        "fanout_violations": report.fanout_violations,
        "token_accounting_violations": report.token_accounting_violations,
        "cover_bound_violations": report.cover_bound_violations,
        "entry_bound_violations": report.entry_bound_violations,
        "client_entries": report.client_entries,
        "client_entry_bound": report.client_entry_bound,
        "capacity_doublings": report.capacity_doublings,
        "store_entries": report.store_entries,
        "audit_passed": report.audit.as_ref().map(|a| a.passed()),
        "passed": report.passed(),
    })
}

fn cmd_verify(knobs: &WorkloadKnobs, json_out: Option<&Path>) -> Result<()> {
    let report = run_workload(&knobs.to_spec())?;
    print!("{}", report.render());
    if let Some(path) = json_out {
        std::fs::write(path, serde_json::to_string_pretty(&report_json(&report)).unwrap())?;
        println!("summary written to {}", path.display());
    }
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}

fn cmd_bench(knobs: &WorkloadKnobs) -> Result<()> {
    let spec = knobs.to_spec();
    let report = run_workload(&spec)?;
    print!("{}", report.render());
    let ops = report.adds + report.dels;
    if ops > 0 {
        println!(
            "per-update:   {:.3} ms",
            report.timing.update_total_ms as f64 / ops as f64
        );
    }
    if report.queries_run > 0 {
        println!(
            "per-query:    {:.3} ms",
            report.timing.search_total_ms as f64 / report.queries_run as f64
        );
    }
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}

fn cmd_audit(transcript_path: &Path, keystore_path: &Path) -> Result<()> {
    let transcript = Transcript::load(transcript_path)?;
    let report = match keystore::scheme_of(keystore_path)? {
        Scheme::A => {
            let client = keystore::load_client_a(keystore_path)?;
            audit_forward_a(&transcript, client.tdp_public())
        }
        Scheme::B => {
            let client = keystore::load_client_b(keystore_path)?;
            audit_backward_b(&transcript, &client)
        }
    };
    print!("{}", report.render());
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Serve { scheme, store, listen, snapshot_every } => {
            // RDSSE_STORE_DIR rebases relative store paths.
            let store_path = match std::env::var_os("RDSSE_STORE_DIR") {
                Some(dir) if store.is_relative() => PathBuf::from(dir).join(store),
                _ => store.clone(),
            };
            serve(&ServeConfig {
                store_path,
                listen: listen.clone(),
                scheme: Some(*scheme),
                snapshot_every: *snapshot_every,
            })
        }
        Command::Setup { scheme, keystore, server, bits, mask_width } => {
            cmd_setup(*scheme, keystore, server.clone(), *bits, *mask_width)
        }
        Command::Add { conn, value, id } => cmd_add(conn, *value, id),
        Command::Del { conn, value, id } => cmd_del(conn, *value, id),
        Command::Search { conn, verify, a, b } => cmd_search(conn, *verify, *a, *b),
        Command::Stats { server } => {
            let mut net = NetClient::connect(server)?;
            let (entries, scheme) = net.stats()?;
            println!("entries: {entries}");
            println!("scheme:  {scheme}");
            Ok(())
        }
        Command::Verify { knobs, json_out } => cmd_verify(knobs, json_out.as_deref()),
        Command::Bench { knobs } => cmd_bench(knobs),
        Command::Audit { transcript, keystore } => cmd_audit(transcript, keystore),
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err}");
        std::process::exit(2);
    }
}
