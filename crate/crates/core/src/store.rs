//! The server-held encrypted index and its durable form.
//!
//! In memory the index is a map from 32-byte update tokens to fixed-width
//! payloads (masked ids for scheme A, Paillier accumulators for scheme B),
//! plus the public parameters needed to serve searches. On disk a store is
//! one file:
//!
//! ```text
//! magic "RDSSE1" | version | scheme tag
//! params section   [len u32][crc32 u32][json]
//! snapshot section [len u32][crc32 u32][entries dump]
//! log records      [len u32][crc32 u32][msg-type byte + wire json]...
//! ```
//!
//! Every mutation is appended to the log and fsynced before it is applied
//! in memory (and therefore before it can be acknowledged). Loading
//! replays the log over the snapshot; an incomplete trailing record is
//! dropped, any other checksum failure is fatal. Snapshotting rewrites the
//! whole file atomically through a temp-file rename and truncates the log.

use crate::crypto::paillier::PaillierPublicKey;
use crate::crypto::tdp::TdpPublicKey;
use crate::crypto::{UpdateToken, TOKEN_LEN};
use crate::scheme_a::{self, UpdateMessageA};
use crate::scheme_b::{self, CopyMessage, UpdateMessageB};
use crate::wire::{self, Message};
use crate::{Error, Result, Scheme, DOC_ID_LEN};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 6] = b"RDSSE1";
const VERSION: u8 = 1;
const SCHEME_TAG_A: u8 = 0x0a;
const SCHEME_TAG_B: u8 = 0x0b;

/// Public parameters embedded in the store header: everything the server
/// needs to act on requests, nothing secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublicParams {
    A { tdp_modulus: BigUint, tdp_exponent: BigUint, id_len: u8 },
    B { paillier_n: BigUint, mask_width: u32 },
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    scheme: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    tdp_modulus: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tdp_exponent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id_len: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    paillier_n: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_width: Option<u32>,
}

impl PublicParams {
    pub fn scheme(&self) -> Scheme {
        match self {
            PublicParams::A { .. } => Scheme::A,
            PublicParams::B { .. } => Scheme::B,
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let json = match self {
            PublicParams::A { tdp_modulus, tdp_exponent, id_len } => ParamsJson {
                scheme: "a".into(),
                tdp_modulus: Some(wire::b64(&tdp_modulus.to_bytes_be())),
                tdp_exponent: Some(wire::b64(&tdp_exponent.to_bytes_be())),
                id_len: Some(*id_len),
                paillier_n: None,
                mask_width: None,
            },
            PublicParams::B { paillier_n, mask_width } => ParamsJson {
                scheme: "b".into(),
                tdp_modulus: None,
                tdp_exponent: None,
                id_len: None,
                paillier_n: Some(wire::b64(&paillier_n.to_bytes_be())),
                mask_width: Some(*mask_width),
            },
        };
        serde_json::to_vec(&json).expect("params serialize")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let json: ParamsJson = serde_json::from_slice(bytes)
            .map_err(|e| Error::StoreCorrupt(format!("params: {e}")))?;
        let field = |name: &str, v: &Option<String>| -> Result<Vec<u8>> {
            let s = v.as_ref().ok_or_else(|| {
                Error::StoreCorrupt(format!("params missing field {name}"))
            })?;
            wire::unb64(s)
        };
        match json.scheme.as_str() {
            "a" => Ok(PublicParams::A {
                tdp_modulus: BigUint::from_bytes_be(&field("tdp_modulus", &json.tdp_modulus)?),
                tdp_exponent: BigUint::from_bytes_be(&field("tdp_exponent", &json.tdp_exponent)?),
                id_len: json.id_len.unwrap_or(DOC_ID_LEN as u8),
            }),
            "b" => Ok(PublicParams::B {
                paillier_n: BigUint::from_bytes_be(&field("paillier_n", &json.paillier_n)?),
                mask_width: json
                    .mask_width
                    .ok_or_else(|| Error::StoreCorrupt("params missing mask_width".into()))?,
            }),
            other => Err(Error::StoreCorrupt(format!("unknown scheme tag {other:?}"))),
        }
    }
}

/// A change to the store, in the same shape it crosses the wire. The log
/// records exactly these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreMutation {
    UpdateA(UpdateMessageA),
    UpdateB(UpdateMessageB),
    CopyB(CopyMessage),
}

/// The encrypted database: token -> payload plus public parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedIndex {
    params: PublicParams,
    entries: BTreeMap<[u8; TOKEN_LEN], Vec<u8>>,
}

impl EncryptedIndex {
    pub fn new_a(tpk: &TdpPublicKey) -> Self {
        EncryptedIndex {
            params: PublicParams::A {
                tdp_modulus: tpk.modulus().clone(),
                tdp_exponent: tpk.exponent().clone(),
                id_len: DOC_ID_LEN as u8,
            },
            entries: BTreeMap::new(),
        }
    }

    pub fn new_b(pk: &PaillierPublicKey, mask_width: u32) -> Self {
        EncryptedIndex {
            params: PublicParams::B { paillier_n: pk.modulus().clone(), mask_width },
            entries: BTreeMap::new(),
        }
    }

    pub fn from_params(params: PublicParams) -> Self {
        EncryptedIndex { params, entries: BTreeMap::new() }
    }

    pub fn scheme(&self) -> Scheme {
        self.params.scheme()
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    pub fn require_scheme(&self, scheme: Scheme) -> Result<()> {
        if self.scheme() != scheme {
            return Err(Error::SchemeMismatch { store: self.scheme(), request: scheme });
        }
        Ok(())
    }

    /// Width every payload in this store must have.
    pub fn payload_width(&self) -> usize {
        match &self.params {
            PublicParams::A { id_len, .. } => *id_len as usize,
            PublicParams::B { paillier_n, .. } => {
                2 * (paillier_n.bits() as usize).div_ceil(8)
            }
        }
    }

    pub fn tdp_public(&self) -> Result<TdpPublicKey> {
        match &self.params {
            PublicParams::A { tdp_modulus, tdp_exponent, .. } => {
                Ok(TdpPublicKey::new(tdp_modulus.clone(), tdp_exponent.clone()))
            }
            PublicParams::B { .. } => {
                Err(Error::SchemeMismatch { store: Scheme::B, request: Scheme::A })
            }
        }
    }

    pub fn paillier_public(&self) -> Result<(PaillierPublicKey, u32)> {
        match &self.params {
            PublicParams::B { paillier_n, mask_width } => {
                Ok((PaillierPublicKey::new(paillier_n.clone()), *mask_width))
            }
            PublicParams::A { .. } => {
                Err(Error::SchemeMismatch { store: Scheme::A, request: Scheme::B })
            }
        }
    }

    pub fn entry_count(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn get(&self, token: &UpdateToken) -> Option<&Vec<u8>> {
        self.entries.get(&token.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[u8; TOKEN_LEN], &Vec<u8>)> {
        self.entries.iter()
    }

    pub(crate) fn insert_unchecked(&mut self, token: UpdateToken, payload: Vec<u8>) {
        debug_assert_eq!(payload.len(), self.payload_width());
        let previous = self.entries.insert(token.0, payload);
        debug_assert!(previous.is_none());
    }

    pub(crate) fn put_unchecked(&mut self, token: UpdateToken, payload: Vec<u8>) {
        debug_assert_eq!(payload.len(), self.payload_width());
        self.entries.insert(token.0, payload);
    }

    /// Validates a mutation without applying it.
    pub fn check(&self, mutation: &StoreMutation) -> Result<()> {
        match mutation {
            StoreMutation::UpdateA(m) => scheme_a::check_update_a(self, m),
            StoreMutation::UpdateB(m) => scheme_b::check_update_b(self, m),
            StoreMutation::CopyB(m) => scheme_b::check_copy_b(self, m),
        }
    }

    /// Validates and applies a mutation.
    pub fn apply(&mut self, mutation: &StoreMutation) -> Result<()> {
        match mutation {
            StoreMutation::UpdateA(m) => scheme_a::server_update_a(self, m),
            StoreMutation::UpdateB(m) => scheme_b::server_update_b(self, m),
            StoreMutation::CopyB(m) => scheme_b::server_copy_b(self, m),
        }
    }
}

fn crc(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

fn write_section(out: &mut Vec<u8>, payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc(payload).to_be_bytes());
    out.extend_from_slice(payload);
}

/// A parsed section: the payload, or the expected checksum on mismatch.
type Section<'a> = (std::result::Result<Vec<u8>, u32>, &'a [u8]);

/// Reads one `[len][crc][bytes]` section from a buffer slice. Returns the
/// payload and the remaining tail, or `None` if the section is incomplete.
fn read_section(buf: &[u8]) -> Option<Section<'_>> {
    if buf.len() < 8 {
        return None;
    }
    let len = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
    let expected_crc = u32::from_be_bytes(buf[4..8].try_into().unwrap());
    if buf.len() < 8 + len {
        return None;
    }
    let payload = buf[8..8 + len].to_vec();
    let rest = &buf[8 + len..];
    if crc(&payload) != expected_crc {
        return Some((Err(expected_crc), rest));
    }
    Some((Ok(payload), rest))
}

fn snapshot_bytes(index: &EncryptedIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&index.entry_count().to_be_bytes());
    for (token, payload) in index.entries() {
        out.extend_from_slice(token);
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(payload);
    }
    out
}

fn parse_snapshot(bytes: &[u8], index: &mut EncryptedIndex) -> Result<()> {
    let corrupt = |msg: &str| Error::StoreCorrupt(format!("snapshot: {msg}"));
    if bytes.len() < 8 {
        return Err(corrupt("short header"));
    }
    let count = u64::from_be_bytes(bytes[0..8].try_into().unwrap());
    let mut rest = &bytes[8..];
    for _ in 0..count {
        if rest.len() < TOKEN_LEN + 4 {
            return Err(corrupt("short entry"));
        }
        let mut token = [0u8; TOKEN_LEN];
        token.copy_from_slice(&rest[..TOKEN_LEN]);
        let len =
            u32::from_be_bytes(rest[TOKEN_LEN..TOKEN_LEN + 4].try_into().unwrap()) as usize;
        rest = &rest[TOKEN_LEN + 4..];
        if rest.len() < len {
            return Err(corrupt("short payload"));
        }
        index.entries.insert(token, rest[..len].to_vec());
        rest = &rest[len..];
    }
    if !rest.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(())
}

fn mutation_to_record(mutation: &StoreMutation, ciphertext_width: usize) -> Vec<u8> {
    let message = match mutation {
        StoreMutation::UpdateA(m) => Message::from_update_a(m),
        StoreMutation::UpdateB(m) => Message::from_update_b(m, ciphertext_width),
        StoreMutation::CopyB(m) => Message::from_copy_b(m),
    };
    let (msg_type, payload) = wire::encode_message(&message);
    let mut record = Vec::with_capacity(1 + payload.len());
    record.push(msg_type);
    record.extend_from_slice(&payload);
    record
}

fn record_to_mutation(record: &[u8]) -> Result<StoreMutation> {
    let corrupt = |msg: String| Error::StoreCorrupt(format!("log record: {msg}"));
    if record.is_empty() {
        return Err(corrupt("empty".into()));
    }
    let message = wire::decode_message(record[0], &record[1..])
        .map_err(|e| corrupt(e.to_string()))?;
    match message {
        Message::UpdateA(m) => Ok(StoreMutation::UpdateA(m.to_update_a()?)),
        Message::UpdateB(m) => Ok(StoreMutation::UpdateB(m.to_update_b()?)),
        Message::CopyB(m) => Ok(StoreMutation::CopyB(m.to_copy_b()?)),
        other => Err(corrupt(format!("unexpected message kind {:?}", other.kind()))),
    }
}

fn header_bytes(index: &EncryptedIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match index.scheme() {
        Scheme::A => SCHEME_TAG_A,
        Scheme::B => SCHEME_TAG_B,
    });
    write_section(&mut out, &index.params.to_json_bytes());
    write_section(&mut out, &snapshot_bytes(index));
    out
}

/// Outcome of reading a store file.
#[derive(Debug)]
pub struct LoadedStore {
    pub index: EncryptedIndex,
    pub replayed_records: u64,
    pub dropped_tail: bool,
}

/// Reads and replays a store file without keeping it open for writing.
pub fn load(path: &Path) -> Result<LoadedStore> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let corrupt = |msg: &str| Error::StoreCorrupt(msg.to_string());
    if buf.len() < MAGIC.len() + 2 || &buf[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if buf[MAGIC.len()] != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let scheme = match buf[MAGIC.len() + 1] {
        SCHEME_TAG_A => Scheme::A,
        SCHEME_TAG_B => Scheme::B,
        _ => return Err(corrupt("unknown scheme tag")),
    };
    let mut rest = &buf[MAGIC.len() + 2..];

    let (params_payload, tail) =
        read_section(rest).ok_or_else(|| corrupt("truncated params section"))?;
    let params_payload =
        params_payload.map_err(|_| corrupt("params checksum mismatch"))?;
    rest = tail;
    let params = PublicParams::from_json_bytes(&params_payload)?;
    if params.scheme() != scheme {
        return Err(corrupt("scheme tag disagrees with params"));
    }
    let mut index = EncryptedIndex::from_params(params);

    let (snapshot_payload, tail) =
        read_section(rest).ok_or_else(|| corrupt("truncated snapshot section"))?;
    let snapshot_payload =
        snapshot_payload.map_err(|_| corrupt("snapshot checksum mismatch"))?;
    rest = tail;
    parse_snapshot(&snapshot_payload, &mut index)?;

    let mut replayed = 0u64;
    let mut dropped_tail = false;
    loop {
        if rest.is_empty() {
            break;
        }
        match read_section(rest) {
            None => {
                // Torn trailing write: drop it.
                dropped_tail = true;
                break;
            }
            Some((Err(_), _)) => {
                return Err(corrupt("log record checksum mismatch"));
            }
            Some((Ok(record), tail)) => {
                let mutation = record_to_mutation(&record)?;
                index
                    .apply(&mutation)
                    .map_err(|e| corrupt(&format!("log replay failed: {e}")))?;
                replayed += 1;
                rest = tail;
            }
        }
    }
    Ok(LoadedStore { index, replayed_records: replayed, dropped_tail })
}

/// A store bound to its on-disk file. Mutations are logged and fsynced
/// before they touch the in-memory index.
pub struct PersistentStore {
    index: EncryptedIndex,
    file: File,
    path: PathBuf,
    records_since_snapshot: u64,
    snapshot_every: Option<u64>,
}

impl PersistentStore {
    /// Creates a fresh store file. Fails if the path already exists.
    pub fn create(
        path: &Path,
        index: EncryptedIndex,
        snapshot_every: Option<u64>,
    ) -> Result<Self> {
        let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
        file.write_all(&header_bytes(&index))?;
        file.sync_data()?;
        Ok(PersistentStore {
            index,
            file,
            path: path.to_path_buf(),
            records_since_snapshot: 0,
            snapshot_every,
        })
    }

    /// Opens and replays an existing store file.
    pub fn open(path: &Path, snapshot_every: Option<u64>) -> Result<Self> {
        let loaded = load(path)?;
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        if loaded.dropped_tail {
            // Truncate the torn record so appended records stay parseable.
            let keep = scan_valid_prefix_len(path)?;
            file.set_len(keep)?;
            file.sync_data()?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(PersistentStore {
            index: loaded.index,
            file,
            path: path.to_path_buf(),
            records_since_snapshot: loaded.replayed_records,
            snapshot_every,
        })
    }

    pub fn index(&self) -> &EncryptedIndex {
        &self.index
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates, durably logs, then applies one mutation. Returning `Ok`
    /// means the mutation is on disk.
    pub fn apply(&mut self, mutation: &StoreMutation) -> Result<()> {
        self.index.check(mutation)?;
        let record = mutation_to_record(mutation, self.index.payload_width());
        let mut framed = Vec::with_capacity(8 + record.len());
        write_section(&mut framed, &record);
        self.file.write_all(&framed)?;
        self.file.sync_data()?;
        self.index.apply(mutation).expect("checked mutation must apply");
        self.records_since_snapshot += 1;
        if let Some(every) = self.snapshot_every {
            if self.records_since_snapshot >= every {
                self.snapshot()?;
            }
        }
        Ok(())
    }

    /// Compacts the file: current entries become the snapshot, the log
    /// empties. Atomic via temp-file rename.
    pub fn snapshot(&mut self) -> Result<()> {
        let tmp_path = self.path.with_extension("tmp");
        {
            let mut tmp = OpenOptions::new()
                .write(true)
                .create(true)
                .truncate(true)
                .open(&tmp_path)?;
            tmp.write_all(&header_bytes(&self.index))?;
            tmp.sync_data()?;
        }
        std::fs::rename(&tmp_path, &self.path)?;
        if let Some(dir) = self.path.parent() {
            // Make the rename itself durable.
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_data();
            }
        }
        let mut file = OpenOptions::new().read(true).write(true).open(&self.path)?;
        file.seek(SeekFrom::End(0))?;
        self.file = file;
        self.records_since_snapshot = 0;
        Ok(())
    }
}

/// Length of the file prefix that parses cleanly (header + whole records).
fn scan_valid_prefix_len(path: &Path) -> Result<u64> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let mut offset = MAGIC.len() + 2;
    for _ in 0..2 {
        // params, snapshot
        let Some((_, tail)) = read_section(&buf[offset..]) else {
            return Err(Error::StoreCorrupt("header sections truncated".into()));
        };
        offset = buf.len() - tail.len();
    }
    while let Some((Ok(_), tail)) = read_section(&buf[offset..]) {
        offset = buf.len() - tail.len();
    }
    Ok(offset as u64)
}
