//! Client keystore files: all client secrets and state, versioned binary,
//! written atomically with owner-only permissions. Nothing here is ever
//! sent to a server.

use crate::crypto::paillier::{PaillierKeypair, PaillierPublicKey, PaillierSecretKey};
use crate::crypto::tdp::{SearchToken, TdpKeypair};
use crate::crypto::{PrfKey, TOKEN_LEN};
use crate::scheme_a::{ChainSegment, ClientStateA, NodeChain};
use crate::scheme_b::{ClientStateB, SlotAssignment, SlotDirectory};
use crate::shadow::ShadowDb;
use crate::tree::{NodeLabel, TreeGeometry};
use crate::{DocId, Error, Result, Scheme, DOC_ID_LEN};
use num_bigint::BigUint;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"RDSSEKS1";
const VERSION: u8 = 1;
const SCHEME_TAG_A: u8 = 0x0a;
const SCHEME_TAG_B: u8 = 0x0b;

fn bad(msg: &str) -> Error {
    Error::Keystore(msg.to_string())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn var_bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.bytes(b);
    }

    fn bigint(&mut self, v: &BigUint) {
        self.var_bytes(&v.to_bytes_be());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(bad("truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn var_bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn bigint(&mut self) -> Result<BigUint> {
        Ok(BigUint::from_bytes_be(self.var_bytes()?))
    }

    fn done(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(bad("trailing bytes"))
        }
    }
}

/// Writes atomically: temp file in the same directory, fsync, rename.
/// Mode 0600 on unix.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut opts = std::fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut file = opts.open(&tmp)?;
        file.write_all(bytes)?;
        file.sync_data()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_keystore(path: &Path, expect_scheme: u8) -> Result<Vec<u8>> {
    let buf = std::fs::read(path)?;
    if buf.len() < MAGIC.len() + 2 || &buf[..MAGIC.len()] != MAGIC {
        return Err(bad("bad magic"));
    }
    if buf[MAGIC.len()] != VERSION {
        return Err(bad("unsupported version"));
    }
    if buf[MAGIC.len() + 1] != expect_scheme {
        return Err(bad("keystore holds the other scheme"));
    }
    Ok(buf[MAGIC.len() + 2..].to_vec())
}

/// Scheme detection without full parsing.
pub fn scheme_of(path: &Path) -> Result<Scheme> {
    let buf = std::fs::read(path)?;
    if buf.len() < MAGIC.len() + 2 || &buf[..MAGIC.len()] != MAGIC {
        return Err(bad("bad magic"));
    }
    match buf[MAGIC.len() + 1] {
        SCHEME_TAG_A => Ok(Scheme::A),
        SCHEME_TAG_B => Ok(Scheme::B),
        _ => Err(bad("unknown scheme tag")),
    }
}

pub fn save_client_a(path: &Path, client: &ClientStateA) -> Result<()> {
    let (prf_key, tdp, geo, chains) = client.parts();
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u8(VERSION);
    w.u8(SCHEME_TAG_A);
    w.bytes(prf_key.as_bytes());
    let (p, q, d) = tdp.secret_parts();
    w.bigint(p);
    w.bigint(q);
    w.bigint(d);
    w.u64(geo.value_count());
    let token_width = tdp.public.token_width() as u32;
    w.u32(token_width);
    w.u64(chains.len() as u64);
    for (label, chain) in chains {
        w.u64(*label);
        w.u64(chain.base_counter);
        w.u64(chain.emitted);
        w.bytes(chain.head.as_bytes());
        w.u32(chain.inherited.len() as u32);
        for seg in &chain.inherited {
            w.u64(seg.key_label.0);
            w.u64(seg.from_counter);
            w.u64(seg.to_counter);
            w.bytes(seg.head.as_bytes());
        }
    }
    write_atomic(path, &w.buf)
}

pub fn load_client_a(path: &Path) -> Result<ClientStateA> {
    let body = read_keystore(path, SCHEME_TAG_A)?;
    let mut r = Reader { buf: &body };
    let prf_key = PrfKey::from_bytes(
        r.take(TOKEN_LEN)?.try_into().map_err(|_| bad("prf key"))?,
    );
    let p = r.bigint()?;
    let q = r.bigint()?;
    let d = r.bigint()?;
    let tdp = TdpKeypair::from_parts(p, q, d);
    let m = r.u64()?;
    let token_width = r.u32()? as usize;
    if token_width != tdp.public.token_width() {
        return Err(bad("token width disagrees with modulus"));
    }
    let chain_count = r.u64()?;
    let mut chains = BTreeMap::new();
    for _ in 0..chain_count {
        let label = r.u64()?;
        let base_counter = r.u64()?;
        let emitted = r.u64()?;
        let head = SearchToken::from_bytes(r.take(token_width)?.to_vec());
        let inherited_count = r.u32()?;
        let mut inherited = Vec::with_capacity(inherited_count as usize);
        for _ in 0..inherited_count {
            let key_label = NodeLabel(r.u64()?);
            let from_counter = r.u64()?;
            let to_counter = r.u64()?;
            let seg_head = SearchToken::from_bytes(r.take(token_width)?.to_vec());
            inherited.push(ChainSegment { key_label, head: seg_head, from_counter, to_counter });
        }
        chains.insert(label, NodeChain { head, base_counter, emitted, inherited });
    }
    r.done()?;
    Ok(ClientStateA::from_parts(prf_key, tdp, TreeGeometry::with_values(m), chains))
}

pub fn save_client_b(path: &Path, client: &ClientStateB) -> Result<()> {
    let (prf_key, paillier, geo, mask_width, directory) = client.parts();
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u8(VERSION);
    w.u8(SCHEME_TAG_B);
    w.bytes(prf_key.as_bytes());
    let (beta, mu) = paillier.secret.parts();
    w.bigint(paillier.public.modulus());
    w.bigint(beta);
    w.bigint(mu);
    w.u64(geo.value_count());
    w.u32(mask_width);
    let (entries, free, next_slot) = directory.parts();
    w.u32(entries.len() as u32);
    for (ind, assignment) in &entries {
        w.bytes(ind.as_bytes());
        w.u32(assignment.slot);
        w.u64(assignment.value);
    }
    w.u32(free.len() as u32);
    for slot in free {
        w.u32(*slot);
    }
    w.u32(next_slot);
    write_atomic(path, &w.buf)
}

pub fn load_client_b(path: &Path) -> Result<ClientStateB> {
    let body = read_keystore(path, SCHEME_TAG_B)?;
    let mut r = Reader { buf: &body };
    let prf_key = PrfKey::from_bytes(
        r.take(TOKEN_LEN)?.try_into().map_err(|_| bad("prf key"))?,
    );
    let n = r.bigint()?;
    let beta = r.bigint()?;
    let mu = r.bigint()?;
    let paillier = PaillierKeypair {
        public: PaillierPublicKey::new(n),
        secret: PaillierSecretKey::from_parts(beta, mu),
    };
    let m = r.u64()?;
    let mask_width = r.u32()?;
    let entry_count = r.u32()?;
    let mut entries = Vec::with_capacity(entry_count as usize);
    for _ in 0..entry_count {
        let mut id = [0u8; DOC_ID_LEN];
        id.copy_from_slice(r.take(DOC_ID_LEN)?);
        let slot = r.u32()?;
        let value = r.u64()?;
        entries.push((DocId(id), SlotAssignment { slot, value }));
    }
    let free_count = r.u32()?;
    let mut free = Vec::with_capacity(free_count as usize);
    for _ in 0..free_count {
        free.push(r.u32()?);
    }
    let next_slot = r.u32()?;
    r.done()?;
    let directory = SlotDirectory::from_parts(entries, free, next_slot);
    ClientStateB::from_keys(
        prf_key,
        paillier,
        TreeGeometry::with_values(m),
        mask_width,
        directory,
    )
}

/// Shadow-database sidecar used by the CLI for verification; plain binary,
/// separate from the keystore proper.
pub fn save_shadow(path: &Path, shadow: &ShadowDb) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(b"RDSSESH1");
    let entries: Vec<_> = shadow.entries().collect();
    w.u64(entries.len() as u64);
    for (value, ids) in entries {
        w.u64(value);
        w.u32(ids.len() as u32);
        for id in ids {
            w.bytes(id.as_bytes());
        }
    }
    write_atomic(path, &w.buf)
}

pub fn load_shadow(path: &Path) -> Result<ShadowDb> {
    let buf = std::fs::read(path)?;
    if buf.len() < 8 || &buf[..8] != b"RDSSESH1" {
        return Err(bad("bad shadow magic"));
    }
    let mut r = Reader { buf: &buf[8..] };
    let value_count = r.u64()?;
    let mut entries = Vec::with_capacity(value_count as usize);
    for _ in 0..value_count {
        let value = r.u64()?;
        let id_count = r.u32()?;
        let mut ids = Vec::with_capacity(id_count as usize);
        for _ in 0..id_count {
            let mut id = [0u8; DOC_ID_LEN];
            id.copy_from_slice(r.take(DOC_ID_LEN)?);
            ids.push(DocId(id));
        }
        entries.push((value, ids));
    }
    r.done()?;
    Ok(ShadowDb::from_entries(entries))
}
