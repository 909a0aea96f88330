//! C ABI for the encrypted range-query index.
//!
//! Handles are opaque pointers created and destroyed by this library;
//! every fallible call returns an [`RdsseStatus`] and leaves a description
//! of the last failure in thread-local storage
//! (see [`rdsse_last_error_message`]).
//!
//! The header is generated into `include/rdsse.h` at build time.

use rdsse::crypto::paillier::Ciphertext;
use rdsse::scheme_a::ClientStateA;
use rdsse::scheme_b::ClientStateB;
use rdsse::store::EncryptedIndex;
use rdsse::{DocId, Error, Scheme, UpdateOp, DOC_ID_LEN};
use std::cell::RefCell;
use std::os::raw::c_char;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdsseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ContractViolation = 3,
    CapacityExhausted = 4,
    SchemeMismatch = 5,
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(err: &Error) -> RdsseStatus {
    let status = match err {
        Error::InvalidRange { .. }
        | Error::ValueOutOfRange { .. }
        | Error::LabelOutOfRange { .. }
        | Error::DocIdTooLong(_)
        | Error::MaskWidthTooLarge { .. }
        | Error::SlotOutOfRange { .. } => RdsseStatus::InvalidArgument,
        Error::DocAlreadyPresent
        | Error::DocNotPresent { .. }
        | Error::ValueAhead { .. }
        | Error::DuplicateUpdateToken
        | Error::CopyDestinationExists
        | Error::UnsupportedByA(_) => RdsseStatus::ContractViolation,
        Error::CapacityExhausted { .. } => RdsseStatus::CapacityExhausted,
        Error::SchemeMismatch { .. } => RdsseStatus::SchemeMismatch,
        _ => RdsseStatus::Internal,
    };
    LAST_ERROR.with(|slot| *slot.borrow_mut() = err.to_string());
    status
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().clear());
}

/// Client handle for the forward-private construction.
pub struct RdsseClientA {
    inner: ClientStateA,
}

/// Client handle for the backward-private construction.
pub struct RdsseClientB {
    inner: ClientStateB,
}

/// An in-process encrypted store (either construction).
pub struct RdsseStore {
    inner: EncryptedIndex,
}

/// A search result set: fixed-width document ids.
pub struct RdsseResults {
    ids: Vec<DocId>,
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn rdsse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message for this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be NULL (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn rdsse_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn doc_id_from_raw(ptr: *const u8, len: usize) -> Result<DocId, RdsseStatus> {
    if ptr.is_null() {
        return Err(RdsseStatus::NullArgument);
    }
    let bytes = unsafe { std::slice::from_raw_parts(ptr, len) };
    DocId::from_bytes(bytes).map_err(|e| set_error(&e))
}

/// Creates a scheme-A client. `modulus_bits` of 0 selects the default
/// (2048); the test profile uses 512.
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rdsse_client_a_new(
    modulus_bits: usize,
    out: *mut *mut RdsseClientA,
) -> RdsseStatus {
    if out.is_null() {
        return RdsseStatus::NullArgument;
    }
    let bits = if modulus_bits == 0 { 2048 } else { modulus_bits };
    if bits < 64 || bits % 2 != 0 {
        return RdsseStatus::InvalidArgument;
    }
    clear_error();
    let client = ClientStateA::generate(bits, &mut rand::rngs::OsRng);
    *out = Box::into_raw(Box::new(RdsseClientA { inner: client }));
    RdsseStatus::Ok
}

/// # Safety
/// `client` must be a live handle from [`rdsse_client_a_new`]; it is
/// consumed.
#[no_mangle]
pub unsafe extern "C" fn rdsse_client_a_free(client: *mut RdsseClientA) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}

/// Creates a scheme-B client. `modulus_bits` 0 selects 2048 and
/// `mask_width` 0 selects 1024 (1023 document slots).
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rdsse_client_b_new(
    modulus_bits: usize,
    mask_width: u32,
    out: *mut *mut RdsseClientB,
) -> RdsseStatus {
    if out.is_null() {
        return RdsseStatus::NullArgument;
    }
    let bits = if modulus_bits == 0 { 2048 } else { modulus_bits };
    let width = if mask_width == 0 { 1024 } else { mask_width };
    if bits < 64 || bits % 2 != 0 {
        return RdsseStatus::InvalidArgument;
    }
    clear_error();
    match ClientStateB::generate(bits, width, &mut rand::rngs::OsRng) {
        Ok(client) => {
            *out = Box::into_raw(Box::new(RdsseClientB { inner: client }));
            RdsseStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// # Safety
/// `client` must be a live handle from [`rdsse_client_b_new`]; it is
/// consumed.
#[no_mangle]
pub unsafe extern "C" fn rdsse_client_b_free(client: *mut RdsseClientB) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}

/// Creates the empty store matching a scheme-A client's public key.
///
/// # Safety
/// `client` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsse_store_a_new(
    client: *const RdsseClientA,
    out: *mut *mut RdsseStore,
) -> RdsseStatus {
    if client.is_null() || out.is_null() {
        return RdsseStatus::NullArgument;
    }
    let index = EncryptedIndex::new_a((*client).inner.tdp_public());
    *out = Box::into_raw(Box::new(RdsseStore { inner: index }));
    RdsseStatus::Ok
}

/// Creates the empty store matching a scheme-B client's public key.
///
/// # Safety
/// `client` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsse_store_b_new(
    client: *const RdsseClientB,
    out: *mut *mut RdsseStore,
) -> RdsseStatus {
    if client.is_null() || out.is_null() {
        return RdsseStatus::NullArgument;
    }
    let c = &(*client).inner;
    let index = EncryptedIndex::new_b(c.paillier_public(), c.mask_width());
    *out = Box::into_raw(Box::new(RdsseStore { inner: index }));
    RdsseStatus::Ok
}

/// # Safety
/// `store` must be a live handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn rdsse_store_free(store: *mut RdsseStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Number of entries held by a store.
///
/// # Safety
/// `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn rdsse_store_entry_count(store: *const RdsseStore) -> u64 {
    if store.is_null() {
        return 0;
    }
    (*store).inner.entry_count()
}

/// Adds a document at a value through the full scheme-A pipeline. The
/// value may be any index at or beyond the current maximum; the tree grows
/// as needed.
///
/// # Safety
/// `client` and `store` must be live handles created by this library;
/// `ind` must point to `ind_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn rdsse_a_add(
    client: *mut RdsseClientA,
    store: *mut RdsseStore,
    value: u64,
    ind: *const u8,
    ind_len: usize,
) -> RdsseStatus {
    if client.is_null() || store.is_null() {
        return RdsseStatus::NullArgument;
    }
    let id = match doc_id_from_raw(ind, ind_len) {
        Ok(id) => id,
        Err(status) => return status,
    };
    clear_error();
    let client = &mut (*client).inner;
    let store = &mut (*store).inner;
    let messages = match client.update_at(value, &id, &mut rand::rngs::OsRng) {
        Ok(m) => m,
        Err(e) => return set_error(&e),
    };
    for (_, msg) in &messages {
        if let Err(e) = rdsse::scheme_a::server_update_a(store, msg) {
            return set_error(&e);
        }
    }
    RdsseStatus::Ok
}

/// Runs a scheme-A range search end to end and returns the deduplicated
/// result set.
///
/// # Safety
/// `client`, `store` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsse_a_search(
    client: *const RdsseClientA,
    store: *const RdsseStore,
    a: u64,
    b: u64,
    out: *mut *mut RdsseResults,
) -> RdsseStatus {
    if client.is_null() || store.is_null() || out.is_null() {
        return RdsseStatus::NullArgument;
    }
    clear_error();
    let client = &(*client).inner;
    let store = &(*store).inner;
    let requests = match client.search(a, b) {
        Ok(r) => r,
        Err(e) => return set_error(&e),
    };
    let mut results = Vec::new();
    for (_, request) in &requests {
        match rdsse::scheme_a::server_search_a(store, request) {
            Ok(res) => results.push(res),
            Err(e) => return set_error(&e),
        }
    }
    let ids = client.collect_results(&results);
    *out = Box::into_raw(Box::new(RdsseResults { ids }));
    RdsseStatus::Ok
}

unsafe fn b_update(
    client: *mut RdsseClientB,
    store: *mut RdsseStore,
    op: UpdateOp,
    value: u64,
    ind: *const u8,
    ind_len: usize,
) -> RdsseStatus {
    if client.is_null() || store.is_null() {
        return RdsseStatus::NullArgument;
    }
    let id = match doc_id_from_raw(ind, ind_len) {
        Ok(id) => id,
        Err(status) => return status,
    };
    clear_error();
    let client = &mut (*client).inner;
    let store = &mut (*store).inner;
    let batch = match client.update_at(op, value, &id, &mut rand::rngs::OsRng) {
        Ok(b) => b,
        Err(e) => return set_error(&e),
    };
    for (_, copy) in &batch.copies {
        if let Err(e) = rdsse::scheme_b::server_copy_b(store, copy) {
            return set_error(&e);
        }
    }
    for (_, msg) in &batch.updates {
        if let Err(e) = rdsse::scheme_b::server_update_b(store, msg) {
            return set_error(&e);
        }
    }
    RdsseStatus::Ok
}

/// Adds a document at a value through the full scheme-B pipeline.
///
/// # Safety
/// `client` and `store` must be live handles; `ind` must point to
/// `ind_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn rdsse_b_add(
    client: *mut RdsseClientB,
    store: *mut RdsseStore,
    value: u64,
    ind: *const u8,
    ind_len: usize,
) -> RdsseStatus {
    b_update(client, store, UpdateOp::Add, value, ind, ind_len)
}

/// Deletes a document from a value (scheme B supports deletion).
///
/// # Safety
/// Same as [`rdsse_b_add`].
#[no_mangle]
pub unsafe extern "C" fn rdsse_b_del(
    client: *mut RdsseClientB,
    store: *mut RdsseStore,
    value: u64,
    ind: *const u8,
    ind_len: usize,
) -> RdsseStatus {
    b_update(client, store, UpdateOp::Del, value, ind, ind_len)
}

/// Runs a scheme-B range search end to end: one fixed token per cover
/// node, at most one ciphertext back per token, decrypted and decoded
/// client-side.
///
/// # Safety
/// `client`, `store` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsse_b_search(
    client: *const RdsseClientB,
    store: *const RdsseStore,
    a: u64,
    b: u64,
    out: *mut *mut RdsseResults,
) -> RdsseStatus {
    if client.is_null() || store.is_null() || out.is_null() {
        return RdsseStatus::NullArgument;
    }
    clear_error();
    let client = &(*client).inner;
    let store = &(*store).inner;
    let tokens = match client.search(a, b) {
        Ok(t) => t,
        Err(e) => return set_error(&e),
    };
    let mut replies: Vec<Ciphertext> = Vec::new();
    for (_, token) in &tokens {
        match rdsse::scheme_b::server_search_b(store, token) {
            Ok(Some(ct)) => replies.push(ct),
            Ok(None) => {}
            Err(e) => return set_error(&e),
        }
    }
    match client.decode_results(&replies) {
        Ok(set) => {
            *out = Box::into_raw(Box::new(RdsseResults { ids: set.into_iter().collect() }));
            RdsseStatus::Ok
        }
        Err(e) => set_error(&e),
    }
}

/// Number of ids in a result set.
///
/// # Safety
/// `results` must be live.
#[no_mangle]
pub unsafe extern "C" fn rdsse_results_len(results: *const RdsseResults) -> usize {
    if results.is_null() {
        return 0;
    }
    (*results).ids.len()
}

/// Copies the 16-byte id at `index` into `out`.
///
/// # Safety
/// `results` must be live; `out` must point to 16 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rdsse_results_get(
    results: *const RdsseResults,
    index: usize,
    out: *mut u8,
) -> RdsseStatus {
    if results.is_null() || out.is_null() {
        return RdsseStatus::NullArgument;
    }
    let ids = &(*results).ids;
    let Some(id) = ids.get(index) else {
        return RdsseStatus::InvalidArgument;
    };
    std::ptr::copy_nonoverlapping(id.as_bytes().as_ptr(), out, DOC_ID_LEN);
    RdsseStatus::Ok
}

/// # Safety
/// `results` must be a live handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn rdsse_results_free(results: *mut RdsseResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Scheme tag of a store: 'a' or 'b'.
///
/// # Safety
/// `store` must be live.
#[no_mangle]
pub unsafe extern "C" fn rdsse_store_scheme(store: *const RdsseStore) -> c_char {
    if store.is_null() {
        return 0;
    }
    match (*store).inner.scheme() {
        Scheme::A => b'a' as c_char,
        Scheme::B => b'b' as c_char,
    }
}
