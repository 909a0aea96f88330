//! Exercises the C ABI through the exported functions, plus a sanity
//! check that the generated header exists and names them.

use rdsse_ffi::*;

fn id(tag: &str) -> Vec<u8> {
    tag.as_bytes().to_vec()
}

fn collect(results: *mut RdsseResults) -> Vec<[u8; 16]> {
    unsafe {
        let len = rdsse_results_len(results);
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let mut buf = [0u8; 16];
            assert_eq!(rdsse_results_get(results, i, buf.as_mut_ptr()), RdsseStatus::Ok);
            out.push(buf);
        }
        rdsse_results_free(results);
        out
    }
}

#[test]
fn scheme_a_round_trip_through_the_c_abi() {
    unsafe {
        let mut client: *mut RdsseClientA = std::ptr::null_mut();
        assert_eq!(rdsse_client_a_new(256, &mut client), RdsseStatus::Ok);
        let mut store: *mut RdsseStore = std::ptr::null_mut();
        assert_eq!(rdsse_store_a_new(client, &mut store), RdsseStatus::Ok);
        assert_eq!(rdsse_store_scheme(store), b'a' as std::os::raw::c_char);

        for (v, tag) in [(0u64, "alpha"), (1, "beta"), (2, "gamma"), (1, "delta")] {
            let ind = id(tag);
            assert_eq!(
                rdsse_a_add(client, store, v, ind.as_ptr(), ind.len()),
                RdsseStatus::Ok
            );
        }
        assert!(rdsse_store_entry_count(store) > 0);

        let mut results: *mut RdsseResults = std::ptr::null_mut();
        assert_eq!(rdsse_a_search(client, store, 0, 2, &mut results), RdsseStatus::Ok);
        let ids = collect(results);
        assert_eq!(ids.len(), 4);

        let mut results: *mut RdsseResults = std::ptr::null_mut();
        assert_eq!(rdsse_a_search(client, store, 1, 1, &mut results), RdsseStatus::Ok);
        assert_eq!(collect(results).len(), 2);

        rdsse_store_free(store);
        rdsse_client_a_free(client);
    }
}

#[test]
fn scheme_b_add_del_search_through_the_c_abi() {
    unsafe {
        let mut client: *mut RdsseClientB = std::ptr::null_mut();
        assert_eq!(rdsse_client_b_new(256, 64, &mut client), RdsseStatus::Ok);
        let mut store: *mut RdsseStore = std::ptr::null_mut();
        assert_eq!(rdsse_store_b_new(client, &mut store), RdsseStatus::Ok);

        for (v, tag) in [(0u64, "a"), (1, "b"), (2, "c")] {
            let ind = id(tag);
            assert_eq!(
                rdsse_b_add(client, store, v, ind.as_ptr(), ind.len()),
                RdsseStatus::Ok
            );
        }
        let ind = id("b");
        assert_eq!(
            rdsse_b_del(client, store, 1, ind.as_ptr(), ind.len()),
            RdsseStatus::Ok
        );
        // Deleting again violates the contract and reports it.
        assert_eq!(
            rdsse_b_del(client, store, 1, ind.as_ptr(), ind.len()),
            RdsseStatus::ContractViolation
        );
        let mut msg = [0i8; 128];
        let len = rdsse_last_error_message(msg.as_mut_ptr(), msg.len());
        assert!(len > 0);

        let mut results: *mut RdsseResults = std::ptr::null_mut();
        assert_eq!(rdsse_b_search(client, store, 0, 2, &mut results), RdsseStatus::Ok);
        let ids = collect(results);
        assert_eq!(ids.len(), 2);

        rdsse_store_free(store);
        rdsse_client_b_free(client);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(
            rdsse_client_a_new(256, std::ptr::null_mut()),
            RdsseStatus::NullArgument
        );
        let mut client: *mut RdsseClientA = std::ptr::null_mut();
        assert_eq!(rdsse_client_a_new(256, &mut client), RdsseStatus::Ok);
        assert_eq!(
            rdsse_a_add(client, std::ptr::null_mut(), 0, std::ptr::null(), 0),
            RdsseStatus::NullArgument
        );
        // Odd modulus size is invalid.
        let mut other: *mut RdsseClientA = std::ptr::null_mut();
        assert_eq!(rdsse_client_a_new(257, &mut other), RdsseStatus::InvalidArgument);
        rdsse_client_a_free(client);
        rdsse_client_a_free(std::ptr::null_mut()); // tolerated
    }
}

#[test]
fn generated_header_names_the_api() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("rdsse.h");
    let text = std::fs::read_to_string(header).expect("header generated at build time");
    for symbol in [
        "rdsse_client_a_new",
        "rdsse_client_b_new",
        "rdsse_a_add",
        "rdsse_a_search",
        "rdsse_b_add",
        "rdsse_b_del",
        "rdsse_b_search",
        "rdsse_results_len",
        "rdsse_last_error_message",
        "RDSSE_STATUS_OK",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
