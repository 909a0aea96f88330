/* C interface for the rdsse encrypted range-query index. */

#ifndef RDSSE_H
#define RDSSE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum RdsseStatus {
  RDSSE_STATUS_OK = 0,
  RDSSE_STATUS_NULL_ARGUMENT = 1,
  RDSSE_STATUS_INVALID_ARGUMENT = 2,
  RDSSE_STATUS_CONTRACT_VIOLATION = 3,
  RDSSE_STATUS_CAPACITY_EXHAUSTED = 4,
  RDSSE_STATUS_SCHEME_MISMATCH = 5,
  RDSSE_STATUS_INTERNAL = 6,
} RdsseStatus;

// Client handle for the forward-private construction.
typedef struct RdsseClientA RdsseClientA;

// Client handle for the backward-private construction.
typedef struct RdsseClientB RdsseClientB;

// A search result set: fixed-width document ids.
typedef struct RdsseResults RdsseResults;

// An in-process encrypted store (either construction).
typedef struct RdsseStore RdsseStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static C string.
const char *rdsse_version(void);

// Copies the last error message for this thread into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length.
//
// # Safety
// `buf` must point to `len` writable bytes, or be NULL (then only the
// length is returned).
uintptr_t rdsse_last_error_message(char *buf, uintptr_t len);

// Creates a scheme-A client. `modulus_bits` of 0 selects the default
// (2048); the test profile uses 512.
//
// # Safety
// `out` must be a valid pointer to receive the handle.
enum RdsseStatus rdsse_client_a_new(uintptr_t modulus_bits, struct RdsseClientA **out);

// # Safety
// `client` must be a live handle from [`rdsse_client_a_new`]; it is
// consumed.
void rdsse_client_a_free(struct RdsseClientA *client);

// Creates a scheme-B client. `modulus_bits` 0 selects 2048 and
// `mask_width` 0 selects 1024 (1023 document slots).
//
// # Safety
// `out` must be a valid pointer to receive the handle.
enum RdsseStatus rdsse_client_b_new(uintptr_t modulus_bits,
                                    uint32_t mask_width,
                                    struct RdsseClientB **out);

// # Safety
// `client` must be a live handle from [`rdsse_client_b_new`]; it is
// consumed.
void rdsse_client_b_free(struct RdsseClientB *client);

// Creates the empty store matching a scheme-A client's public key.
//
// # Safety
// `client` must be live; `out` must be valid.
enum RdsseStatus rdsse_store_a_new(const struct RdsseClientA *client, struct RdsseStore **out);

// Creates the empty store matching a scheme-B client's public key.
//
// # Safety
// `client` must be live; `out` must be valid.
enum RdsseStatus rdsse_store_b_new(const struct RdsseClientB *client, struct RdsseStore **out);

// # Safety
// `store` must be a live handle; it is consumed.
void rdsse_store_free(struct RdsseStore *store);

// Number of entries held by a store.
//
// # Safety
// `store` must be live.
uint64_t rdsse_store_entry_count(const struct RdsseStore *store);

// Adds a document at a value through the full scheme-A pipeline. The
// value may be any index at or beyond the current maximum; the tree grows
// as needed.
//
// # Safety
// `client` and `store` must be live handles created by this library;
// `ind` must point to `ind_len` readable bytes.
enum RdsseStatus rdsse_a_add(struct RdsseClientA *client,
                             struct RdsseStore *store,
                             uint64_t value,
                             const uint8_t *ind,
                             uintptr_t ind_len);

// Runs a scheme-A range search end to end and returns the deduplicated
// result set.
//
// # Safety
// `client`, `store` and `out` must be valid.
enum RdsseStatus rdsse_a_search(const struct RdsseClientA *client,
                                const struct RdsseStore *store,
                                uint64_t a,
                                uint64_t b,
                                struct RdsseResults **out);

// Adds a document at a value through the full scheme-B pipeline.
//
// # Safety
// `client` and `store` must be live handles; `ind` must point to
// `ind_len` readable bytes.
enum RdsseStatus rdsse_b_add(struct RdsseClientB *client,
                             struct RdsseStore *store,
                             uint64_t value,
                             const uint8_t *ind,
                             uintptr_t ind_len);

// Deletes a document from a value (scheme B supports deletion).
//
// # Safety
// Same as [`rdsse_b_add`].
enum RdsseStatus rdsse_b_del(struct RdsseClientB *client,
                             struct RdsseStore *store,
                             uint64_t value,
                             const uint8_t *ind,
                             uintptr_t ind_len);

// Runs a scheme-B range search end to end: one fixed token per cover
// node, at most one ciphertext back per token, decrypted and decoded
// client-side.
//
// # Safety
// `client`, `store` and `out` must be valid.
enum RdsseStatus rdsse_b_search(const struct RdsseClientB *client,
                                const struct RdsseStore *store,
                                uint64_t a,
                                uint64_t b,
                                struct RdsseResults **out);

// Number of ids in a result set.
//
// # Safety
// `results` must be live.
uintptr_t rdsse_results_len(const struct RdsseResults *results);

// Copies the 16-byte id at `index` into `out`.
//
// # Safety
// `results` must be live; `out` must point to 16 writable bytes.
enum RdsseStatus rdsse_results_get(const struct RdsseResults *results,
                                   uintptr_t index,
                                   uint8_t *out);

// # Safety
// `results` must be a live handle; it is consumed.
void rdsse_results_free(struct RdsseResults *results);

// Scheme tag of a store: 'a' or 'b'.
//
// # Safety
// `store` must be live.
char rdsse_store_scheme(const struct RdsseStore *store);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDSSE_H */
