#ifndef IRSBIM_H
#define IRSBIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IrsbimStatus {
  IRSBIM_STATUS_OK = 0,
  IRSBIM_STATUS_NULL_POINTER = 1,
  IRSBIM_STATUS_INVALID_ARGUMENT = 2,
  IRSBIM_STATUS_BUFFER_TOO_SMALL = 3,
  IRSBIM_STATUS_MAPPING = 4,
  IRSBIM_STATUS_BANK = 5,
  IRSBIM_STATUS_CONFIG = 6,
  IRSBIM_STATUS_PANIC = 7,
} IrsbimStatus;

typedef enum IrsbimScheme {
  IRSBIM_SCHEME_S1 = 1,
  IRSBIM_SCHEME_S2 = 2,
  IRSBIM_SCHEME_S3 = 3,
} IrsbimScheme;

typedef enum IrsbimFamily {
  IRSBIM_FAMILY_QAM = 0,
  IRSBIM_FAMILY_PSK = 1,
} IrsbimFamily;

typedef enum IrsbimBoundModel {
  IRSBIM_BOUND_MODEL_EXACT = 0,
  IRSBIM_BOUND_MODEL_PUBLISHED = 1,
} IrsbimBoundModel;

/**
 * Opaque pattern bank.
 */
typedef struct IrsbimBank IrsbimBank;

/**
 * Opaque modulation scheme.
 */
typedef struct IrsbimSchemeConfig IrsbimSchemeConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *irsbim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *irsbim_version(void);

/**
 * Creates a scheme. `n_t` is used by S2 only, `n3` by S3 only.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum IrsbimStatus irsbim_scheme_new(enum IrsbimScheme scheme,
                                    size_t n2,
                                    size_t n_t,
                                    size_t n3,
                                    enum IrsbimFamily family,
                                    size_t order,
                                    struct IrsbimSchemeConfig **out);

/**
 * # Safety
 * `handle` must come from [`irsbim_scheme_new`] and not be used afterwards.
 */
void irsbim_scheme_free(struct IrsbimSchemeConfig *handle);

/**
 * Bits per channel use of a scheme.
 *
 * # Safety
 * `handle` must be a live scheme handle and `out` writable.
 */
enum IrsbimStatus irsbim_bpcu(const struct IrsbimSchemeConfig *handle, uint32_t *out);

/**
 * Maps `n_bits` bits (each 0 or 1) to an index set and a symbol index.
 * `index_set` receives `n_t` entries; `set_cap` is its capacity.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum IrsbimStatus irsbim_encode(const struct IrsbimSchemeConfig *handle,
                                const uint8_t *bits,
                                size_t n_bits,
                                size_t *index_set,
                                size_t set_cap,
                                size_t *set_len,
                                size_t *symbol_idx);

/**
 * Inverse of [`irsbim_encode`]. `bits` receives `bpcu` entries.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum IrsbimStatus irsbim_decode(const struct IrsbimSchemeConfig *handle,
                                const size_t *index_set,
                                size_t set_len,
                                size_t symbol_idx,
                                uint8_t *bits,
                                size_t bits_cap,
                                size_t *bits_len);

/**
 * Pattern bank on the default square layout sized for the scheme.
 * `ideal != 0` selects ideal beams instead of the physical array response.
 *
 * # Safety
 * `handle` must be a live scheme handle and `out` writable.
 */
enum IrsbimStatus irsbim_bank_new(const struct IrsbimSchemeConfig *handle,
                                  int32_t ideal,
                                  struct IrsbimBank **out);

/**
 * # Safety
 * `handle` must come from [`irsbim_bank_new`] and not be used afterwards.
 */
void irsbim_bank_free(struct IrsbimBank *handle);

/**
 * Number of patterns and their length.
 *
 * # Safety
 * `handle` must be live; `omega` and `dim` writable.
 */
enum IrsbimStatus irsbim_bank_shape(const struct IrsbimBank *handle, size_t *omega, size_t *dim);

/**
 * Copies pattern `p` into `re`/`im`, each of capacity `cap >= dim`.
 *
 * # Safety
 * `re` and `im` must be writable for `cap` doubles.
 */
enum IrsbimStatus irsbim_bank_pattern(const struct IrsbimBank *handle,
                                      size_t p,
                                      double *re,
                                      double *im,
                                      size_t cap);

/**
 * Gaussian tail probability.
 */
double irsbim_q_function(double x);

/**
 * `Pr{r_j > r_i}` for SNR-like parameter `beta1` and `n_r` receivers.
 *
 * # Safety
 * `out` must be writable.
 */
enum IrsbimStatus irsbim_prob_ji(double beta1, size_t n_r, double *out);

/**
 * `Pr{r_j > r_k}` from the sign-carrying `q_r` and `beta2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum IrsbimStatus irsbim_prob_jk(double q_r,
                                 double beta2,
                                 size_t n_r,
                                 enum IrsbimBoundModel model,
                                 double *out);

/**
 * Parses a TOML run configuration and counts failed layout rules over all
 * series. Parse errors return [`IrsbimStatus::Config`].
 *
 * # Safety
 * `toml` must be a NUL-terminated UTF-8 string and `failures` writable.
 */
enum IrsbimStatus irsbim_validate_config(const char *toml, uint32_t *failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRSBIM_H */
