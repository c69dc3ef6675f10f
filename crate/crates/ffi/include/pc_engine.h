#ifndef PC_ENGINE_H
#define PC_ENGINE_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Algorithm codes accepted by [`pc_relax`].
 */
typedef enum PcAlgo {
  PC_ALGO_SPC = 0,
  PC_ALGO_EPC = 1,
} PcAlgo;

/**
 * Result of every call.
 */
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_ARGUMENT = 2,
  PC_STATUS_DIMENSION_MISMATCH = 3,
  PC_STATUS_NUMERICAL = 4,
  PC_STATUS_IO = 5,
  PC_STATUS_FORMAT = 6,
  PC_STATUS_CONTRACT = 7,
  PC_STATUS_PANIC = 8,
} PcStatus;

/**
 * Opaque network handle.
 */
typedef struct PcNetwork PcNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
uintptr_t pc_last_error_message(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pc_version(void);

/**
 * Orthogonally initialized MLP with zero biases. `dims` holds `n_dims ≥ 3`
 * widths, input first. Activation codes: 0 identity, 1 tanh, 2 relu,
 * 3 leaky relu, 4 gelu, 5 sigmoid. Loss codes: 0 mse, 1 cross-entropy.
 *
 * # Safety
 * `dims` must point to `n_dims` values; `out` must be writable.
 */
enum PcStatus pc_network_mlp(const uintptr_t *dims,
                             uintptr_t n_dims,
                             uint32_t activation,
                             uint32_t output_activation,
                             uint32_t loss,
                             double gain,
                             uint64_t seed,
                             struct PcNetwork **out);

/**
 * Loads a PCN1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PcStatus pc_network_load(const char *path, struct PcNetwork **out);

/**
 * Writes a PCN1 file plus its JSON descriptor.
 *
 * # Safety
 * `net` must come from this library; `path` must be NUL-terminated.
 */
enum PcStatus pc_network_save(const struct PcNetwork *net, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `net` must come from this library and not be used afterwards.
 */
void pc_network_free(struct PcNetwork *net);

/**
 * Input width, output width and number of hidden state layers.
 *
 * # Safety
 * `net` must come from this library; output pointers may be null.
 */
enum PcStatus pc_network_shape(const struct PcNetwork *net,
                               uintptr_t *input_dim,
                               uintptr_t *output_dim,
                               uintptr_t *hidden_layers);

/**
 * Feedforward output for `batch` rows of `x`; writes `batch × output_dim`
 * values to `out` (capacity `out_len`).
 *
 * # Safety
 * `x` must hold `batch × input_dim` values and `out` `out_len` values.
 */
enum PcStatus pc_network_forward(const struct PcNetwork *net,
                                 const double *x,
                                 uintptr_t batch,
                                 double *out,
                                 uintptr_t out_len);

/**
 * Relaxes one batch (`algo` is a [`PcAlgo`] code) with `steps` SGD updates of size `lr` and writes the
 * mean total energy before each update and after the last one
 * (`steps + 1` values) to `energies`.
 *
 * # Safety
 * `x`, `y` must hold `batch × input_dim` and `batch × output_dim` values;
 * `energies` must hold `energies_len` values.
 */
enum PcStatus pc_relax(const struct PcNetwork *net,
                       uint32_t algo,
                       const double *x,
                       const double *y,
                       uintptr_t batch,
                       double lr,
                       uintptr_t steps,
                       double *energies,
                       uintptr_t energies_len);

/**
 * Natural log of `C(t,i) λⁱ (1−λ)^{t−i}`; `-inf` when `i > t`.
 *
 * # Safety
 * `out` must be writable.
 */
enum PcStatus pc_binomial_log_magnitude(double lr, uint64_t t, uint64_t i, double *out);

/**
 * Runs the randomized equivalence suite with `nets` networks per check;
 * `passed` receives 1 when every check holds.
 *
 * # Safety
 * `passed` must be writable.
 */
enum PcStatus pc_verify(uint64_t seed, uintptr_t nets, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PC_ENGINE_H */
