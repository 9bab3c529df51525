#ifndef CIPHER_H
#define CIPHER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum CipherStatus {
  CIPHER_STATUS_OK = 0,
  CIPHER_STATUS_NULL_POINTER = 1,
  CIPHER_STATUS_INVALID_ARGUMENT = 2,
  CIPHER_STATUS_CONFIG = 3,
  CIPHER_STATUS_PARSE = 4,
  CIPHER_STATUS_IO = 5,
  CIPHER_STATUS_MISSING_ARTIFACT = 6,
  CIPHER_STATUS_CORRUPT_STORE = 7,
  CIPHER_STATUS_CONFLICT = 8,
  CIPHER_STATUS_UNKNOWN_CLUSTER = 9,
  CIPHER_STATUS_UTF8 = 10,
  CIPHER_STATUS_PANIC = 11,
} CipherStatus;

// Flat HDBSCAN result.
typedef struct CipherClustering CipherClustering;

// In-memory iSAX index.
typedef struct CipherIndex CipherIndex;

// A project directory bound to a pipeline configuration.
typedef struct CipherProject CipherProject;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null when none failed.
// The pointer stays valid until the next failing call on this thread.
const char *cipher_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cipher_version(void);

// Piecewise aggregate approximation of `len` values into `word_size`
// coefficients written to `out`.
//
// # Safety
// `values` must hold `len` doubles and `out` room for `word_size`.
enum CipherStatus cipher_paa(const double *values, size_t len, size_t word_size, double *out);

// The `cardinality - 1` standard-normal breakpoints of a power-of-two
// cardinality. `out_len` must equal `cardinality - 1`.
//
// # Safety
// `out` must have room for `out_len` doubles.
enum CipherStatus cipher_breakpoints(uint32_t cardinality, double *out, size_t out_len);

// Discretizes `word_size` PAA coefficients at `cardinality`, writing one
// symbol per coefficient.
//
// # Safety
// `coefficients` must hold `word_size` doubles and `symbols` room for as
// many `uint32_t`.
enum CipherStatus cipher_sax(const double *coefficients,
                             size_t word_size,
                             uint32_t cardinality,
                             uint32_t *symbols);

// Lower-bound distance between two iSAX words given as parallel arrays of
// symbol values and cardinalities, for series of `original_length` samples.
//
// # Safety
// Each of the four arrays must hold `word_size` values; `out` must be
// writable.
enum CipherStatus cipher_mindist(const uint32_t *a_values,
                                 const uint32_t *a_cardinalities,
                                 const uint32_t *b_values,
                                 const uint32_t *b_cardinalities,
                                 size_t word_size,
                                 size_t original_length,
                                 double *out);

// Clusters `n` points of `dim` coordinates (row-major) under Euclidean
// distance. On success `*out` receives a handle to free with
// [`cipher_clustering_free`].
//
// # Safety
// `points` must hold `n * dim` doubles; `out` must be writable.
enum CipherStatus cipher_hdbscan(const double *points,
                                 size_t n,
                                 size_t dim,
                                 size_t min_cluster_size,
                                 size_t min_samples,
                                 struct CipherClustering **out);

// Number of points in the clustering (0 for a null handle).
//
// # Safety
// `clustering` must be null or a live handle.
size_t cipher_clustering_len(const struct CipherClustering *clustering);

// Number of flat clusters (0 for a null handle).
//
// # Safety
// `clustering` must be null or a live handle.
size_t cipher_clustering_n_clusters(const struct CipherClustering *clustering);

// Copies the cluster label of every point into `labels` (-1 for noise) and,
// when `strengths` is non-null, its membership strength. `len` must equal
// [`cipher_clustering_len`].
//
// # Safety
// `clustering` must be a live handle; `labels` (and `strengths` if non-null)
// must have room for `len` values.
enum CipherStatus cipher_clustering_labels(const struct CipherClustering *clustering,
                                           int64_t *labels,
                                           double *strengths,
                                           size_t len);

// Releases a clustering. Null is ignored.
//
// # Safety
// `clustering` must be null or a handle not yet freed.
void cipher_clustering_free(struct CipherClustering *clustering);

// Creates an empty index. Cardinalities must be powers of two with
// `base_cardinality <= max_cardinality`.
//
// # Safety
// `out` must be writable.
enum CipherStatus cipher_index_new(size_t word_size,
                                   uint32_t base_cardinality,
                                   uint32_t max_cardinality,
                                   size_t leaf_capacity,
                                   struct CipherIndex **out);

// Inserts series `id` given as `len` (already normalized) samples; the PAA
// is computed at the index's word size. Ids must be unique.
//
// # Safety
// `index` must be a live handle and `values` hold `len` doubles.
enum CipherStatus cipher_index_insert(struct CipherIndex *index,
                                      uint64_t id,
                                      const double *values,
                                      size_t len);

// Number of series in the index (0 for a null handle).
//
// # Safety
// `index` must be null or a live handle.
size_t cipher_index_len(const struct CipherIndex *index);

// Number of tree nodes, root included (0 for a null handle).
//
// # Safety
// `index` must be null or a live handle.
size_t cipher_index_node_count(const struct CipherIndex *index);

// Writes the index in its binary format to `path`.
//
// # Safety
// `index` must be a live handle and `path` a NUL-terminated string.
enum CipherStatus cipher_index_save(const struct CipherIndex *index, const char *path);

// Reads an index written by [`cipher_index_save`] or the `index` stage.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CipherStatus cipher_index_load(const char *path, struct CipherIndex **out);

// Releases an index. Null is ignored.
//
// # Safety
// `index` must be null or a handle not yet freed.
void cipher_index_free(struct CipherIndex *index);

// Opens the project at `project_dir` with the configuration at
// `config_path`, or, when that is null, the project's own `config.toml`.
//
// # Safety
// `project_dir` must be a NUL-terminated string, `config_path` null or one,
// and `out` writable.
enum CipherStatus cipher_project_open(const char *project_dir,
                                      const char *config_path,
                                      struct CipherProject **out);

// Runs one stage by name (`ingest`, `window`, `preprocess`, `index`,
// `cluster`, `summarize` or `export`).
//
// # Safety
// `project` must be a live handle and `stage` a NUL-terminated string.
enum CipherStatus cipher_project_run_stage(const struct CipherProject *project, const char *stage);

// Runs ingest through summarize.
//
// # Safety
// `project` must be a live handle.
enum CipherStatus cipher_project_run(const struct CipherProject *project);

// Releases a project handle. Null is ignored.
//
// # Safety
// `project` must be null or a handle not yet freed.
void cipher_project_free(struct CipherProject *project);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIPHER_H */
