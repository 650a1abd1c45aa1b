#ifndef KRVQR_H
#define KRVQR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  KRVQR_STATUS_OK = 0,
  KRVQR_STATUS_NULL_POINTER = 1,
  KRVQR_STATUS_INVALID_UTF8 = 2,
  KRVQR_STATUS_IO = 3,
  KRVQR_STATUS_PARSE = 4,
  KRVQR_STATUS_NOT_FOUND = 5,
  KRVQR_STATUS_EXECUTION = 6,
  KRVQR_STATUS_DIMENSION_MISMATCH = 7,
  KRVQR_STATUS_ZERO_MODULUS = 8,
  KRVQR_STATUS_BUFFER_TOO_SMALL = 9,
  KRVQR_STATUS_PANIC = 10,
} KrvqrStatus;

/**
 * Cleaned scenes merged with a knowledge base.
 */
typedef struct KrvqrCorpus KrvqrCorpus;

/**
 * Trained embedding handle.
 */
typedef struct KrvqrEmbedding KrvqrEmbedding;

/**
 * Knowledge base handle.
 */
typedef struct KrvqrKb KrvqrKb;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on this thread.
 */
const char *krvqr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *krvqr_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void krvqr_string_free(char *s);

/**
 * Loads a knowledge base (JSONL, or TSV for `.tsv` paths).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
KrvqrStatus krvqr_kb_open(const char *path, KrvqrKb **out);

/**
 * # Safety
 * `kb` must be NULL or a handle from [`krvqr_kb_open`].
 */
void krvqr_kb_free(KrvqrKb *kb);

/**
 * Number of triplets, or 0 for NULL.
 *
 * # Safety
 * `kb` must be NULL or a live handle.
 */
size_t krvqr_kb_len(const KrvqrKb *kb);

/**
 * Loads scene graphs and a knowledge base and builds per-image graphs.
 *
 * # Safety
 * Paths must be NUL-terminated strings and `out` a valid pointer.
 */
KrvqrStatus krvqr_corpus_open(const char *scenes_path, const char *kb_path, KrvqrCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from [`krvqr_corpus_open`].
 */
void krvqr_corpus_free(KrvqrCorpus *corpus);

/**
 * Number of images, or 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t krvqr_corpus_len(const KrvqrCorpus *corpus);

/**
 * Executes `program` on image `image_id`; writes the answers, sorted and
 * newline-separated, to `*out`.
 *
 * # Safety
 * Strings must be NUL-terminated, `corpus` live and `out` valid.
 */
KrvqrStatus krvqr_oracle_execute(const KrvqrCorpus *corpus,
                                 const char *image_id,
                                 const char *program,
                                 char **out);

/**
 * Parses a program and writes its canonical printed form to `*out` and its
 * qtype to `*qtype`.
 *
 * # Safety
 * `program` must be NUL-terminated; `out` and `qtype` valid pointers.
 */
KrvqrStatus krvqr_program_canonicalize(const char *program, char **out, uint8_t *qtype);

/**
 * Rotates a head by a relation. All buffers hold `dim` values.
 *
 * # Safety
 * Input pointers must reference `dim` readable values, outputs `dim`
 * writable values.
 */
KrvqrStatus krvqr_infer_tail(const double *h,
                             const double *h_i,
                             const double *cos_r,
                             const double *sin_ri,
                             size_t dim,
                             double *t_out,
                             double *t_i_out);

/**
 * Inverse rotation of a tail. All buffers hold `dim` values.
 *
 * # Safety
 * As [`krvqr_infer_tail`].
 */
KrvqrStatus krvqr_infer_head(const double *t,
                             const double *t_i,
                             const double *cos_r,
                             const double *sin_ri,
                             size_t dim,
                             double *h_out,
                             double *h_i_out);

/**
 * Rotation taking a head to a tail. Fails with
 * `KRVQR_STATUS_ZERO_MODULUS` when a head component is (near) zero.
 *
 * # Safety
 * As [`krvqr_infer_tail`].
 */
KrvqrStatus krvqr_infer_relation(const double *h,
                                 const double *h_i,
                                 const double *t,
                                 const double *t_i,
                                 size_t dim,
                                 double *cos_out,
                                 double *sin_out);

/**
 * Squared distance between the rotated head and the tail.
 *
 * # Safety
 * Inputs must reference `dim` readable values; `out` must be valid.
 */
KrvqrStatus krvqr_score(const double *h,
                        const double *h_i,
                        const double *cos_r,
                        const double *sin_ri,
                        const double *t,
                        const double *t_i,
                        size_t dim,
                        double *out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
KrvqrStatus krvqr_embedding_load(const char *path, KrvqrEmbedding **out);

/**
 * # Safety
 * `emb` must be NULL or a handle from [`krvqr_embedding_load`].
 */
void krvqr_embedding_free(KrvqrEmbedding *emb);

/**
 * Complex dimension `d`; exported vectors hold `2 * d` values. 0 for NULL.
 *
 * # Safety
 * `emb` must be NULL or a live handle.
 */
size_t krvqr_embedding_dim(const KrvqrEmbedding *emb);

/**
 * Copies the real parts then the imaginary parts of `entity` into `buf`,
 * which must have room for `2 * dim` values.
 *
 * # Safety
 * `emb` live, `entity` NUL-terminated, `buf` writable for `buf_len` values.
 */
KrvqrStatus krvqr_embedding_entity_vector(const KrvqrEmbedding *emb,
                                          const char *entity,
                                          double *buf,
                                          size_t buf_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KRVQR_H */
