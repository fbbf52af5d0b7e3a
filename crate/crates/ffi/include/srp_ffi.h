#ifndef SRP_FFI_H
#define SRP_FFI_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SrpAction {
  SRP_ACTION_LEFT_TURN = 0,
  SRP_ACTION_STRAIGHT = 1,
  SRP_ACTION_RIGHT_TURN = 2,
  SRP_ACTION_LEFT_LANE_CHANGE = 3,
  SRP_ACTION_RIGHT_LANE_CHANGE = 4,
} SrpAction;

typedef enum SrpStatus {
  SRP_STATUS_OK = 0,
  SRP_STATUS_NULL_POINTER = 1,
  SRP_STATUS_INVALID_ARGUMENT = 2,
  SRP_STATUS_IO = 3,
  SRP_STATUS_FORMAT = 4,
  SRP_STATUS_BUFFER_TOO_SMALL = 5,
  SRP_STATUS_PANIC = 6,
} SrpStatus;

typedef enum SrpTopologyKind {
  SRP_TOPOLOGY_KIND_FOUR_WAY = 0,
  SRP_TOPOLOGY_KIND_THREE_WAY_LEFT_STRAIGHT = 1,
  SRP_TOPOLOGY_KIND_THREE_WAY_LEFT_RIGHT = 2,
  SRP_TOPOLOGY_KIND_STRAIGHT_MULTI_LANE = 3,
} SrpTopologyKind;

/**
 * Simulated and labelled episode.
 */
typedef struct SrpEpisode SrpEpisode;

/**
 * Trained region predictor.
 */
typedef struct SrpModel SrpModel;

/**
 * Model dimensions needed to size buffers.
 */
typedef struct SrpModelInfo {
  size_t t_e;
  size_t t_d;
  size_t feature_dim;
  size_t hidden_dim;
} SrpModelInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t srp_last_error(char *buf, size_t len);

/**
 * Static NUL-terminated name of a region code (0..18), or null.
 */
const char *srp_region_name(uint8_t code);

/**
 * Simulates one episode on a layout with `lanes` lanes per direction and
 * labels it. `clean` disables every noise source.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum SrpStatus srp_episode_new(enum SrpTopologyKind kind,
                               enum SrpAction action,
                               uint32_t lanes,
                               uint64_t seed,
                               bool clean,
                               struct SrpEpisode **out);

/**
 * # Safety
 * `ep` must be null or a handle from [`srp_episode_new`] not yet freed.
 */
void srp_episode_free(struct SrpEpisode *ep);

/**
 * Number of frames, or 0 for a null handle.
 *
 * # Safety
 * `ep` must be null or a live episode handle.
 */
size_t srp_episode_len(const struct SrpEpisode *ep);

/**
 * Whether the labeler's quality filter accepted the episode.
 *
 * # Safety
 * `ep` must be null or a live episode handle.
 */
bool srp_episode_accepted(const struct SrpEpisode *ep);

/**
 * Writes one region code per frame: the automatic label in `labels` (-1 when
 * unlabelled) and the ground truth in `truth`. Either buffer may be null.
 *
 * # Safety
 * Non-null buffers must be valid for `len` elements.
 */
enum SrpStatus srp_episode_regions(const struct SrpEpisode *ep,
                                   int16_t *labels,
                                   int16_t *truth,
                                   size_t len);

/**
 * Copies the features of frames `start..start + frames` into `out`,
 * frame-major.
 *
 * # Safety
 * `out` must be valid for `len` doubles.
 */
enum SrpStatus srp_episode_features(const struct SrpEpisode *ep,
                                    size_t start,
                                    size_t frames,
                                    double *out,
                                    size_t len);

/**
 * Loads a region predictor checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writing.
 */
enum SrpStatus srp_model_load(const char *path, struct SrpModel **out);

/**
 * # Safety
 * `m` must be null or a handle from [`srp_model_load`] not yet freed.
 */
void srp_model_free(struct SrpModel *m);

/**
 * # Safety
 * `m` must be a live model handle; `out` must be valid for writing.
 */
enum SrpStatus srp_model_info(const struct SrpModel *m, struct SrpModelInfo *out);

/**
 * Predicts from a frame-major window of `t_e * feature_dim` doubles.
 * Writes the topology class (1 = intersection), the current region code and
 * `t_d` horizon region codes (step 0 is the current frame). `hidden`, when
 * non-null, receives the `hidden_dim` scene representation.
 *
 * # Safety
 * `window` must be valid for `window_len` doubles, `future` for
 * `future_len` bytes, `hidden` (if non-null) for `hidden_dim` doubles.
 */
enum SrpStatus srp_model_predict(const struct SrpModel *m,
                                 const double *window,
                                 size_t window_len,
                                 uint8_t *topology,
                                 uint8_t *current,
                                 uint8_t *future,
                                 size_t future_len,
                                 double *hidden);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRP_FFI_H */
