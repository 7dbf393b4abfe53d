#ifndef NTT_H
#define NTT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum NttStatus {
  NTT_STATUS_OK = 0,
  NTT_STATUS_NULL_POINTER = 1,
  NTT_STATUS_INVALID_ARGUMENT = 2,
  NTT_STATUS_IO = 3,
  NTT_STATUS_SIMULATION = 4,
  NTT_STATUS_ENCODING = 5,
  NTT_STATUS_MODEL = 6,
  NTT_STATUS_STATISTICS = 7,
  NTT_STATUS_BUFFER_TOO_SMALL = 8,
  NTT_STATUS_PANIC = 9,
} NttStatus;

// How an episode step ended.
typedef enum NttTermination {
  NTT_TERMINATION_RUNNING = 0,
  NTT_TERMINATION_GOAL = 1,
  NTT_TERMINATION_DEATH = 2,
  NTT_TERMINATION_TIMEOUT = 3,
} NttTermination;

// Opaque trained classifier handle.
typedef struct NttClassifier NttClassifier;

// Opaque episode handle.
typedef struct NttEpisode NttEpisode;

// Opaque map handle.
typedef struct NttMap NttMap;

// Opaque trajectory handle.
typedef struct NttTrajectory NttTrajectory;

typedef struct NttPose {
  double x;
  double y;
  double z;
  double heading;
} NttPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the calling thread's most recent failure, or null. The pointer
// stays valid until the next `ntt_*` call on the same thread.
const char *ntt_last_error(void);

// Library version as a static NUL-terminated string.
const char *ntt_version(void);

// The built-in map.
enum NttStatus ntt_map_default(struct NttMap **out);

// Loads a text map file.
enum NttStatus ntt_map_load(const char *path, struct NttMap **out);

enum NttStatus ntt_map_goal_count(const struct NttMap *map, size_t *out);

enum NttStatus ntt_map_spawn_count(const struct NttMap *map, size_t *out);

void ntt_map_free(struct NttMap *map);

// Starts an episode at a spawn point facing `heading` radians.
enum NttStatus ntt_episode_start(const struct NttMap *map,
                                 size_t spawn_index,
                                 size_t goal_index,
                                 double heading,
                                 struct NttEpisode **out);

// Applies action `action` (0..9, in the simulator's action order).
enum NttStatus ntt_episode_step(struct NttEpisode *episode,
                                uint32_t action,
                                double *reward,
                                enum NttTermination *termination);

enum NttStatus ntt_episode_pose(const struct NttEpisode *episode, struct NttPose *out);

void ntt_episode_free(struct NttEpisode *episode);

// Loads a trajectory file (JSON lines).
enum NttStatus ntt_trajectory_load(const char *path, struct NttTrajectory **out);

enum NttStatus ntt_trajectory_len(const struct NttTrajectory *trajectory, size_t *out);

enum NttStatus ntt_trajectory_pose(const struct NttTrajectory *trajectory,
                                   size_t t,
                                   struct NttPose *out);

void ntt_trajectory_free(struct NttTrajectory *trajectory);

// Renders the top-down encoding into `pixels` (row-major, 8-bit). Writes the
// image size to `width`/`height` and fails with `BufferTooSmall` when
// `capacity` is insufficient; pass a null buffer to query the size.
enum NttStatus ntt_encode_topdown(const struct NttTrajectory *trajectory,
                                  const struct NttMap *map,
                                  uint8_t *pixels,
                                  size_t capacity,
                                  size_t *width,
                                  size_t *height);

// Loads a trained classifier container.
enum NttStatus ntt_classifier_load(const char *path, struct NttClassifier **out);

// Trajectory-level verdict: mean logit and the majority vote (1 = human).
// Visual models render frames from the map.
enum NttStatus ntt_classifier_predict(const struct NttClassifier *classifier,
                                      const struct NttTrajectory *trajectory,
                                      const struct NttMap *map,
                                      double *logit,
                                      int32_t *majority_human);

void ntt_classifier_free(struct NttClassifier *classifier);

// Spearman rank correlation of two length-`n` samples.
enum NttStatus ntt_spearman(const double *x, const double *y, size_t n, double *out);

// Mann-Whitney U of the first sample and its two-sided p-value.
enum NttStatus ntt_mann_whitney(const double *a,
                                size_t n1,
                                const double *b,
                                size_t n2,
                                double *u1,
                                double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTT_H */
