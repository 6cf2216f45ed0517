#ifndef FACECOVER_H
#define FACECOVER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_ARGUMENT = 1,
  FC_STATUS_INVALID_PARAM = 2,
  FC_STATUS_IO = 3,
  FC_STATUS_PARSE = 4,
  FC_STATUS_EMPTY = 5,
  FC_STATUS_DEGENERATE = 6,
  FC_STATUS_SAFETY = 7,
  FC_STATUS_OUT_OF_RANGE = 8,
  FC_STATUS_INTERNAL = 99,
} FcStatus;

/**
 * Opaque point cloud.
 */
typedef struct FcCloud FcCloud;

/**
 * Opaque set of planned segment paths.
 */
typedef struct FcPaths FcPaths;

/**
 * Opaque simulation result.
 */
typedef struct FcSimulation FcSimulation;

/**
 * Planner settings.
 */
typedef struct FcPlannerConfig {
  double laser_diameter_m;
  double pulse_rate_hz;
  /**
   * 0 none, 1 gap-free, 2 as printed.
   */
  int32_t obliquity_correction;
  double camera_axis[3];
} FcPlannerConfig;

/**
 * One path point: position, inward normal and strip index.
 */
typedef struct FcPathPoint {
  double position[3];
  double normal[3];
  uint32_t strip;
} FcPathPoint;

/**
 * Simulator settings.
 */
typedef struct FcSimConfig {
  double laser_diameter_m;
  double pulse_rate_hz;
  double control_rate_hz;
  double sample_jitter;
  uint64_t seed;
  double l_min_m;
  double kappa;
} FcSimConfig;

/**
 * A fired shot: pose `[x, y, z, nu_x, nu_y, nu_z]`, time and strip.
 */
typedef struct FcShot {
  double pose[6];
  double time_s;
  uint32_t strip;
} FcShot;

/**
 * Spacing and coverage statistics of a run.
 */
typedef struct FcCoverage {
  size_t n_shots;
  double path_length_m;
  double mean_spacing_m;
  double spacing_variance_m2;
  double coverage;
  double operable_area_m2;
} FcCoverage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t fc_last_error(char *buf, size_t len);

/**
 * Reads a PLY file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FcStatus fc_cloud_load_ply(const char *path, struct FcCloud **out);

/**
 * Builds a cloud from `n` xyz triples; `normals` may be null.
 *
 * # Safety
 * `positions` (and `normals` when given) must hold `3 * n` doubles.
 */
enum FcStatus fc_cloud_from_arrays(const double *positions,
                                   const double *normals,
                                   size_t n,
                                   struct FcCloud **out);

/**
 * Number of points; 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t fc_cloud_len(const struct FcCloud *cloud);

/**
 * # Safety
 * `cloud` must be null or a handle not yet freed.
 */
void fc_cloud_free(struct FcCloud *cloud);

/**
 * Default planner settings.
 */
struct FcPlannerConfig fc_planner_config_default(void);

/**
 * Plans one segment path over `cloud` and appends it to a new path set.
 *
 * # Safety
 * Pointers must be valid; `label` NUL-terminated.
 */
enum FcStatus fc_plan_segment(const struct FcCloud *cloud,
                              const char *label,
                              const struct FcPlannerConfig *config,
                              struct FcPaths **out);

/**
 * Reads the path export JSON.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum FcStatus fc_paths_load_json(const char *path, struct FcPaths **out);

/**
 * Writes the path export JSON.
 *
 * # Safety
 * `paths` must be live; `path` NUL-terminated.
 */
enum FcStatus fc_paths_save_json(const struct FcPaths *paths, const char *path);

/**
 * Total path points over all segments; 0 for a null handle.
 *
 * # Safety
 * `paths` must be null or live.
 */
size_t fc_paths_point_count(const struct FcPaths *paths);

/**
 * Point `index` counting through all segments in order.
 *
 * # Safety
 * `paths` must be live; `out` writable.
 */
enum FcStatus fc_paths_get_point(const struct FcPaths *paths,
                                 size_t index,
                                 struct FcPathPoint *out);

/**
 * # Safety
 * `paths` must be null or a handle not yet freed.
 */
void fc_paths_free(struct FcPaths *paths);

/**
 * Default simulator settings.
 */
struct FcSimConfig fc_sim_config_default(void);

/**
 * Executes `paths`. `face` may be null, which disables proximity sensing.
 *
 * # Safety
 * `paths` and `config` must be live; `face` null or live; `out` writable.
 */
enum FcStatus fc_simulate(const struct FcPaths *paths,
                          const struct FcCloud *face,
                          const struct FcSimConfig *config,
                          struct FcSimulation **out);

/**
 * Number of shots fired; 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or live.
 */
size_t fc_simulation_shot_count(const struct FcSimulation *sim);

/**
 * # Safety
 * `sim` must be live; `out` writable.
 */
enum FcStatus fc_simulation_get_shot(const struct FcSimulation *sim,
                                     size_t index,
                                     struct FcShot *out);

/**
 * Coverage over the `width x height` rectangle spanned from `origin` along
 * the unit axes `u` and `v`.
 *
 * # Safety
 * `sim` must be live; vectors hold 3 doubles; `out` writable.
 */
enum FcStatus fc_simulation_coverage(const struct FcSimulation *sim,
                                     double laser_diameter_m,
                                     const double *origin,
                                     const double *u,
                                     const double *v,
                                     double width,
                                     double height,
                                     size_t samples,
                                     uint64_t seed,
                                     struct FcCoverage *out);

/**
 * # Safety
 * `sim` must be null or a handle not yet freed.
 */
void fc_simulation_free(struct FcSimulation *sim);

/**
 * Rodrigues: axis-angle `nu` to a row-major 3x3 rotation.
 *
 * # Safety
 * `nu` holds 3 doubles, `out` 9.
 */
enum FcStatus fc_axis_angle_to_rotation(const double *nu, double *out);

/**
 * Inverse of [`fc_axis_angle_to_rotation`].
 *
 * # Safety
 * `rotation` holds 9 doubles, `out` 3.
 */
enum FcStatus fc_rotation_to_axis_angle(const double *rotation, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACECOVER_H */
