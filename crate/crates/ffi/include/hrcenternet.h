#ifndef HRCENTERNET_H
#define HRCENTERNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum HrcnStatus {
  HRCN_STATUS_OK = 0,
  HRCN_STATUS_NULL_ARGUMENT = 1,
  HRCN_STATUS_INVALID_ARGUMENT = 2,
  HRCN_STATUS_IO = 3,
  HRCN_STATUS_FORMAT = 4,
  HRCN_STATUS_CONFIG_MISMATCH = 5,
  HRCN_STATUS_PANIC = 6,
  HRCN_STATUS_INTERNAL = 7,
} HrcnStatus;

// Detections from one call to `hrcn_detect`.
typedef struct HrcnDetections HrcnDetections;

// A trained or freshly initialized detector.
typedef struct HrcnModel HrcnModel;

// Box corners in input pixels plus the detection score.
typedef struct HrcnBox {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
  double score;
} HrcnBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null.
//
// The pointer stays valid until the next failing call on the same thread.
const char *hrcn_last_error(void);

// Builds a model from a preset name (`"toy"` or `"paper-w32"`) and seed.
enum HrcnStatus hrcn_model_new(const char *preset, uint64_t seed, struct HrcnModel **out);

// Loads a checkpoint file.
enum HrcnStatus hrcn_model_load(const char *path, struct HrcnModel **out);

// Writes a checkpoint file.
enum HrcnStatus hrcn_model_save(const struct HrcnModel *model, const char *path);

// Releases a model; null is ignored.
void hrcn_model_free(struct HrcnModel *model);

// Number of learnable parameters, or 0 for a null handle.
uintptr_t hrcn_model_param_count(const struct HrcnModel *model);

// Channels the model expects (1 or 3), or 0 for a null handle.
uintptr_t hrcn_model_input_channels(const struct HrcnModel *model);

// Detects characters on a `channels x height x width` planar float image in `[0, 1]`.
//
// `channels` may be 1 or 3 regardless of the model; any size is accepted.
// Non-positive `conf` or `nms_iou` select the defaults (0.3 and 0.5).
enum HrcnStatus hrcn_detect(const struct HrcnModel *model,
                            const float *pixels,
                            uintptr_t channels,
                            uintptr_t height,
                            uintptr_t width,
                            double conf,
                            double nms_iou,
                            struct HrcnDetections **out);

// Number of detections, or 0 for a null handle.
uintptr_t hrcn_detections_len(const struct HrcnDetections *dets);

// Copies detection `index` (best score first) into `out`.
enum HrcnStatus hrcn_detections_get(const struct HrcnDetections *dets,
                                    uintptr_t index,
                                    struct HrcnBox *out);

// Releases a detection list; null is ignored.
void hrcn_detections_free(struct HrcnDetections *dets);

// Intersection over union of two boxes (scores are ignored).
enum HrcnStatus hrcn_iou(const struct HrcnBox *a, const struct HrcnBox *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HRCENTERNET_H */
