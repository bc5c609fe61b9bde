#ifndef LANGGRID_H
#define LANGGRID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every call.
 */
typedef enum LgStatus {
  LG_STATUS_OK = 0,
  LG_STATUS_NULL_POINTER = 1,
  LG_STATUS_INVALID_UTF8 = 2,
  LG_STATUS_BUFFER_TOO_SMALL = 3,
  LG_STATUS_PANIC = 4,
  LG_STATUS_SHAPE = 10,
  LG_STATUS_EMPTY_INPUT = 11,
  LG_STATUS_NON_FINITE = 12,
  LG_STATUS_RANGE = 13,
  LG_STATUS_COLLISION = 14,
  LG_STATUS_MISSING_GRAD = 15,
  LG_STATUS_CONFIG = 16,
  LG_STATUS_GENERATION = 17,
  LG_STATUS_AMBIGUOUS = 18,
  LG_STATUS_PARSE = 19,
  LG_STATUS_CHECKPOINT = 20,
  LG_STATUS_IO = 21,
} LgStatus;

/*
 Opaque trained model.
 */
typedef struct LgModel LgModel;

/*
 One scene object as passed across the boundary.
 */
typedef struct LgObject {
  uint32_t type_id;
  double x;
  double y;
  double size;
} LgObject;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *lg_version(void);

/*
 Message of the last failed call on this thread, or an empty string. The
 pointer stays valid until the next call on this thread.
 */
const char *lg_last_error(void);

/*
 Loads a checkpoint file. On success `*out` owns a new handle.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LgStatus lg_model_load(const char *path, struct LgModel **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `model` must come from [`lg_model_load`] and not be used afterwards.
 */
void lg_model_free(struct LgModel *model);

/*
 Grid width and height the model was built for; heatmaps hold
 `2 * width * height` values.

 # Safety
 `model` must be a live handle; `width` and `height` writable.
 */
enum LgStatus lg_model_grid(const struct LgModel *model, size_t *width, size_t *height);

/*
 Predicts start and end world coordinates, each written as `[x, y]`.
 Objects use type ids of the model's catalog.

 # Safety
 `instruction` must be NUL-terminated, `objects` must point at `n_objects`
 entries, and `start`, `end` at two writable doubles each.
 */
enum LgStatus lg_model_predict(const struct LgModel *model,
                               const char *instruction,
                               const struct LgObject *objects,
                               size_t n_objects,
                               double *start,
                               double *end);

/*
 Same as [`lg_model_predict`] with the scene given as JSON:
 `{"catalog_size": N, "objects": [{"type_id", "position": {"x", "y"}, "size"}]}`.

 # Safety
 Strings must be NUL-terminated; `start`, `end` as for [`lg_model_predict`].
 */
enum LgStatus lg_model_predict_json(const struct LgModel *model,
                                    const char *instruction,
                                    const char *scene_json,
                                    double *start,
                                    double *end);

/*
 Writes both normalized heatmaps, `[k][i][j]` with k = start, end, into
 `heatmaps` (capacity `len`, at least `2 * width * height`). Fails with
 `Config` for models without a grid head.

 # Safety
 As for [`lg_model_predict`]; `heatmaps` must point at `len` writable doubles.
 */
enum LgStatus lg_model_heatmaps(const struct LgModel *model,
                                const char *instruction,
                                const struct LgObject *objects,
                                size_t n_objects,
                                double *heatmaps,
                                size_t len);

/*
 Percentage of predictions within `tol` of gold on both axes. Points are
 interleaved `[x0, y0, x1, y1, ...]`, `n` points each.

 # Safety
 `pred` and `gold` must point at `2 * n` doubles; `out` writable.
 */
enum LgStatus lg_tolerable_accuracy(const double *pred,
                                    const double *gold,
                                    size_t n,
                                    double tol,
                                    double *out);

/*
 Mean squared Euclidean error over `n` interleaved points.

 # Safety
 As for [`lg_tolerable_accuracy`].
 */
enum LgStatus lg_mean_squared_error(const double *pred, const double *gold, size_t n, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LANGGRID_H */
