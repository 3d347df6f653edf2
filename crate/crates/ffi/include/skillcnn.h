#ifndef SKILLCNN_H
#define SKILLCNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call. Zero means success.
 */
typedef enum SkillStatus {
  SKILL_OK = 0,
  SKILL_ERR_NULL_POINTER = 1,
  SKILL_ERR_INVALID_UTF8 = 2,
  SKILL_ERR_SHAPE = 3,
  SKILL_ERR_EMPTY = 4,
  SKILL_ERR_DOMAIN = 5,
  SKILL_ERR_CONFIG = 6,
  SKILL_ERR_PARSE = 7,
  SKILL_ERR_DIVERGED = 8,
  SKILL_ERR_IO = 9,
  SKILL_ERR_JSON = 10,
  SKILL_ERR_BUFFER_TOO_SMALL = 11,
  SKILL_ERR_PANIC = 12,
} SkillStatus;

/*
 Opaque trained model.
 */
typedef struct SkillModel SkillModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Loads a JSON checkpoint. On success `*out` owns a new handle.

 # Safety
 `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum SkillStatus skill_model_load(const char *path, struct SkillModel **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `model` must come from `skill_model_load` and not be used afterwards.
 */
void skill_model_free(struct SkillModel *model);

/*
 Number of learnable parameters.

 # Safety
 Both pointers must be valid.
 */
enum SkillStatus skill_model_num_params(const struct SkillModel *model, size_t *out);

/*
 Class probabilities (order N, I, E) for one raw trial. The checkpoint's
 normalization is applied. `class_out` may be null.

 # Safety
 `values` must hold `channels * frames` floats and `probs_out` room for 3.
 */
enum SkillStatus skill_model_predict(const struct SkillModel *model,
                                     const float *values,
                                     size_t channels,
                                     size_t frames,
                                     float *probs_out,
                                     uint32_t *class_out);

/*
 Class activation maps for all three classes, class-major:
 `cam_out[c * frames + t]`. `cam_len` must be at least `3 * frames`.

 # Safety
 `values` must hold `channels * frames` floats and `cam_out` `cam_len`.
 */
enum SkillStatus skill_model_cam(const struct SkillModel *model,
                                 const float *values,
                                 size_t channels,
                                 size_t frames,
                                 float *cam_out,
                                 size_t cam_len);

/*
 Message of the last failed call on this thread, or null. The pointer stays
 valid until the next call into this library on the same thread.
 */
const char *skill_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKILLCNN_H */
