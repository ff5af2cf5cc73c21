#ifndef GROUPMOOD_H
#define GROUPMOOD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Output of [`gm_aggregate`] and the `class` arguments: 0 negative, 1 neutral, 2 positive.
 */
#define GM_CLASS_NEGATIVE 0

#define GM_CLASS_NEUTRAL 1

#define GM_CLASS_POSITIVE 2

#define GM_AGG_AVERAGE 0

#define GM_AGG_VOTE 1

#define GM_FORMAT_TABLE 0

#define GM_FORMAT_JSON 1

/**
 * Result codes. `GM_STATUS_OK` is zero; everything else is an error.
 */
typedef enum GmStatus {
  GM_STATUS_OK = 0,
  GM_STATUS_INVALID_ARGUMENT = 1,
  GM_STATUS_IO = 2,
  GM_STATUS_CONFIG = 3,
  GM_STATUS_CATALOG = 4,
  GM_STATUS_EMPTY_HISTOGRAM = 5,
  GM_STATUS_GENERATION = 6,
  GM_STATUS_VIDEO = 7,
  GM_STATUS_DATA = 8,
  GM_STATUS_PANIC = 9,
} GmStatus;

/**
 * Loaded face and background assets.
 */
typedef struct GmCatalog GmCatalog;

/**
 * Parsed experiment configuration.
 */
typedef struct GmConfig GmConfig;

/**
 * An 8-bit RGB raster, row-major, 3 bytes per pixel.
 */
typedef struct GmImage GmImage;

/**
 * Metrics computed from (truth, prediction) pairs.
 */
typedef struct GmReport GmReport;

typedef struct GmSummary {
  uint64_t count;
  uint64_t class_counts[3];
  uint64_t faces_placed;
  uint64_t retried_scenes;
  double elapsed_secs;
  double images_per_sec;
} GmSummary;

typedef struct GmMetrics {
  double accuracy;
  double macro_precision;
  double macro_recall;
  double macro_f1;
  double precision[3];
  double recall[3];
  double f1[3];
} GmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library and valid until the next call on the same thread.
 */
const char *gm_last_error(void);

/**
 * Library version as a static string.
 */
const char *gm_version(void);

/**
 * Releases a string returned by this library.
 */
void gm_string_free(char *s);

/**
 * Maps an emotion name (case-insensitive) to its group class using the
 * default rule, where surprise counts as neutral.
 */
enum GmStatus gm_emotion_to_class(const char *emotion, uint8_t *out_class);

/**
 * Group label of a class histogram: the strict maximum, neutral on any tie.
 */
enum GmStatus gm_group_label(uint32_t negative,
                             uint32_t neutral,
                             uint32_t positive,
                             uint8_t *out_class);

/**
 * Key of the seed used for item `index` under `root`.
 */
uint64_t gm_derive_seed(uint64_t root, uint32_t index);

/**
 * Default configuration.
 */
enum GmStatus gm_config_default(struct GmConfig **out_config);

/**
 * Parses a TOML configuration from a string.
 */
enum GmStatus gm_config_parse(const char *toml, struct GmConfig **out_config);

/**
 * Loads a TOML configuration file.
 */
enum GmStatus gm_config_load(const char *path, struct GmConfig **out_config);

/**
 * Serializes a configuration back to TOML. Free with [`gm_string_free`].
 */
enum GmStatus gm_config_to_toml(const struct GmConfig *config, char **out_toml);

void gm_config_free(struct GmConfig *config);

/**
 * Loads the asset tree under `root` using the config's catalog layout.
 */
enum GmStatus gm_catalog_load(const char *root,
                              const struct GmConfig *config,
                              struct GmCatalog **out_catalog);

size_t gm_catalog_face_count(const struct GmCatalog *catalog);

size_t gm_catalog_background_count(const struct GmCatalog *catalog);

void gm_catalog_free(struct GmCatalog *catalog);

/**
 * Generates `count` scenes into `out_dir` (images/ and manifest.jsonl).
 * `out_summary` may be null.
 */
enum GmStatus gm_generate(const struct GmCatalog *catalog,
                          const struct GmConfig *config,
                          uint64_t seed,
                          uint64_t count,
                          uint32_t workers,
                          const char *out_dir,
                          struct GmSummary *out_summary);

/**
 * Manifest record (JSON) of scene `index` of the dataset generated with
 * `seed`. Free with [`gm_string_free`].
 */
enum GmStatus gm_plan_scene(const struct GmCatalog *catalog,
                            const struct GmConfig *config,
                            uint64_t seed,
                            uint32_t index,
                            char **out_json);

/**
 * Renders scene `index` of the dataset generated with `seed`.
 */
enum GmStatus gm_render_scene(const struct GmCatalog *catalog,
                              const struct GmConfig *config,
                              uint64_t seed,
                              uint32_t index,
                              struct GmImage **out_image);

uint32_t gm_image_width(const struct GmImage *image);

uint32_t gm_image_height(const struct GmImage *image);

/**
 * Pointer to `width * height * 3` bytes owned by the image.
 */
const uint8_t *gm_image_data(const struct GmImage *image);

void gm_image_free(struct GmImage *image);

/**
 * Aggregates `frames` rows of three class scores (row-major) into one
 * video label. `method` is `GM_AGG_AVERAGE` or `GM_AGG_VOTE`.
 */
enum GmStatus gm_aggregate(const double *scores,
                           size_t frames,
                           uint32_t method,
                           uint8_t *out_class);

/**
 * Builds a report from `n` (truth, prediction) class pairs.
 */
enum GmStatus gm_report_from_pairs(const uint8_t *truth,
                                   const uint8_t *predicted,
                                   size_t n,
                                   struct GmReport **out_report);

enum GmStatus gm_report_metrics(const struct GmReport *report, struct GmMetrics *out_metrics);

/**
 * Confusion counts, row = truth, column = prediction, in class order.
 */
enum GmStatus gm_report_confusion(const struct GmReport *report, uint64_t (*out_counts)[9]);

/**
 * Renders a report as a text table or JSON. Free with [`gm_string_free`].
 */
enum GmStatus gm_report_format(const struct GmReport *report, uint32_t format, char **out_text);

void gm_report_free(struct GmReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPMOOD_H */
