/* C interface for slicekit: build or load layered models, benchmark their
 * split points, parse network profiles, and rank splits under a cost model.
 *
 * Objects cross the boundary as opaque handles that must be released with
 * the matching *_free function. Every fallible call returns an SlkStatus
 * (SLK_OK == 0); the last error message for the calling thread is available
 * through slk_last_error_message. Strings are NUL-terminated UTF-8.
 */

#pragma once

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum SlkStatus {
  SLK_OK = 0,
  SLK_NULL_POINTER = 1,
  SLK_INVALID_UTF8 = 2,
  SLK_PARSE_ERROR = 3,
  SLK_SHAPE_ERROR = 4,
  SLK_SPLIT_ERROR = 5,
  SLK_IO_ERROR = 6,
  SLK_BENCH_ERROR = 7,
  SLK_PLAN_ERROR = 8,
  SLK_INDEX_OUT_OF_RANGE = 9,
  SLK_INTERNAL = 10,
} SlkStatus;

/* One-way latency plus uplink bandwidth (decimal megabits per second). */
typedef struct SlkNetProfile {
  double latency_ms;
  double upload_mbps;
} SlkNetProfile;

/* One split candidate. split is the interior index, or -1 for full offload
 * (raw input sent to the edge), or -2 for local-only execution. */
typedef struct SlkSplitInfo {
  int32_t split;
  uint8_t tl_eligible;
  uint32_t channels;
  uint32_t height;
  uint32_t width;
  uint64_t output_bytes;
} SlkSplitInfo;

/* One ranked cost row, all times in integer microseconds. delta_t_us is the
 * latency benefit of the transfer layer at this split and is meaningful only
 * when has_delta is 1. */
typedef struct SlkCostRow {
  int32_t split;
  uint8_t uses_tl;
  uint64_t device_us;
  uint64_t tl_us;
  uint64_t serial_us;
  uint64_t comm_us;
  uint64_t edge_us;
  uint64_t total_us;
  int64_t delta_t_us;
  uint8_t has_delta;
} SlkCostRow;

/* Opaque handles. */
typedef struct SlkModel SlkModel;
typedef struct SlkRecords SlkRecords;
typedef struct SlkPlan SlkPlan;

/* Library version as a static string; do not free. */
const char *slk_version(void);

/* Copy the calling thread's last error message into buf (NUL-terminated,
 * truncated to len bytes). Returns the full message length. buf may be NULL
 * to query the length. */
size_t slk_last_error_message(char *buf, size_t len);

/* Models. Builders return NULL on error. */
SlkModel *slk_model_builtin(const char *name, uint64_t seed);
SlkModel *slk_model_load(const char *path);
SlkStatus slk_model_save(const SlkModel *model, const char *path);
void slk_model_free(SlkModel *model);
int32_t slk_model_unit_count(const SlkModel *model);
int32_t slk_model_split_count(const SlkModel *model);
SlkStatus slk_model_split_info(const SlkModel *model, size_t index, SlkSplitInfo *out);

/* Network profile specs: "<number>mbps/<number>ms" or "unlimited". */
SlkStatus slk_profile_parse(const char *spec, SlkNetProfile *out);

/* Benchmarking. reps must be at least 20; the input tensor is derived
 * deterministically from seed. Returns NULL on error. */
SlkRecords *slk_benchmark(const SlkModel *model, double device_scale, double edge_scale, uint32_t reps,
                          uint64_t seed);
SlkRecords *slk_records_load(const char *path);
SlkStatus slk_records_save(const SlkRecords *records, const char *path);
int32_t slk_records_len(const SlkRecords *records);
void slk_records_free(SlkRecords *records);

/* Planning. variant: 0 transfer-layer only, 1 plain only, 2 both.
 * min_split < 0 and max_total_us == 0 mean unconstrained. Candidate 0 of the
 * returned plan is the chosen split. Returns NULL on error or when no
 * candidate satisfies the constraints. */
SlkPlan *slk_plan_rank(const SlkRecords *records, SlkNetProfile profile, uint8_t variant, int32_t min_split,
                       uint64_t max_total_us);
int32_t slk_plan_len(const SlkPlan *plan);
SlkStatus slk_plan_entry(const SlkPlan *plan, size_t index, SlkCostRow *out);
void slk_plan_free(SlkPlan *plan);

#ifdef __cplusplus
} /* extern "C" */
#endif
