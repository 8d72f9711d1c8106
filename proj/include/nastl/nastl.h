#ifndef NASTL_NASTL_H
#define NASTL_NASTL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(NASTL_BUILDING_LIBRARY)
#    define NASTL_API __declspec(dllexport)
#  else
#    define NASTL_API __declspec(dllimport)
#  endif
#else
#  define NASTL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct nastl_benchmark nastl_benchmark;
typedef struct nastl_checkpoint nastl_checkpoint;

typedef enum {
    NASTL_OK = 0,
    NASTL_ERR_INVALID_ARGUMENT = 1,
    NASTL_ERR_FORMAT = 2,
    NASTL_ERR_VALIDATION = 3,
    NASTL_ERR_COMPLETENESS = 4,
    NASTL_ERR_NOT_FOUND = 5,
    NASTL_ERR_IO = 6,
    NASTL_ERR_NUMERIC = 7,
    NASTL_ERR_CONFIG_MISMATCH = 8,
    NASTL_ERR_CHECKSUM = 9,
    NASTL_ERR_CONTRACT = 10,
    NASTL_ERR_DOMAIN = 11,
    NASTL_ERR_INTERNAL = 99
} nastl_status;

/* Message of the last failed call on this thread ("" if none). */
NASTL_API const char* nastl_last_error(void);
NASTL_API const char* nastl_status_name(nastl_status status);
NASTL_API const char* nastl_version(void);

/* Every char** result is heap-allocated by the library. */
NASTL_API void nastl_string_free(char* s);

/* ---- benchmarks ---- */

/* spec_json may be NULL for the four-task default landscape. */
NASTL_API nastl_status nastl_benchmark_generate(const char* spec_json, uint64_t seed, nastl_benchmark** out);
NASTL_API nastl_status nastl_benchmark_load(const char* path, nastl_benchmark** out);
NASTL_API nastl_status nastl_benchmark_save(const nastl_benchmark* bench, const char* path);
NASTL_API void nastl_benchmark_free(nastl_benchmark* bench);

/* {"records", "space_size", "tasks": [{name, metric_name, higher_is_better, norm_stats}]} */
NASTL_API nastl_status nastl_benchmark_summary(const nastl_benchmark* bench, char** json_out);

/* arch is the dash-separated op-index encoding; split is train|valid|test. */
NASTL_API nastl_status nastl_benchmark_metric(const nastl_benchmark* bench, const char* arch, const char* task,
                                              const char* split, int normalized, double* out);

/* tasks_json: JSON array of task names, or NULL for all tasks.
   Result: {"tasks": [...], "split": "...", "tau": [[...]]} */
NASTL_API nastl_status nastl_benchmark_correlation(const nastl_benchmark* bench, const char* tasks_json,
                                                   const char* split, char** json_out);

/* Spread sweep of the power transform over the task's normalized metrics.
   grid_json: JSON array of exponents or NULL for the default grid.
   Result: {"best_exponent", "table": [[exponent, spread], ...]} */
NASTL_API nastl_status nastl_sweep_gamma(const nastl_benchmark* bench, const char* task, const char* split,
                                         const char* grid_json, char** json_out);

/* ---- training ---- */

/* preset: "desk" or "paper". */
NASTL_API nastl_status nastl_train_config_defaults(const char* preset, char** json_out);
/* Applies config_json over the desk preset and validates; returns the result. */
NASTL_API nastl_status nastl_train_config_resolve(const char* config_json, char** json_out);

/* init_checkpoint may be NULL. Result: {"checkpoint", "env_steps", "updates",
   "trained_samples", "target_syncs", "lineage", "eval": EvalReport} */
NASTL_API nastl_status nastl_train(const nastl_benchmark* bench, const char* task, const char* config_json,
                                   const char* init_checkpoint, const char* out_dir, char** result_json);

/* checkpoint NULL evaluates a policy named in protocol_json ("policy":
   "random_walk" | "uniform"). Protocol keys: episodes, episode_cap,
   pad_nodes, max_candidates, seed. */
NASTL_API nastl_status nastl_evaluate(const nastl_benchmark* bench, const char* task, const char* checkpoint,
                                      const char* protocol_json, char** report_json);

/* ---- transfer ---- */

/* regime: zero_shot | fine_tune | retrain. config_json.total_steps is the
   full (pretrain) budget; source_checkpoint NULL means from scratch. */
NASTL_API nastl_status nastl_transfer_run(const nastl_benchmark* bench, const char* source_checkpoint,
                                          const char* target, const char* regime, const char* config_json,
                                          const char* out_dir, char** result_json);

/* plan_json: {tasks, seeds, pretrain_steps, regimes, benchmark, output_root,
   train, derive_fine_tune, jobs}. Result: {"training_runs", "skipped_cells",
   "manifest"} */
NASTL_API nastl_status nastl_transfer_matrix(const char* plan_json, char** result_json);

/* ---- analysis ---- */

/* Matrix CSV (source,target,mean,std,ci_low,ci_high,n); missing cells are
   listed in *missing_json when it is non-NULL. */
NASTL_API nastl_status nastl_analyze_matrix(const char* experiment_dir, const char* regime, uint64_t seed,
                                            char** csv_out, char** missing_json);
NASTL_API nastl_status nastl_analyze_matrix_svg(const char* experiment_dir, const char* regime, uint64_t seed,
                                                char** svg_out);
NASTL_API nastl_status nastl_analyze_curves(const char* experiment_dir, const char* regime, int kernel,
                                            char** csv_out);
/* reference_mode: "final" or "best". */
NASTL_API nastl_status nastl_analyze_crossover(const char* experiment_dir, const char* regime,
                                               const char* reference_mode, int kernel, uint64_t seed,
                                               char** csv_out);

/* ---- checkpoints ---- */

NASTL_API nastl_status nastl_checkpoint_load(const char* path, nastl_checkpoint** out);
NASTL_API nastl_status nastl_checkpoint_save(const nastl_checkpoint* ckpt, const char* path);
/* {"net", "trained_steps", "lineage", "fingerprint", "param_count", "has_optimizer_state"} */
NASTL_API nastl_status nastl_checkpoint_info(const nastl_checkpoint* ckpt, char** json_out);
NASTL_API void nastl_checkpoint_free(nastl_checkpoint* ckpt);

#ifdef __cplusplus
}
#endif

#endif
