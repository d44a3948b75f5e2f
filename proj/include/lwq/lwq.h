/* SPDX-License-Identifier: Apache-2.0 */
/*
 * lwq - layer-wise mixed-precision quantization toolkit.
 *
 * C API over the core library: opaque handles, integer status codes, and
 * UTF-8 JSON/CSV strings for structured results. Every function returns
 * LWQ_OK on success; on failure lwq_last_error_message() describes what
 * went wrong (thread-local). Strings returned through char** out
 * parameters are heap-allocated and must be released with
 * lwq_string_free().
 */
#ifndef LWQ_H
#define LWQ_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lwq_status {
    LWQ_OK = 0,
    LWQ_ERR_FORMAT = 1,
    LWQ_ERR_UNSUPPORTED_DTYPE = 2,
    LWQ_ERR_IO = 3,
    LWQ_ERR_INVALID_INPUT = 4,
    LWQ_ERR_CONFIG = 5,
    LWQ_ERR_PLAN_MISMATCH = 6,
    LWQ_ERR_DEGENERATE_BUDGET = 7,
    LWQ_ERR_DEGENERATE_ACTIVATIONS = 8,
    LWQ_ERR_EMPTY_CORPUS = 9,
    LWQ_ERR_INTERNAL = 10,
} lwq_status;

typedef struct lwq_model lwq_model;
typedef struct lwq_corpus lwq_corpus;
typedef struct lwq_report lwq_report;
typedef struct lwq_plan lwq_plan;

const char* lwq_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* lwq_last_error_message(void);

void lwq_string_free(char* s);

/* ---- models ---------------------------------------------------------- */

/* config_json may be NULL for the default 12-layer toy configuration. */
lwq_status lwq_model_init(const char* config_json, uint64_t seed, lwq_model** out);

/* Loads a plain or quantized checkpoint (quantized weights are unpacked). */
lwq_status lwq_model_load(const char* path, lwq_model** out);
lwq_status lwq_model_save(const lwq_model* model, const char* path);
lwq_status lwq_model_n_layers(const lwq_model* model, int32_t* out);
lwq_status lwq_model_config_json(const lwq_model* model, char** out_json);
void lwq_model_free(lwq_model* model);

/* ---- corpora --------------------------------------------------------- */

/* path may be a directory of .txt files or a single text file.
 * max_docs <= 0 means no limit. */
lwq_status lwq_corpus_open(const char* path, int64_t max_docs, int64_t seq_len, int64_t stride,
                           lwq_corpus** out);
lwq_status lwq_corpus_total_tokens(const lwq_corpus* corpus, int64_t* out);
void lwq_corpus_free(lwq_corpus* corpus);

/* ---- importance scoring ---------------------------------------------- */

/* corpus may be NULL when want_lim is 0 (ZD needs no calibration data). */
lwq_status lwq_score(const lwq_model* model, const lwq_corpus* corpus, int want_lim, int want_zd,
                     int n_threads, lwq_report** out);
lwq_status lwq_report_to_json(const lwq_report* report, char** out_json);
lwq_status lwq_report_to_csv(const lwq_report* report, char** out_csv);
lwq_status lwq_report_from_json(const char* json_text, lwq_report** out);
void lwq_report_free(lwq_report* report);

/* ---- planning --------------------------------------------------------- */

/* ordering is one of: lim | zd | reverse_lim | random:<seed> | sequential */

lwq_status lwq_n_higher_from_budget(double m_available, double m_lower, double m_higher,
                                    int32_t n_layers, int32_t* out);

lwq_status lwq_plan_two_level(const lwq_report* report, const char* ordering, int32_t n_low,
                              int32_t high_bits, int32_t low_bits, lwq_plan** out);

/* n_higher derived from the byte budget, then a two-level plan. */
lwq_status lwq_plan_from_budget(const lwq_report* report, const char* ordering, double m_available,
                                double m_lower, double m_higher, int32_t high_bits, int32_t low_bits,
                                lwq_plan** out);

lwq_status lwq_plan_three_level(const lwq_report* report, const char* ordering, int32_t x, lwq_plan** out);

/* mode: 0 = least-important under the ordering, 1 = from the top keeping
 * the final block. */
lwq_status lwq_plan_prune(const lwq_report* report, const char* ordering, int32_t mode, int32_t k,
                          int32_t base_bits, lwq_plan** out);

lwq_status lwq_plan_outlier(const lwq_report* report, const char* ordering, int32_t n_high_threshold,
                            double p_high, double p_low, int32_t base_bits, lwq_plan** out);

lwq_status lwq_plan_set_group_size(lwq_plan* plan, int64_t group_size);
lwq_status lwq_plan_to_json(const lwq_plan* plan, char** out_json);
lwq_status lwq_plan_from_json(const char* json_text, lwq_plan** out);
lwq_status lwq_plan_memory(const lwq_plan* plan, const lwq_model* model, uint64_t* idealized_bytes,
                           uint64_t* exact_bytes);
void lwq_plan_free(lwq_plan* plan);

/* ---- quantization and evaluation ------------------------------------- */

/* Writes a quantized checkpoint; byte counts are optional outputs. */
lwq_status lwq_quantize_to_file(const lwq_model* model, const lwq_plan* plan, const char* out_path,
                                uint64_t* idealized_bytes, uint64_t* exact_bytes);

/* In-memory fake quantization (and pruning) under the plan. */
lwq_status lwq_apply_plan(const lwq_model* model, const lwq_plan* plan, lwq_model** out);

lwq_status lwq_perplexity(const lwq_model* model, const lwq_corpus* corpus, int n_threads, double* out);

/* EvalReport JSON; baseline may be NULL. */
lwq_status lwq_eval(const lwq_model* model, const lwq_corpus* corpus, const lwq_model* baseline,
                    int n_threads, char** out_json);

/* orderings_csv e.g. "lim,zd,reverse_lim,random". Returns the sweep CSV. */
lwq_status lwq_sweep(const lwq_model* model, const lwq_corpus* corpus, const lwq_report* report,
                     const char* orderings_csv, int32_t high_bits, int32_t low_bits, int32_t random_seeds,
                     uint64_t seed, int64_t group_size, double retention_factor, int64_t max_eval_tokens,
                     int n_threads, char** out_csv);

lwq_status lwq_compare_prune(const lwq_model* model, const lwq_corpus* corpus, const lwq_report* report,
                             const char* ordering, int32_t high_bits, int64_t group_size,
                             int64_t max_eval_tokens, int n_threads, char** out_csv);

/* ---- toy training ----------------------------------------------------- */

lwq_status lwq_train_toy(lwq_model* model, const lwq_corpus* corpus, int64_t steps, int32_t batch_size,
                         double learning_rate, uint64_t seed, double* final_loss);

#ifdef __cplusplus
}
#endif

#endif /* LWQ_H */
