// SPDX-License-Identifier: Apache-2.0
#include "lwq/lwq.h"

#include <chrono>
#include <cstring>
#include <sstream>
#include <string>

#include "corpus.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "importance.hpp"
#include "model.hpp"
#include "planner.hpp"
#include "train.hpp"

struct lwq_model {
    lwq::TransformerModel m;
};
struct lwq_corpus {
    lwq::CorpusSpec spec;
    lwq::TokenBatch batch;
    std::string fingerprint;
};
struct lwq_report {
    lwq::ImportanceReport r;
};
struct lwq_plan {
    lwq::QuantPlan p;
};

namespace {

thread_local std::string g_last_error;

lwq_status status_of(lwq::ErrorCode code) {
    using lwq::ErrorCode;
    switch (code) {
        case ErrorCode::Ok: return LWQ_OK;
        case ErrorCode::FormatError: return LWQ_ERR_FORMAT;
        case ErrorCode::UnsupportedDtype: return LWQ_ERR_UNSUPPORTED_DTYPE;
        case ErrorCode::IoError: return LWQ_ERR_IO;
        case ErrorCode::InvalidInput: return LWQ_ERR_INVALID_INPUT;
        case ErrorCode::ConfigError: return LWQ_ERR_CONFIG;
        case ErrorCode::PlanMismatch: return LWQ_ERR_PLAN_MISMATCH;
        case ErrorCode::DegenerateBudget: return LWQ_ERR_DEGENERATE_BUDGET;
        case ErrorCode::DegenerateActivations: return LWQ_ERR_DEGENERATE_ACTIVATIONS;
        case ErrorCode::EmptyCorpus: return LWQ_ERR_EMPTY_CORPUS;
        case ErrorCode::Internal: return LWQ_ERR_INTERNAL;
    }
    return LWQ_ERR_INTERNAL;
}

template <typename Fn>
lwq_status guarded(Fn&& fn) {
    try {
        fn();
        return LWQ_OK;
    } catch (const lwq::Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return LWQ_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(bool cond, const char* what) {
    if (!cond) lwq::fail(lwq::ErrorCode::InvalidInput, what);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

} // namespace

extern "C" {

const char* lwq_version(void) { return "0.1.0"; }

const char* lwq_last_error_message(void) { return g_last_error.c_str(); }

void lwq_string_free(char* s) { std::free(s); }

/* ---- models ---------------------------------------------------------- */

lwq_status lwq_model_init(const char* config_json, uint64_t seed, lwq_model** out) {
    return guarded([&] {
        require(out != nullptr, "out must not be NULL");
        lwq::ModelConfig cfg =
            config_json ? lwq::config_from_json(config_json) : lwq::ModelConfig{};
        *out = new lwq_model{lwq::init_model(cfg, seed)};
    });
}

lwq_status lwq_model_load(const char* path, lwq_model** out) {
    return guarded([&] {
        require(path != nullptr && out != nullptr, "path and out must not be NULL");
        *out = new lwq_model{lwq::load_any_model(path)};
    });
}

lwq_status lwq_model_save(const lwq_model* model, const char* path) {
    return guarded([&] {
        require(model != nullptr && path != nullptr, "model and path must not be NULL");
        lwq::save_model(model->m, path);
    });
}

lwq_status lwq_model_n_layers(const lwq_model* model, int32_t* out) {
    return guarded([&] {
        require(model != nullptr && out != nullptr, "model and out must not be NULL");
        *out = model->m.config.n_layers;
    });
}

lwq_status lwq_model_config_json(const lwq_model* model, char** out_json) {
    return guarded([&] {
        require(model != nullptr && out_json != nullptr, "model and out must not be NULL");
        *out_json = dup_string(lwq::config_to_json(model->m.config));
    });
}

void lwq_model_free(lwq_model* model) { delete model; }

/* ---- corpora --------------------------------------------------------- */

lwq_status lwq_corpus_open(const char* path, int64_t max_docs, int64_t seq_len, int64_t stride,
                           lwq_corpus** out) {
    return guarded([&] {
        require(path != nullptr && out != nullptr, "path and out must not be NULL");
        lwq::CorpusSpec spec;
        spec.paths = lwq::collect_corpus_paths(path);
        if (max_docs > 0) spec.max_docs = max_docs;
        spec.seq_len = seq_len;
        spec.stride = stride;
        auto* c = new lwq_corpus;
        c->spec = spec;
        c->batch = lwq::build_batches(spec);
        c->fingerprint = lwq::corpus_fingerprint(spec);
        *out = c;
    });
}

lwq_status lwq_corpus_total_tokens(const lwq_corpus* corpus, int64_t* out) {
    return guarded([&] {
        require(corpus != nullptr && out != nullptr, "corpus and out must not be NULL");
        *out = corpus->batch.total_tokens();
    });
}

void lwq_corpus_free(lwq_corpus* corpus) { delete corpus; }

/* ---- importance ------------------------------------------------------ */

lwq_status lwq_score(const lwq_model* model, const lwq_corpus* corpus, int want_lim, int want_zd,
                     int n_threads, lwq_report** out) {
    return guarded([&] {
        require(model != nullptr && out != nullptr, "model and out must not be NULL");
        require(!want_lim || corpus != nullptr, "LIM scoring requires a corpus");
        lwq::ReportRequest req;
        req.want_lim = want_lim != 0;
        req.want_zd = want_zd != 0;
        req.n_threads = n_threads;
        *out = new lwq_report{lwq::build_report(model->m, corpus ? &corpus->batch : nullptr, req,
                                                corpus ? corpus->fingerprint : "")};
    });
}

lwq_status lwq_report_to_json(const lwq_report* report, char** out_json) {
    return guarded([&] {
        require(report != nullptr && out_json != nullptr, "report and out must not be NULL");
        *out_json = dup_string(lwq::report_to_json(report->r));
    });
}

lwq_status lwq_report_to_csv(const lwq_report* report, char** out_csv) {
    return guarded([&] {
        require(report != nullptr && out_csv != nullptr, "report and out must not be NULL");
        *out_csv = dup_string(lwq::report_to_csv(report->r));
    });
}

lwq_status lwq_report_from_json(const char* json_text, lwq_report** out) {
    return guarded([&] {
        require(json_text != nullptr && out != nullptr, "json and out must not be NULL");
        *out = new lwq_report{lwq::report_from_json(json_text)};
    });
}

void lwq_report_free(lwq_report* report) { delete report; }

/* ---- planning -------------------------------------------------------- */

lwq_status lwq_n_higher_from_budget(double m_available, double m_lower, double m_higher,
                                    int32_t n_layers, int32_t* out) {
    return guarded([&] {
        require(out != nullptr, "out must not be NULL");
        *out = lwq::n_higher_from_budget(lwq::Budget{m_available, m_lower, m_higher, n_layers});
    });
}

lwq_status lwq_plan_two_level(const lwq_report* report, const char* ordering, int32_t n_low,
                              int32_t high_bits, int32_t low_bits, lwq_plan** out) {
    return guarded([&] {
        require(report != nullptr && ordering != nullptr && out != nullptr, "NULL argument");
        auto order = lwq::ordering_by_name(report->r, ordering);
        auto plan = lwq::two_level_plan(order, report->r.n_layers - n_low, high_bits, low_bits);
        plan.ordering_name = ordering;
        *out = new lwq_plan{std::move(plan)};
    });
}

lwq_status lwq_plan_from_budget(const lwq_report* report, const char* ordering, double m_available,
                                double m_lower, double m_higher, int32_t high_bits, int32_t low_bits,
                                lwq_plan** out) {
    return guarded([&] {
        require(report != nullptr && ordering != nullptr && out != nullptr, "NULL argument");
        lwq::Budget budget{m_available, m_lower, m_higher, report->r.n_layers};
        int n_higher = lwq::n_higher_from_budget(budget);
        auto order = lwq::ordering_by_name(report->r, ordering);
        auto plan = lwq::two_level_plan(order, n_higher, high_bits, low_bits);
        plan.ordering_name = ordering;
        plan.budget = budget;
        *out = new lwq_plan{std::move(plan)};
    });
}

lwq_status lwq_plan_three_level(const lwq_report* report, const char* ordering, int32_t x,
                                lwq_plan** out) {
    return guarded([&] {
        require(report != nullptr && ordering != nullptr && out != nullptr, "NULL argument");
        auto plan = lwq::three_level_plan(lwq::ordering_by_name(report->r, ordering), x);
        plan.ordering_name = ordering;
        *out = new lwq_plan{std::move(plan)};
    });
}

lwq_status lwq_plan_prune(const lwq_report* report, const char* ordering, int32_t mode, int32_t k,
                          int32_t base_bits, lwq_plan** out) {
    return guarded([&] {
        require(report != nullptr && ordering != nullptr && out != nullptr, "NULL argument");
        auto pm = mode == 0 ? lwq::PruneMode::LeastImportant : lwq::PruneMode::SequentialTop;
        auto plan = lwq::pruning_plan(lwq::ordering_by_name(report->r, ordering), pm, k, base_bits);
        if (pm == lwq::PruneMode::LeastImportant) plan.ordering_name = ordering;
        *out = new lwq_plan{std::move(plan)};
    });
}

lwq_status lwq_plan_outlier(const lwq_report* report, const char* ordering, int32_t n_high_threshold,
                            double p_high, double p_low, int32_t base_bits, lwq_plan** out) {
    return guarded([&] {
        require(report != nullptr && ordering != nullptr && out != nullptr, "NULL argument");
        auto plan = lwq::outlier_plan(lwq::ordering_by_name(report->r, ordering), n_high_threshold, p_high,
                                      p_low, base_bits);
        plan.ordering_name = ordering;
        *out = new lwq_plan{std::move(plan)};
    });
}

lwq_status lwq_plan_set_group_size(lwq_plan* plan, int64_t group_size) {
    return guarded([&] {
        require(plan != nullptr, "plan must not be NULL");
        require(group_size >= 1, "group_size must be >= 1");
        plan->p.group_size = group_size;
    });
}

lwq_status lwq_plan_to_json(const lwq_plan* plan, char** out_json) {
    return guarded([&] {
        require(plan != nullptr && out_json != nullptr, "plan and out must not be NULL");
        *out_json = dup_string(lwq::plan_to_json(plan->p));
    });
}

lwq_status lwq_plan_from_json(const char* json_text, lwq_plan** out) {
    return guarded([&] {
        require(json_text != nullptr && out != nullptr, "json and out must not be NULL");
        *out = new lwq_plan{lwq::plan_from_json(json_text)};
    });
}

lwq_status lwq_plan_memory(const lwq_plan* plan, const lwq_model* model, uint64_t* idealized_bytes,
                           uint64_t* exact_bytes) {
    return guarded([&] {
        require(plan != nullptr && model != nullptr, "plan and model must not be NULL");
        lwq::PlanMemory mem = lwq::plan_memory(plan->p, model->m);
        if (idealized_bytes) *idealized_bytes = mem.idealized;
        if (exact_bytes) *exact_bytes = mem.exact;
    });
}

void lwq_plan_free(lwq_plan* plan) { delete plan; }

/* ---- quantization and evaluation ------------------------------------- */

lwq_status lwq_quantize_to_file(const lwq_model* model, const lwq_plan* plan, const char* out_path,
                                uint64_t* idealized_bytes, uint64_t* exact_bytes) {
    return guarded([&] {
        require(model != nullptr && plan != nullptr && out_path != nullptr, "NULL argument");
        lwq::FakeQuantOptions opts;
        opts.group_size = plan->p.group_size;
        lwq::save_quantized_model(model->m, plan->p, opts, out_path);
        lwq::PlanMemory mem = lwq::plan_memory(plan->p, model->m);
        if (idealized_bytes) *idealized_bytes = mem.idealized;
        if (exact_bytes) *exact_bytes = mem.exact;
    });
}

lwq_status lwq_apply_plan(const lwq_model* model, const lwq_plan* plan, lwq_model** out) {
    return guarded([&] {
        require(model != nullptr && plan != nullptr && out != nullptr, "NULL argument");
        lwq::FakeQuantOptions opts;
        opts.group_size = plan->p.group_size;
        *out = new lwq_model{lwq::apply_fake_quant(model->m, plan->p, opts)};
    });
}

lwq_status lwq_perplexity(const lwq_model* model, const lwq_corpus* corpus, int n_threads, double* out) {
    return guarded([&] {
        require(model != nullptr && corpus != nullptr && out != nullptr, "NULL argument");
        *out = lwq::perplexity(model->m, corpus->batch, n_threads);
    });
}

lwq_status lwq_eval(const lwq_model* model, const lwq_corpus* corpus, const lwq_model* baseline,
                    int n_threads, char** out_json) {
    return guarded([&] {
        require(model != nullptr && corpus != nullptr && out_json != nullptr, "NULL argument");
        auto start = std::chrono::steady_clock::now();
        lwq::EvalReport r;
        r.perplexity = lwq::perplexity(model->m, corpus->batch, n_threads);
        if (baseline) {
            r.baseline_perplexity = lwq::perplexity(baseline->m, corpus->batch, n_threads);
            r.retention = lwq::retention_factor_from(r.perplexity, r.baseline_perplexity);
        }
        r.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        *out_json = dup_string(lwq::eval_report_to_json(r));
    });
}

lwq_status lwq_sweep(const lwq_model* model, const lwq_corpus* corpus, const lwq_report* report,
                     const char* orderings_csv, int32_t high_bits, int32_t low_bits, int32_t random_seeds,
                     uint64_t seed, int64_t group_size, double retention_factor, int64_t max_eval_tokens,
                     int n_threads, char** out_csv) {
    return guarded([&] {
        require(model != nullptr && corpus != nullptr && report != nullptr && out_csv != nullptr,
                "NULL argument");
        lwq::SweepOptions opts;
        if (orderings_csv) opts.orderings = split_csv(orderings_csv);
        opts.high_bits = high_bits;
        opts.low_bits = low_bits;
        opts.random_seeds = random_seeds > 0 ? random_seeds : 3;
        opts.seed = seed;
        if (group_size > 0) opts.group_size = group_size;
        if (retention_factor > 0) opts.retention_factor = retention_factor;
        opts.max_eval_tokens = max_eval_tokens;
        opts.n_threads = n_threads;
        lwq::SweepResult result = lwq::run_sweep(model->m, corpus->batch, report->r, opts);
        *out_csv = dup_string(lwq::sweep_to_csv(result));
    });
}

lwq_status lwq_compare_prune(const lwq_model* model, const lwq_corpus* corpus, const lwq_report* report,
                             const char* ordering, int32_t high_bits, int64_t group_size,
                             int64_t max_eval_tokens, int n_threads, char** out_csv) {
    return guarded([&] {
        require(model != nullptr && corpus != nullptr && report != nullptr && out_csv != nullptr,
                "NULL argument");
        lwq::ComparePruneOptions opts;
        if (ordering) opts.ordering = ordering;
        opts.high_bits = high_bits;
        if (group_size > 0) opts.group_size = group_size;
        opts.max_eval_tokens = max_eval_tokens;
        opts.n_threads = n_threads;
        auto rows = lwq::run_compare_prune(model->m, corpus->batch, report->r, opts);
        *out_csv = dup_string(lwq::compare_prune_to_csv(rows));
    });
}

/* ---- toy training ----------------------------------------------------- */

lwq_status lwq_train_toy(lwq_model* model, const lwq_corpus* corpus, int64_t steps, int32_t batch_size,
                         double learning_rate, uint64_t seed, double* final_loss) {
    return guarded([&] {
        require(model != nullptr && corpus != nullptr, "model and corpus must not be NULL");
        lwq::TrainConfig cfg;
        if (steps > 0) cfg.steps = steps;
        if (batch_size > 0) cfg.batch_size = batch_size;
        if (learning_rate > 0) cfg.lr = learning_rate;
        cfg.seed = seed;
        double loss = lwq::train_model(model->m, corpus->batch, cfg);
        if (final_loss) *final_loss = loss;
    });
}

} // extern "C"
