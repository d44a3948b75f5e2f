// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <lwq/lwq.h>

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

const char* kTinyConfig =
    R"({"n_layers":3,"d_model":16,"n_heads":2,"d_ff":32,"vocab_size":256,"max_seq_len":32,"norm_eps":1e-5})";

struct Corpus {
    lwq_corpus* handle = nullptr;
    std::string path;
    Corpus() {
        path = temp_path("lwq_capi_corpus.txt");
        std::ofstream(path) << "the quick brown fox jumps over the lazy dog again and again and again";
        REQUIRE(lwq_corpus_open(path.c_str(), 0, 16, 16, &handle) == LWQ_OK);
    }
    ~Corpus() {
        lwq_corpus_free(handle);
        std::remove(path.c_str());
    }
};

} // namespace

TEST_CASE("capi: version string present") {
    const char* v = lwq_version();
    REQUIRE(v != nullptr);
    CHECK(std::strlen(v) > 0);
}

TEST_CASE("capi: model init, config, save and load") {
    lwq_model* m = nullptr;
    REQUIRE(lwq_model_init(kTinyConfig, 7, &m) == LWQ_OK);
    int32_t n = 0;
    CHECK(lwq_model_n_layers(m, &n) == LWQ_OK);
    CHECK(n == 3);
    char* cfg = nullptr;
    REQUIRE(lwq_model_config_json(m, &cfg) == LWQ_OK);
    CHECK(std::string(cfg).find("\"d_ff\":32") != std::string::npos);
    lwq_string_free(cfg);

    std::string path = temp_path("lwq_capi_model.st");
    REQUIRE(lwq_model_save(m, path.c_str()) == LWQ_OK);
    lwq_model* loaded = nullptr;
    REQUIRE(lwq_model_load(path.c_str(), &loaded) == LWQ_OK);
    CHECK(lwq_model_n_layers(loaded, &n) == LWQ_OK);
    CHECK(n == 3);
    lwq_model_free(loaded);
    lwq_model_free(m);
    std::remove(path.c_str());
}

TEST_CASE("capi: default config is the 12-layer toy") {
    lwq_model* m = nullptr;
    REQUIRE(lwq_model_init(nullptr, 1, &m) == LWQ_OK);
    int32_t n = 0;
    CHECK(lwq_model_n_layers(m, &n) == LWQ_OK);
    CHECK(n == 12);
    lwq_model_free(m);
}

TEST_CASE("capi: error codes and messages propagate") {
    lwq_model* m = nullptr;
    CHECK(lwq_model_load("/nonexistent/path.st", &m) == LWQ_ERR_IO);
    CHECK(std::strlen(lwq_last_error_message()) > 0);
    CHECK(lwq_model_init("{\"n_layers\":0}", 1, &m) == LWQ_ERR_CONFIG);
    lwq_corpus* c = nullptr;
    CHECK(lwq_corpus_open("/nonexistent/dir", 0, 16, 16, &c) == LWQ_ERR_IO);
    CHECK(lwq_model_init(nullptr, 1, nullptr) == LWQ_ERR_INVALID_INPUT);
}

TEST_CASE("capi: budget helper matches the worked example") {
    double g = 1024.0 * 1024.0 * 1024.0;
    int32_t n = 0;
    REQUIRE(lwq_n_higher_from_budget(20 * g, 17 * g, 34 * g, 32, &n) == LWQ_OK);
    CHECK(n == 5);
    CHECK(lwq_n_higher_from_budget(20 * g, 17 * g, 17 * g, 32, &n) == LWQ_ERR_DEGENERATE_BUDGET);
}

TEST_CASE("capi: score, plan, quantize, evaluate round trip") {
    lwq_model* m = nullptr;
    REQUIRE(lwq_model_init(kTinyConfig, 11, &m) == LWQ_OK);
    Corpus corpus;
    int64_t tokens = 0;
    CHECK(lwq_corpus_total_tokens(corpus.handle, &tokens) == LWQ_OK);
    CHECK(tokens > 0);

    lwq_report* rep = nullptr;
    REQUIRE(lwq_score(m, corpus.handle, 1, 1, 1, &rep) == LWQ_OK);
    char* rep_json = nullptr;
    REQUIRE(lwq_report_to_json(rep, &rep_json) == LWQ_OK);
    lwq_report* rep2 = nullptr;
    REQUIRE(lwq_report_from_json(rep_json, &rep2) == LWQ_OK);
    char* rep_csv = nullptr;
    REQUIRE(lwq_report_to_csv(rep2, &rep_csv) == LWQ_OK);
    CHECK(std::string(rep_csv).starts_with("layer,lim,zd"));
    lwq_string_free(rep_json);
    lwq_string_free(rep_csv);
    lwq_report_free(rep2);

    lwq_plan* plan = nullptr;
    REQUIRE(lwq_plan_two_level(rep, "lim", 1, 4, 2, &plan) == LWQ_OK);
    char* plan_json = nullptr;
    REQUIRE(lwq_plan_to_json(plan, &plan_json) == LWQ_OK);
    lwq_plan* plan2 = nullptr;
    REQUIRE(lwq_plan_from_json(plan_json, &plan2) == LWQ_OK);
    lwq_string_free(plan_json);

    uint64_t ideal = 0, exact = 0;
    REQUIRE(lwq_plan_memory(plan, m, &ideal, &exact) == LWQ_OK);
    CHECK(ideal > 0);
    CHECK(exact > ideal);

    std::string qpath = temp_path("lwq_capi_quant.st");
    uint64_t fideal = 0, fexact = 0;
    REQUIRE(lwq_quantize_to_file(m, plan, qpath.c_str(), &fideal, &fexact) == LWQ_OK);
    CHECK(fideal == ideal);
    lwq_model* qloaded = nullptr;
    REQUIRE(lwq_model_load(qpath.c_str(), &qloaded) == LWQ_OK);
    lwq_model* qmem = nullptr;
    REQUIRE(lwq_apply_plan(m, plan, &qmem) == LWQ_OK);
    double p_file = 0, p_mem = 0;
    REQUIRE(lwq_perplexity(qloaded, corpus.handle, 1, &p_file) == LWQ_OK);
    REQUIRE(lwq_perplexity(qmem, corpus.handle, 1, &p_mem) == LWQ_OK);
    CHECK(p_file == p_mem);

    char* eval_json = nullptr;
    REQUIRE(lwq_eval(qmem, corpus.handle, m, 1, &eval_json) == LWQ_OK);
    CHECK(std::string(eval_json).find("\"retention\"") != std::string::npos);
    lwq_string_free(eval_json);

    lwq_model_free(qmem);
    lwq_model_free(qloaded);
    std::remove(qpath.c_str());
    lwq_plan_free(plan2);
    lwq_plan_free(plan);
    lwq_report_free(rep);
    lwq_model_free(m);
}

TEST_CASE("capi: plan constructors and mismatch detection") {
    lwq_model* m = nullptr;
    REQUIRE(lwq_model_init(kTinyConfig, 12, &m) == LWQ_OK);
    lwq_report* rep = nullptr;
    REQUIRE(lwq_score(m, nullptr, 0, 1, 1, &rep) == LWQ_OK); // ZD only

    lwq_plan* plan = nullptr;
    REQUIRE(lwq_plan_three_level(rep, "zd", 1, &plan) == LWQ_OK);
    lwq_plan_free(plan);
    REQUIRE(lwq_plan_prune(rep, "zd", 0, 1, 4, &plan) == LWQ_OK);
    lwq_plan_free(plan);
    REQUIRE(lwq_plan_prune(rep, "zd", 1, 1, 4, &plan) == LWQ_OK);
    lwq_plan_free(plan);
    REQUIRE(lwq_plan_outlier(rep, "zd", 1, 0.01, 0.001, 4, &plan) == LWQ_OK);
    lwq_plan_free(plan);
    REQUIRE(lwq_plan_from_budget(rep, "random:3", 20.0, 17.0, 34.0, 4, 2, &plan) == LWQ_OK);
    REQUIRE(lwq_plan_set_group_size(plan, 64) == LWQ_OK);
    CHECK(lwq_plan_set_group_size(plan, 0) == LWQ_ERR_INVALID_INPUT);

    // LIM ordering was never computed for this report.
    lwq_plan* bad = nullptr;
    CHECK(lwq_plan_two_level(rep, "lim", 1, 4, 2, &bad) != LWQ_OK);

    // Plan size mismatch against a differently sized model.
    lwq_model* other = nullptr;
    REQUIRE(lwq_model_init(nullptr, 1, &other) == LWQ_OK);
    lwq_model* out = nullptr;
    CHECK(lwq_apply_plan(other, plan, &out) == LWQ_ERR_PLAN_MISMATCH);
    lwq_model_free(other);
    lwq_plan_free(plan);
    lwq_report_free(rep);
    lwq_model_free(m);
}

TEST_CASE("capi: sweep and compare-prune emit csv") {
    lwq_model* m = nullptr;
    REQUIRE(lwq_model_init(kTinyConfig, 13, &m) == LWQ_OK);
    Corpus corpus;
    lwq_report* rep = nullptr;
    REQUIRE(lwq_score(m, corpus.handle, 1, 1, 1, &rep) == LWQ_OK);

    char* csv = nullptr;
    REQUIRE(lwq_sweep(m, corpus.handle, rep, "lim,reverse_lim", 4, 2, 0, 0, 128, 10.0 / 9.0, 0, 1, &csv) ==
            LWQ_OK);
    CHECK(std::string(csv).starts_with("ordering,n_low,"));
    lwq_string_free(csv);

    char* pcsv = nullptr;
    REQUIRE(lwq_compare_prune(m, corpus.handle, rep, "lim", 4, 128, 0, 1, &pcsv) == LWQ_OK);
    CHECK(std::string(pcsv).starts_with("increment,variant,"));
    lwq_string_free(pcsv);

    lwq_report_free(rep);
    lwq_model_free(m);
}

TEST_CASE("capi: toy training lowers the loss") {
    lwq_model* m = nullptr;
    REQUIRE(lwq_model_init(kTinyConfig, 14, &m) == LWQ_OK);
    Corpus corpus;
    double before = 0, after = 0;
    REQUIRE(lwq_perplexity(m, corpus.handle, 1, &before) == LWQ_OK);
    double loss = 0;
    REQUIRE(lwq_train_toy(m, corpus.handle, 40, 2, 1e-3, 5, &loss) == LWQ_OK);
    CHECK(loss > 0);
    REQUIRE(lwq_perplexity(m, corpus.handle, 1, &after) == LWQ_OK);
    CHECK(after < before);
    lwq_model_free(m);
}
