// SPDX-License-Identifier: Apache-2.0
//
// lwquant - layer-wise mixed-precision quantization CLI.
//
// Pipeline: score -> plan -> quantize -> eval, plus the sweep and
// compare-prune harnesses that emit CSV. Talks to the core exclusively
// through the C API in lwq/lwq.h.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lwq/lwq.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Cleanup {
    std::vector<lwq_model*> models;
    std::vector<lwq_corpus*> corpora;
    std::vector<lwq_report*> reports;
    std::vector<lwq_plan*> plans;
    ~Cleanup() {
        for (auto* p : plans) lwq_plan_free(p);
        for (auto* r : reports) lwq_report_free(r);
        for (auto* c : corpora) lwq_corpus_free(c);
        for (auto* m : models) lwq_model_free(m);
    }
};

[[noreturn]] void die(lwq_status st) {
    std::cerr << "error: " << lwq_last_error_message() << "\n";
    std::exit(st == LWQ_ERR_INTERNAL ? kExitNumeric : kExitUsage);
}

void check(lwq_status st) {
    if (st != LWQ_OK) die(st);
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    lwq_string_free(s);
    return out;
}

void write_output(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << "\n";
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        std::cerr << "error: cannot write " << path << "\n";
        std::exit(kExitUsage);
    }
    out << text;
}

std::string read_file_or_die(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot read " << path << "\n";
        std::exit(kExitUsage);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CorpusFlags {
    std::string dir;
    int64_t max_docs = 0;
    int64_t seq_len = 256;
    int64_t stride = 256;

    void attach(CLI::App* cmd, bool required) {
        auto* opt = cmd->add_option("--corpus", dir, "Directory of .txt files (or one text file)");
        if (required) opt->required();
        cmd->add_option("--max-docs", max_docs, "Use only the first N documents");
        cmd->add_option("--seq-len", seq_len, "Window length in tokens")->check(CLI::PositiveNumber);
        cmd->add_option("--stride", stride, "Window stride in tokens")->check(CLI::PositiveNumber);
    }

    lwq_corpus* open(Cleanup& gc) const {
        lwq_corpus* c = nullptr;
        check(lwq_corpus_open(dir.c_str(), max_docs, seq_len, stride, &c));
        gc.corpora.push_back(c);
        return c;
    }
};

bool parse_bits_pair(const std::string& s, int& high, int& low) {
    return std::sscanf(s.c_str(), "%d,%d", &high, &low) == 2;
}

void check_finite(double v) {
    if (!std::isfinite(v)) {
        std::cerr << "error: numeric failure (non-finite perplexity)\n";
        std::exit(kExitNumeric);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-wise mixed-precision quantization toolkit"};
    app.require_subcommand(1);
    int threads = 1;
    uint64_t seed = 0;
    app.add_option("--threads", threads, "Worker threads (speed only, never results)");
    app.add_option("--seed", seed, "Base seed for randomized baselines");

    Cleanup gc;

    // ---- score ----
    auto* score = app.add_subcommand("score", "Compute LIM/ZD layer-importance scores");
    std::string score_model, score_scores = "lim,zd", score_out, score_csv;
    CorpusFlags score_corpus;
    score->add_option("--model", score_model, "Model checkpoint")->required();
    score_corpus.attach(score, false);
    score->add_option("--scores", score_scores, "Which scores: lim,zd");
    score->add_option("--out,-o", score_out, "Output JSON path (default stdout)");
    score->add_option("--csv", score_csv, "Also write a layer,lim,zd CSV here");

    // ---- plan ----
    auto* plan = app.add_subcommand("plan", "Turn an importance report into a bit-assignment plan");
    std::string plan_report, plan_model, plan_bits = "4,2", plan_ordering = "lim", plan_out;
    std::string plan_prune_mode = "importance", plan_outlier;
    double plan_budget = -1, plan_m_lower = -1, plan_m_higher = -1;
    int plan_n_low = -1, plan_three_level = -1, plan_prune = -1;
    int64_t plan_group_size = 128;
    plan->add_option("--report", plan_report, "Importance report JSON")->required();
    plan->add_option("--model", plan_model, "Model (to derive budget endpoints)");
    plan->add_option("--budget", plan_budget, "Available memory in bytes");
    plan->add_option("--m-lower", plan_m_lower, "All-low-bits footprint in bytes");
    plan->add_option("--m-higher", plan_m_higher, "All-high-bits footprint in bytes");
    plan->add_option("--n-low", plan_n_low, "Number of layers at the low bit level");
    plan->add_option("--three-level", plan_three_level, "x layers at 8 bits, 2x at 2, rest at 4");
    plan->add_option("--prune", plan_prune, "Prune K layers instead of quantizing");
    plan->add_option("--prune-mode", plan_prune_mode, "importance | top");
    plan->add_option("--outlier", plan_outlier, "n_high,p_high,p_low outlier thresholds");
    plan->add_option("--bits", plan_bits, "high,low bit pair (default 4,2)");
    plan->add_option("--ordering", plan_ordering, "lim | zd | reverse_lim | random:<seed> | sequential");
    plan->add_option("--group-size", plan_group_size, "Quantization group size");
    plan->add_option("--out,-o", plan_out, "Output plan JSON path");

    // ---- quantize ----
    auto* quant = app.add_subcommand("quantize", "Write a quantized checkpoint under a plan");
    std::string quant_model, quant_plan, quant_out;
    quant->add_option("--model", quant_model, "Model checkpoint")->required();
    quant->add_option("--plan", quant_plan, "Plan JSON")->required();
    quant->add_option("--out,-o", quant_out, "Output container path")->required();

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "Perplexity of a (possibly quantized) checkpoint");
    std::string eval_model, eval_baseline, eval_out;
    CorpusFlags eval_corpus;
    eval->add_option("--model", eval_model, "Model checkpoint")->required();
    eval_corpus.attach(eval, true);
    eval->add_option("--baseline", eval_baseline, "Baseline checkpoint for retention");
    eval->add_option("--out,-o", eval_out, "Output JSON path (default stdout)");

    // ---- sweep ----
    auto* sweep = app.add_subcommand("sweep", "Two-level quantization curve across orderings (CSV)");
    std::string sweep_model, sweep_orderings = "lim,zd,reverse_lim,random", sweep_bits = "4,2", sweep_out;
    CorpusFlags sweep_corpus;
    int sweep_seeds = 3;
    int64_t sweep_group_size = 128, sweep_max_tokens = 0;
    double sweep_retention = 10.0 / 9.0;
    sweep->add_option("--model", sweep_model, "Model checkpoint")->required();
    sweep_corpus.attach(sweep, true);
    sweep->add_option("--orderings", sweep_orderings, "Comma list: lim,zd,reverse_lim,random");
    sweep->add_option("--bits", sweep_bits, "high,low bit pair");
    sweep->add_option("--seeds", sweep_seeds, "Random-ordering seeds");
    sweep->add_option("--retention-factor", sweep_retention, "Allowed ppl inflation for the retention point");
    sweep->add_option("--max-eval-tokens", sweep_max_tokens, "Cap evaluation tokens (0 = all)");
    sweep->add_option("--group-size", sweep_group_size, "Quantization group size");
    sweep->add_option("--out,-o", sweep_out, "Output CSV path (default stdout)");

    // ---- compare-prune ----
    auto* cmp = app.add_subcommand("compare-prune", "Quantization vs pruning at equal memory (CSV)");
    std::string cmp_model, cmp_bits = "4,2", cmp_ordering = "lim", cmp_out;
    CorpusFlags cmp_corpus;
    int64_t cmp_group_size = 128, cmp_max_tokens = 0;
    cmp->add_option("--model", cmp_model, "Model checkpoint")->required();
    cmp_corpus.attach(cmp, true);
    cmp->add_option("--bits", cmp_bits, "high,low pair; low must be high/2 (8,4 or 4,2)");
    cmp->add_option("--ordering", cmp_ordering, "Importance ordering for the quantize/prune rows");
    cmp->add_option("--max-eval-tokens", cmp_max_tokens, "Cap evaluation tokens (0 = all)");
    cmp->add_option("--group-size", cmp_group_size, "Quantization group size");
    cmp->add_option("--out,-o", cmp_out, "Output CSV path (default stdout)");

    // ---- train-toy ----
    auto* train = app.add_subcommand("train-toy", "Train the bundled toy checkpoint");
    std::string train_out, train_config;
    CorpusFlags train_corpus;
    int64_t train_steps = 300;
    int train_batch = 4;
    double train_lr = 1e-3;
    uint64_t train_init_seed = 7;
    train->add_option("--out,-o", train_out, "Checkpoint output path")->required();
    train_corpus.attach(train, true);
    train->add_option("--config", train_config, "Model config JSON file (default toy config)");
    train->add_option("--steps", train_steps, "Adam steps");
    train->add_option("--batch", train_batch, "Sequences per step");
    train->add_option("--lr", train_lr, "Learning rate");
    train->add_option("--init-seed", train_init_seed, "Weight init seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    auto load_model = [&](const std::string& path) {
        lwq_model* m = nullptr;
        check(lwq_model_load(path.c_str(), &m));
        gc.models.push_back(m);
        return m;
    };
    auto score_report = [&](lwq_model* m, lwq_corpus* c, bool lim, bool zd) {
        lwq_report* r = nullptr;
        check(lwq_score(m, c, lim ? 1 : 0, zd ? 1 : 0, threads, &r));
        gc.reports.push_back(r);
        return r;
    };

    if (*score) {
        bool want_lim = score_scores.find("lim") != std::string::npos;
        bool want_zd = score_scores.find("zd") != std::string::npos;
        if (!want_lim && !want_zd) {
            std::cerr << "error: --scores must name lim and/or zd\n";
            return kExitUsage;
        }
        if (want_lim && score_corpus.dir.empty()) {
            std::cerr << "error: LIM scoring requires --corpus (ZD alone does not)\n";
            return kExitUsage;
        }
        lwq_model* m = load_model(score_model);
        lwq_corpus* c = score_corpus.dir.empty() ? nullptr : score_corpus.open(gc);
        lwq_report* r = score_report(m, c, want_lim, want_zd);
        char* json = nullptr;
        check(lwq_report_to_json(r, &json));
        write_output(take_string(json), score_out);
        if (!score_csv.empty()) {
            char* csv = nullptr;
            check(lwq_report_to_csv(r, &csv));
            write_output(take_string(csv), score_csv);
        }
        return 0;
    }

    if (*plan) {
        int high = 4, low = 2;
        if (!parse_bits_pair(plan_bits, high, low)) {
            std::cerr << "error: --bits expects high,low\n";
            return kExitUsage;
        }
        int modes = (plan_budget >= 0) + (plan_n_low >= 0) + (plan_three_level >= 0) + (plan_prune >= 0) +
                    (!plan_outlier.empty());
        if (modes != 1) {
            std::cerr << "error: select exactly one of --budget, --n-low, --three-level, --prune, --outlier\n";
            return kExitUsage;
        }
        lwq_report* r = nullptr;
        check(lwq_report_from_json(read_file_or_die(plan_report).c_str(), &r));
        gc.reports.push_back(r);

        lwq_plan* p = nullptr;
        if (plan_budget >= 0) {
            double m_lower = plan_m_lower, m_higher = plan_m_higher;
            if ((m_lower < 0 || m_higher < 0) && !plan_model.empty()) {
                // Derive the endpoints from the model's idealized footprint.
                lwq_model* m = load_model(plan_model);
                lwq_report* seq = score_report(m, nullptr, false, true);
                int32_t n = 0;
                check(lwq_model_n_layers(m, &n));
                lwq_plan *all_high = nullptr, *all_low = nullptr;
                check(lwq_plan_two_level(seq, "sequential", low < high ? 0 : n, high, low, &all_high));
                gc.plans.push_back(all_high);
                check(lwq_plan_two_level(seq, "sequential", n, high, low, &all_low));
                gc.plans.push_back(all_low);
                uint64_t hi = 0, lo = 0;
                check(lwq_plan_memory(all_high, m, &hi, nullptr));
                check(lwq_plan_memory(all_low, m, &lo, nullptr));
                m_higher = static_cast<double>(hi);
                m_lower = static_cast<double>(lo);
            }
            if (m_lower < 0 || m_higher < 0) {
                std::cerr << "error: --budget needs --m-lower/--m-higher or --model\n";
                return kExitUsage;
            }
            check(lwq_plan_from_budget(r, plan_ordering.c_str(), plan_budget, m_lower, m_higher, high, low, &p));
        } else if (plan_n_low >= 0) {
            check(lwq_plan_two_level(r, plan_ordering.c_str(), plan_n_low, high, low, &p));
        } else if (plan_three_level >= 0) {
            check(lwq_plan_three_level(r, plan_ordering.c_str(), plan_three_level, &p));
        } else if (plan_prune >= 0) {
            int mode = plan_prune_mode == "top" ? 1 : 0;
            check(lwq_plan_prune(r, plan_ordering.c_str(), mode, plan_prune, high, &p));
        } else {
            int n_high = 0;
            double p_high = 0, p_low = 0;
            if (std::sscanf(plan_outlier.c_str(), "%d,%lf,%lf", &n_high, &p_high, &p_low) != 3) {
                std::cerr << "error: --outlier expects n_high,p_high,p_low\n";
                return kExitUsage;
            }
            check(lwq_plan_outlier(r, plan_ordering.c_str(), n_high, p_high, p_low, high, &p));
        }
        gc.plans.push_back(p);
        check(lwq_plan_set_group_size(p, plan_group_size));
        char* json = nullptr;
        check(lwq_plan_to_json(p, &json));
        write_output(take_string(json), plan_out);
        return 0;
    }

    if (*quant) {
        lwq_model* m = load_model(quant_model);
        lwq_plan* p = nullptr;
        check(lwq_plan_from_json(read_file_or_die(quant_plan).c_str(), &p));
        gc.plans.push_back(p);
        uint64_t ideal = 0, exact = 0;
        check(lwq_quantize_to_file(m, p, quant_out.c_str(), &ideal, &exact));
        std::cout << "wrote " << quant_out << "\nidealized_bytes " << ideal << "\nexact_bytes " << exact
                  << "\n";
        return 0;
    }

    if (*eval) {
        lwq_model* m = load_model(eval_model);
        lwq_corpus* c = eval_corpus.open(gc);
        lwq_model* base = eval_baseline.empty() ? nullptr : load_model(eval_baseline);
        char* json = nullptr;
        check(lwq_eval(m, c, base, threads, &json));
        std::string text = take_string(json);
        double ppl = 0;
        check(lwq_perplexity(m, c, threads, &ppl));
        check_finite(ppl);
        write_output(text, eval_out);
        return 0;
    }

    if (*sweep) {
        int high = 4, low = 2;
        if (!parse_bits_pair(sweep_bits, high, low)) {
            std::cerr << "error: --bits expects high,low\n";
            return kExitUsage;
        }
        lwq_model* m = load_model(sweep_model);
        lwq_corpus* c = sweep_corpus.open(gc);
        bool need_lim = sweep_orderings.find("lim") != std::string::npos ||
                        sweep_orderings.find("reverse") != std::string::npos;
        bool need_zd = sweep_orderings.find("zd") != std::string::npos;
        lwq_report* r = score_report(m, c, need_lim, need_zd);
        char* csv = nullptr;
        check(lwq_sweep(m, c, r, sweep_orderings.c_str(), high, low, sweep_seeds, seed, sweep_group_size,
                        sweep_retention, sweep_max_tokens, threads, &csv));
        write_output(take_string(csv), sweep_out);
        return 0;
    }

    if (*cmp) {
        int high = 4, low = 2;
        if (!parse_bits_pair(cmp_bits, high, low) || low * 2 != high) {
            std::cerr << "error: --bits must be a 2:1 pair (8,4 or 4,2)\n";
            return kExitUsage;
        }
        lwq_model* m = load_model(cmp_model);
        lwq_corpus* c = cmp_corpus.open(gc);
        bool need_lim = cmp_ordering.find("lim") != std::string::npos;
        bool need_zd = cmp_ordering.find("zd") != std::string::npos;
        lwq_report* r = score_report(m, c, need_lim, need_zd || !need_lim);
        char* csv = nullptr;
        check(lwq_compare_prune(m, c, r, cmp_ordering.c_str(), high, cmp_group_size, cmp_max_tokens,
                                threads, &csv));
        write_output(take_string(csv), cmp_out);
        return 0;
    }

    if (*train) {
        lwq_model* m = nullptr;
        std::string config_json = train_config.empty() ? "" : read_file_or_die(train_config);
        check(lwq_model_init(config_json.empty() ? nullptr : config_json.c_str(), train_init_seed, &m));
        gc.models.push_back(m);
        lwq_corpus* c = train_corpus.open(gc);
        double loss = 0;
        check(lwq_train_toy(m, c, train_steps, train_batch, train_lr, seed ? seed : 1234, &loss));
        check_finite(loss);
        check(lwq_model_save(m, train_out.c_str()));
        std::cout << "wrote " << train_out << "\nfinal_loss " << loss << "\n";
        return 0;
    }

    return kExitUsage;
}
