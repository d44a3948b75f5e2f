// SPDX-License-Identifier: Apache-2.0
#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace lwq {

using nlohmann::json;

std::string eval_report_to_json(const EvalReport& r) {
    json j;
    j["ordering_name"] = r.ordering_name;
    j["avg_bits"] = r.avg_bits;
    j["n_low_layers"] = r.n_low_layers;
    j["perplexity"] = r.perplexity;
    j["baseline_perplexity"] = r.baseline_perplexity;
    j["retention"] = r.retention;
    j["runtime_seconds"] = r.runtime_seconds;
    return j.dump();
}

double retention_factor_from(double ppl, double baseline_ppl) {
    double r = std::exp(-(std::log(ppl) - std::log(baseline_ppl)));
    return std::min(r, 1.0);
}

TokenBatch truncate_batch(const TokenBatch& batch, int64_t max_tokens) {
    if (max_tokens <= 0) return batch;
    TokenBatch out;
    int64_t total = 0;
    for (const auto& s : batch.sequences) {
        if (total >= max_tokens) break;
        out.sequences.push_back(s);
        total += static_cast<int64_t>(s.size());
    }
    return out;
}

namespace {

// Memoizes perplexity per distinct (bits, pruned, outlier) assignment so
// shared sweep endpoints are evaluated once.
class EvalCache {
public:
    EvalCache(const TransformerModel& model, const TokenBatch& batch, int64_t group_size, int n_threads)
        : model_(model), batch_(batch), group_size_(group_size), n_threads_(n_threads) {}

    double eval(const QuantPlan& plan) {
        std::string key = json{{"b", plan.bits_per_layer},
                               {"p", plan.pruned_layers},
                               {"o", plan.outlier_fraction_per_layer}}
                              .dump();
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        QuantPlan p = plan;
        p.group_size = group_size_;
        TransformerModel quantized = apply_fake_quant(model_, p, FakeQuantOptions{group_size_, false});
        double ppl = perplexity(quantized, batch_, n_threads_);
        cache_.emplace(std::move(key), ppl);
        return ppl;
    }

private:
    const TransformerModel& model_;
    const TokenBatch& batch_;
    int64_t group_size_;
    int n_threads_;
    std::map<std::string, double> cache_;
};

} // namespace

SweepResult run_sweep(const TransformerModel& model, const TokenBatch& batch, const ImportanceReport& report,
                      const SweepOptions& opts) {
    if (report.n_layers != model.config.n_layers)
        fail(ErrorCode::PlanMismatch, "report/model layer count mismatch");
    const int n = model.config.n_layers;
    TokenBatch eval_batch = truncate_batch(batch, opts.max_eval_tokens);
    EvalCache cache(model, eval_batch, opts.group_size, opts.n_threads);

    SweepResult result;
    std::vector<std::string> orderings = opts.orderings;
    std::sort(orderings.begin(), orderings.end());

    for (const std::string& name : orderings) {
        bool random = (name == "random");
        std::vector<std::vector<int>> orders;
        if (random) {
            for (int s = 0; s < opts.random_seeds; s++) orders.push_back(random_order(n, opts.seed + s));
        } else {
            orders.push_back(ordering_by_name(report, name));
        }

        for (int n_low = 0; n_low <= n; n_low++) {
            SweepRow row;
            row.ordering = name;
            row.n_low = n_low;
            std::vector<double> ppls;
            for (const auto& order : orders) {
                QuantPlan plan = two_level_plan(order, n - n_low, opts.high_bits, opts.low_bits);
                plan.ordering_name = name;
                plan.group_size = opts.group_size;
                row.avg_bits = plan.avg_bits;
                PlanMemory mem = plan_memory(plan, model);
                row.idealized_bytes = mem.idealized;
                row.exact_bytes = mem.exact;
                ppls.push_back(cache.eval(plan));
            }
            double mean = 0.0;
            for (double p : ppls) mean += p;
            mean /= static_cast<double>(ppls.size());
            row.perplexity = mean;
            if (ppls.size() > 1) {
                double sq = 0.0;
                for (double p : ppls) sq += (p - mean) * (p - mean);
                row.stddev = std::sqrt(sq / static_cast<double>(ppls.size()));
            }
            result.rows.push_back(row);
        }
    }

    std::stable_sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.ordering != b.ordering) return a.ordering < b.ordering;
        return a.n_low < b.n_low;
    });

    // Baseline is the n_low = 0 plan, identical across orderings.
    for (const auto& row : result.rows)
        if (row.n_low == 0) {
            result.baseline_perplexity = row.perplexity;
            break;
        }

    for (const std::string& name : orderings) {
        RetentionPoint pt;
        pt.ordering = name;
        bool found = false;
        for (const auto& row : result.rows) {
            if (row.ordering != name) continue;
            if (row.perplexity <= opts.retention_factor * result.baseline_perplexity && row.n_low >= pt.n_low) {
                if (!found || row.n_low > pt.n_low) {
                    pt.n_low = row.n_low;
                    pt.avg_bits = row.avg_bits;
                    pt.perplexity = row.perplexity;
                    found = true;
                }
            }
        }
        if (found) result.retention.push_back(pt);
    }
    return result;
}

static std::string fmt_double(double v) { return json(v).dump(); }

std::string sweep_to_csv(const SweepResult& result) {
    std::ostringstream out;
    out << "ordering,n_low,avg_bits,idealized_bytes,exact_bytes,perplexity,stddev\n";
    for (const auto& r : result.rows) {
        out << r.ordering << "," << r.n_low << "," << fmt_double(r.avg_bits) << "," << r.idealized_bytes
            << "," << r.exact_bytes << "," << fmt_double(r.perplexity) << "," << fmt_double(r.stddev)
            << "\n";
    }
    for (const auto& pt : result.retention) {
        out << "# retention," << pt.ordering << "," << pt.n_low << "," << fmt_double(pt.avg_bits) << ","
            << fmt_double(pt.perplexity) << "\n";
    }
    return out.str();
}

std::vector<ComparePruneRow> run_compare_prune(const TransformerModel& model, const TokenBatch& batch,
                                               const ImportanceReport& report,
                                               const ComparePruneOptions& opts) {
    if (report.n_layers != model.config.n_layers)
        fail(ErrorCode::PlanMismatch, "report/model layer count mismatch");
    if (opts.high_bits != 4 && opts.high_bits != 8 && opts.high_bits != 16)
        fail(ErrorCode::InvalidInput, "compare-prune base bits must be 4, 8 or 16");
    const int low_bits = opts.high_bits / 2;
    const int n = model.config.n_layers;
    std::vector<int> order = ordering_by_name(report, opts.ordering);

    TokenBatch eval_batch = truncate_batch(batch, opts.max_eval_tokens);
    EvalCache cache(model, eval_batch, opts.group_size, opts.n_threads);
    FakeQuantOptions fq{opts.group_size, false};

    std::vector<ComparePruneRow> rows;
    for (int k = 0; 2 * k <= n && k < n; k++) {
        QuantPlan quant = two_level_plan(order, n - 2 * k, opts.high_bits, low_bits);
        quant.ordering_name = opts.ordering;
        quant.group_size = opts.group_size;
        QuantPlan prune_imp = pruning_plan(order, PruneMode::LeastImportant, k, opts.high_bits);
        prune_imp.ordering_name = opts.ordering;
        prune_imp.group_size = opts.group_size;
        QuantPlan prune_top = pruning_plan(order, PruneMode::SequentialTop, k, opts.high_bits);
        prune_top.group_size = opts.group_size;

        const QuantPlan* plans[3] = {&quant, &prune_imp, &prune_top};
        const char* variants[3] = {"quantize", "prune_importance", "prune_top"};
        uint64_t idealized[3];
        for (int v = 0; v < 3; v++) {
            ComparePruneRow row;
            row.increment = k;
            row.variant = variants[v];
            row.avg_bits = plans[v]->avg_bits;
            PlanMemory mem = plan_memory(*plans[v], model);
            row.idealized_bytes = mem.idealized;
            row.exact_bytes = mem.exact;
            idealized[v] = mem.idealized;
            if (opts.evaluate) {
                if (plans[v]->pruned_layers.empty()) {
                    row.perplexity = cache.eval(*plans[v]);
                } else {
                    TransformerModel m = apply_fake_quant(model, *plans[v], fq);
                    row.perplexity = perplexity(m, eval_batch, opts.n_threads);
                }
            }
            rows.push_back(std::move(row));
        }
        if (idealized[0] != idealized[1] || idealized[0] != idealized[2])
            fail(ErrorCode::Internal, "memory-equivalence violated at increment " + std::to_string(k));
    }
    return rows;
}

std::string compare_prune_to_csv(const std::vector<ComparePruneRow>& rows) {
    std::ostringstream out;
    out << "increment,variant,avg_bits,idealized_bytes,exact_bytes,perplexity\n";
    for (const auto& r : rows) {
        out << r.increment << "," << r.variant << "," << fmt_double(r.avg_bits) << "," << r.idealized_bytes
            << "," << r.exact_bytes << "," << fmt_double(r.perplexity) << "\n";
    }
    return out.str();
}

} // namespace lwq
