// SPDX-License-Identifier: Apache-2.0
#include "planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "errors.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace lwq {

using nlohmann::json;

int n_higher_from_budget(const Budget& b) {
    if (b.n_layers < 1) fail(ErrorCode::InvalidInput, "budget needs at least one layer");
    if (b.m_lower > b.m_higher) fail(ErrorCode::InvalidInput, "m_lower exceeds m_higher");
    if (b.m_higher == b.m_lower) fail(ErrorCode::DegenerateBudget, "m_higher equals m_lower");
    double ratio = (b.m_available - b.m_lower) / (b.m_higher - b.m_lower);
    int n = static_cast<int>(std::floor(ratio * static_cast<double>(b.n_layers)));
    return std::clamp(n, 0, b.n_layers);
}

double interpolated_memory(const Budget& b, int n_higher) {
    return b.m_lower + (b.m_higher - b.m_lower) * static_cast<double>(n_higher) /
                           static_cast<double>(b.n_layers);
}

bool QuantPlan::is_pruned(int layer) const {
    return std::binary_search(pruned_layers.begin(), pruned_layers.end(), layer);
}

static void validate_order(const std::vector<int>& order) {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); i++)
        if (sorted[i] != static_cast<int>(i))
            fail(ErrorCode::InvalidInput, "ordering is not a permutation of layer indices");
}

std::vector<int> reverse_order(const std::vector<int>& order) {
    return std::vector<int>(order.rbegin(), order.rend());
}

std::vector<int> random_order(int n_layers, uint64_t seed) {
    std::vector<int> order(static_cast<size_t>(n_layers));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    // Fisher-Yates with the in-repo generator.
    for (int i = n_layers - 1; i > 0; i--) {
        auto j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    return order;
}

std::vector<int> sequential_order(int n_layers) {
    std::vector<int> order(static_cast<size_t>(n_layers));
    std::iota(order.begin(), order.end(), 0);
    return order;
}

static double mean_bits(const QuantPlan& plan) {
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < plan.n_layers(); i++) {
        if (plan.is_pruned(i)) continue;
        sum += plan.bits_per_layer[static_cast<size_t>(i)];
        n++;
    }
    return n > 0 ? sum / n : 0.0;
}

static void check_bit_level(int bits) {
    if (bits != 2 && bits != 4 && bits != 8 && bits != 16)
        fail(ErrorCode::InvalidInput, "bit level must be one of {2,4,8,16}");
}

QuantPlan two_level_plan(const std::vector<int>& order, int n_higher, int high_bits, int low_bits) {
    validate_order(order);
    check_bit_level(high_bits);
    check_bit_level(low_bits);
    if (high_bits <= low_bits) fail(ErrorCode::InvalidInput, "high_bits must exceed low_bits");
    const int n = static_cast<int>(order.size());
    if (n_higher < 0 || n_higher > n) fail(ErrorCode::InvalidInput, "n_higher out of range");

    QuantPlan plan;
    plan.bits_per_layer.assign(static_cast<size_t>(n), low_bits);
    for (int k = 0; k < n_higher; k++) plan.bits_per_layer[static_cast<size_t>(order[static_cast<size_t>(k)])] = high_bits;
    plan.n_higher = n_higher;
    plan.avg_bits = mean_bits(plan);
    return plan;
}

QuantPlan three_level_plan(const std::vector<int>& order, int x) {
    validate_order(order);
    const int n = static_cast<int>(order.size());
    if (x < 0 || 3 * x > n) fail(ErrorCode::InvalidInput, "need 3*x <= n_layers");

    QuantPlan plan;
    plan.bits_per_layer.assign(static_cast<size_t>(n), 4);
    for (int k = 0; k < x; k++) plan.bits_per_layer[static_cast<size_t>(order[static_cast<size_t>(k)])] = 8;
    for (int k = n - 2 * x; k < n; k++) plan.bits_per_layer[static_cast<size_t>(order[static_cast<size_t>(k)])] = 2;
    plan.n_higher = x;
    plan.avg_bits = mean_bits(plan);
    return plan;
}

QuantPlan pruning_plan(const std::vector<int>& order, PruneMode mode, int k, int base_bits) {
    validate_order(order);
    check_bit_level(base_bits);
    const int n = static_cast<int>(order.size());
    if (k < 0 || k >= n) fail(ErrorCode::InvalidInput, "prune count must be in [0, n_layers)");

    QuantPlan plan;
    plan.bits_per_layer.assign(static_cast<size_t>(n), base_bits);
    if (mode == PruneMode::LeastImportant) {
        for (int i = n - k; i < n; i++) plan.pruned_layers.push_back(order[static_cast<size_t>(i)]);
    } else {
        // Drop from the top of the network but keep the final block.
        for (int i = n - 1 - k; i < n - 1; i++) plan.pruned_layers.push_back(i);
        plan.ordering_name = "sequential_top";
    }
    std::sort(plan.pruned_layers.begin(), plan.pruned_layers.end());
    plan.n_higher = n - k;
    plan.avg_bits = mean_bits(plan);
    return plan;
}

QuantPlan outlier_plan(const std::vector<int>& order, int n_high_threshold, double p_high, double p_low,
                       int base_bits) {
    validate_order(order);
    check_bit_level(base_bits);
    if (!(p_low >= 0.0 && p_low <= p_high && p_high <= 1.0))
        fail(ErrorCode::InvalidInput, "need 0 <= p_low <= p_high <= 1");
    const int n = static_cast<int>(order.size());
    if (n_high_threshold < 0 || n_high_threshold > n)
        fail(ErrorCode::InvalidInput, "n_high_threshold out of range");

    QuantPlan plan;
    plan.bits_per_layer.assign(static_cast<size_t>(n), base_bits);
    plan.outlier_fraction_per_layer.assign(static_cast<size_t>(n), p_low);
    for (int i = 0; i < n_high_threshold; i++)
        plan.outlier_fraction_per_layer[static_cast<size_t>(order[static_cast<size_t>(i)])] = p_high;
    plan.n_higher = n_high_threshold;
    plan.avg_bits = mean_bits(plan);
    return plan;
}

PlanMemory plan_memory(const QuantPlan& plan, const TransformerModel& model) {
    if (plan.n_layers() != model.config.n_layers)
        fail(ErrorCode::PlanMismatch, "plan/model layer count mismatch");
    PlanMemory mem;
    for (int i = 0; i < plan.n_layers(); i++) {
        if (plan.is_pruned(i)) continue;
        int bits = plan.bits_per_layer[static_cast<size_t>(i)];
        double frac = plan.outlier_fraction_per_layer.empty()
                          ? 0.0
                          : plan.outlier_fraction_per_layer[static_cast<size_t>(i)];
        for (const std::string& name : block_matrix_names(i)) {
            int64_t n = model.tensor(name).numel();
            ByteCounts c = predict_quantized_bytes(n, bits, plan.group_size, bits == 16 ? 0.0 : frac);
            mem.idealized += c.idealized;
            mem.exact += c.exact;
        }
    }
    return mem;
}

std::string plan_to_json(const QuantPlan& plan) {
    json j;
    j["ordering_name"] = plan.ordering_name;
    j["bits_per_layer"] = plan.bits_per_layer;
    j["pruned_layers"] = plan.pruned_layers;
    j["n_higher"] = plan.n_higher;
    j["avg_bits"] = plan.avg_bits;
    j["outlier_fraction_per_layer"] = plan.outlier_fraction_per_layer;
    j["group_size"] = plan.group_size;
    if (plan.budget) {
        j["budget"] = {{"m_available", plan.budget->m_available},
                       {"m_lower", plan.budget->m_lower},
                       {"m_higher", plan.budget->m_higher},
                       {"n_layers", plan.budget->n_layers}};
    } else {
        j["budget"] = nullptr;
    }
    return j.dump();
}

QuantPlan plan_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("bad plan JSON: ") + e.what());
    }
    QuantPlan plan;
    try {
        plan.ordering_name = j.value("ordering_name", std::string());
        plan.bits_per_layer = j.at("bits_per_layer").get<std::vector<int>>();
        plan.pruned_layers = j.value("pruned_layers", std::vector<int>());
        plan.n_higher = j.value("n_higher", 0);
        plan.avg_bits = j.value("avg_bits", 0.0);
        plan.outlier_fraction_per_layer = j.value("outlier_fraction_per_layer", std::vector<double>());
        plan.group_size = j.value("group_size", static_cast<int64_t>(128));
        if (j.contains("budget") && !j["budget"].is_null()) {
            Budget b;
            b.m_available = j["budget"].value("m_available", 0.0);
            b.m_lower = j["budget"].value("m_lower", 0.0);
            b.m_higher = j["budget"].value("m_higher", 0.0);
            b.n_layers = j["budget"].value("n_layers", 0);
            plan.budget = b;
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("bad plan JSON: ") + e.what());
    }
    std::sort(plan.pruned_layers.begin(), plan.pruned_layers.end());
    return plan;
}

} // namespace lwq
