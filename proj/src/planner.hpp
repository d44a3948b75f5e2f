// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lwq {

struct TransformerModel;

struct Budget {
    double m_available = 0; // bytes
    double m_lower = 0;     // whole model at the low bit level
    double m_higher = 0;    // whole model at the high bit level
    int n_layers = 0;
};

// N_higher = floor((M_available - M_lower) / (M_higher - M_lower) * N_layers),
// clamped to [0, N_layers].
int n_higher_from_budget(const Budget& b);

// Memory of a plan that keeps n_higher layers in high precision, by linear
// interpolation between the all-low and all-high footprints.
double interpolated_memory(const Budget& b, int n_higher);

struct QuantPlan {
    std::vector<int> bits_per_layer;          // {2,4,8,16} per decoder block
    std::string ordering_name;                // lim | zd | reverse_lim | random:<seed> | sequential_top
    int n_higher = 0;
    double avg_bits = 0.0;                    // mean over non-pruned layers
    std::vector<int> pruned_layers;           // sorted, empty for pure quantization
    std::vector<double> outlier_fraction_per_layer; // empty unless outlier plan
    int64_t group_size = 128;
    std::optional<Budget> budget;

    int n_layers() const { return static_cast<int>(bits_per_layer.size()); }
    bool is_pruned(int layer) const;
};

// Orderings are permutations of layer indices, most important first.
std::vector<int> reverse_order(const std::vector<int>& order);
std::vector<int> random_order(int n_layers, uint64_t seed);
std::vector<int> sequential_order(int n_layers); // identity, for tests

// The n_higher most important layers get high_bits, the rest low_bits.
QuantPlan two_level_plan(const std::vector<int>& order, int n_higher, int high_bits, int low_bits);

// Top x layers at 8 bits, bottom 2x at 2 bits, remainder at 4.
QuantPlan three_level_plan(const std::vector<int>& order, int x);

enum class PruneMode { LeastImportant, SequentialTop };

// Remove k blocks: either the k least important under `order`, or k blocks
// from the top of the network keeping the final block. Remaining layers
// stay at base_bits.
QuantPlan pruning_plan(const std::vector<int>& order, PruneMode mode, int k, int base_bits);

// Per-layer outlier budgets: the n_high_threshold most important layers get
// p_high, the rest p_low; base bit level fixed (default 4).
QuantPlan outlier_plan(const std::vector<int>& order, int n_high_threshold, double p_high, double p_low,
                       int base_bits = 4);

struct PlanMemory {
    uint64_t idealized = 0;
    uint64_t exact = 0;
};

// Sums per-layer byte counts over the model's decoder-block weight matrices.
// Pruned layers contribute nothing.
PlanMemory plan_memory(const QuantPlan& plan, const TransformerModel& model);

std::string plan_to_json(const QuantPlan& plan);
QuantPlan plan_from_json(const std::string& text);

} // namespace lwq
