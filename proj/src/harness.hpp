// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "importance.hpp"
#include "model.hpp"
#include "planner.hpp"

namespace lwq {

struct EvalReport {
    std::string ordering_name;
    double avg_bits = 16.0;
    int n_low_layers = 0;
    double perplexity = 0.0;
    double baseline_perplexity = 0.0; // 0 when no baseline was evaluated
    double retention = 0.0;           // exp(-(log ppl - log ppl_base)), clamped to (0,1]
    double runtime_seconds = 0.0;
};

std::string eval_report_to_json(const EvalReport& r);

double retention_factor_from(double ppl, double baseline_ppl);

struct SweepOptions {
    std::vector<std::string> orderings = {"lim", "zd", "reverse_lim", "random"};
    int high_bits = 4;
    int low_bits = 2;
    int random_seeds = 3;
    uint64_t seed = 0; // base seed for the random ordering
    int64_t group_size = 128;
    double retention_factor = 10.0 / 9.0; // allowed ppl inflation vs the all-high plan
    int64_t max_eval_tokens = 0;          // 0 = no cap
    int n_threads = 1;
};

struct SweepRow {
    std::string ordering;
    int n_low = 0;
    double avg_bits = 0.0;
    uint64_t idealized_bytes = 0;
    uint64_t exact_bytes = 0;
    double perplexity = 0.0; // mean over seeds for the random ordering
    double stddev = 0.0;     // across seeds; 0 for deterministic orderings
};

struct RetentionPoint {
    std::string ordering;
    int n_low = 0;        // largest n_low whose ppl stays within the factor
    double avg_bits = 0.0;
    double perplexity = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows; // sorted by (ordering, n_low)
    std::vector<RetentionPoint> retention;
    double baseline_perplexity = 0.0; // the n_low = 0 plan
};

SweepResult run_sweep(const TransformerModel& model, const TokenBatch& batch, const ImportanceReport& report,
                      const SweepOptions& opts);

// Header: ordering,n_low,avg_bits,idealized_bytes,exact_bytes,perplexity,stddev
// followed by one "# retention,..." comment line per ordering.
std::string sweep_to_csv(const SweepResult& result);

struct ComparePruneOptions {
    int high_bits = 4; // low bits are high/2 so one pruned layer matches
    std::string ordering = "lim";
    int64_t group_size = 128;
    int64_t max_eval_tokens = 0;
    int n_threads = 1;
    bool evaluate = true; // memory columns only when false
};

struct ComparePruneRow {
    int increment = 0;
    std::string variant; // quantize | prune_importance | prune_top
    double avg_bits = 0.0;
    uint64_t idealized_bytes = 0;
    uint64_t exact_bytes = 0;
    double perplexity = 0.0;
};

// Per increment k: 2k layers moved to low bits vs k layers pruned (by
// importance, and from the top). Raises Internal if the idealized byte
// counts ever disagree.
std::vector<ComparePruneRow> run_compare_prune(const TransformerModel& model, const TokenBatch& batch,
                                               const ImportanceReport& report,
                                               const ComparePruneOptions& opts);

std::string compare_prune_to_csv(const std::vector<ComparePruneRow>& rows);

// Leading sequences of the batch until max_tokens is covered (0 = all).
TokenBatch truncate_batch(const TokenBatch& batch, int64_t max_tokens);

} // namespace lwq
