// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"

namespace lwq {

struct ImportanceReport {
    int n_layers = 0;
    std::vector<double> lim;        // empty if not computed
    std::vector<double> zd;         // empty if not computed
    std::vector<int> lim_order;     // descending importance, ties to lower index
    std::vector<int> zd_order;
    std::string calibration_fingerprint; // empty for ZD-only reports
};

struct ZdOptions {
    bool two_sided = false;  // count |z| > 1 instead of z > 1
    bool per_matrix = false; // mean of per-matrix ZD instead of pooled
};

// Negative cosine similarity; the per-position LIM contribution.
double neg_cosine(std::span<const float> a, std::span<const float> b);

// Mean of -cos(input_t, output_t) over token positions; positions where
// either residual vector has norm < 1e-12 are skipped.
std::vector<double> lim_from_traces(const std::vector<std::vector<BlockTrace>>& per_sequence_traces,
                                    int n_layers);

std::vector<double> lim_scores(const TransformerModel& model, const TokenBatch& batch, int n_threads = 1);

// Fraction of a value population with z-score strictly above 1 (or |z|>1).
double zd_of_values(std::span<const float> values, bool two_sided = false);

std::vector<double> zd_scores(const TransformerModel& model, const ZdOptions& opts = {});

// Descending by score, ties broken by the lower layer index.
std::vector<int> importance_order(const std::vector<double>& scores);

struct ReportRequest {
    bool want_lim = true;
    bool want_zd = true;
    ZdOptions zd_options;
    int n_threads = 1;
};

ImportanceReport build_report(const TransformerModel& model, const TokenBatch* batch,
                              const ReportRequest& req = {},
                              const std::string& calibration_fingerprint = "");

std::string report_to_json(const ImportanceReport& r);
ImportanceReport report_from_json(const std::string& text);
std::string report_to_csv(const ImportanceReport& r); // columns: layer,lim,zd

// Resolve a named ordering ("lim", "zd", "reverse_lim", "random:<seed>",
// "sequential") against a report.
std::vector<int> ordering_by_name(const ImportanceReport& r, const std::string& name);

} // namespace lwq
