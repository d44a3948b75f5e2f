// SPDX-License-Identifier: Apache-2.0
#include "importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "util.hpp"

namespace lwq {

using nlohmann::json;

double neg_cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) fail(ErrorCode::InvalidInput, "vector length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); i++) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    return -dot / (std::sqrt(na) * std::sqrt(nb));
}

static constexpr double kNormFloor = 1e-12;

std::vector<double> lim_from_traces(const std::vector<std::vector<BlockTrace>>& per_sequence_traces,
                                    int n_layers) {
    std::vector<double> sum(static_cast<size_t>(n_layers), 0.0);
    std::vector<int64_t> count(static_cast<size_t>(n_layers), 0);
    for (const auto& traces : per_sequence_traces) {
        if (static_cast<int>(traces.size()) != n_layers)
            fail(ErrorCode::InvalidInput, "trace count does not match layer count");
        for (int i = 0; i < n_layers; i++) {
            const BlockTrace& tr = traces[static_cast<size_t>(i)];
            for (Eigen::Index t = 0; t < tr.input_states.rows(); t++) {
                double ni = tr.input_states.row(t).norm();
                double no = tr.output_states.row(t).norm();
                if (ni < kNormFloor || no < kNormFloor) continue;
                std::span<const float> in(tr.input_states.row(t).data(),
                                          static_cast<size_t>(tr.input_states.cols()));
                std::span<const float> outv(tr.output_states.row(t).data(),
                                            static_cast<size_t>(tr.output_states.cols()));
                sum[static_cast<size_t>(i)] += neg_cosine(in, outv);
                count[static_cast<size_t>(i)]++;
            }
        }
    }
    std::vector<double> lim(static_cast<size_t>(n_layers));
    for (int i = 0; i < n_layers; i++) {
        if (count[static_cast<size_t>(i)] == 0)
            fail(ErrorCode::DegenerateActivations, "all positions degenerate for layer " + std::to_string(i));
        lim[static_cast<size_t>(i)] = sum[static_cast<size_t>(i)] / static_cast<double>(count[static_cast<size_t>(i)]);
    }
    return lim;
}

std::vector<double> lim_scores(const TransformerModel& model, const TokenBatch& batch, int n_threads) {
    if (batch.sequences.empty()) fail(ErrorCode::InvalidInput, "empty calibration batch");
    ForwardOptions opts;
    opts.capture = true;
    const int64_t n = static_cast<int64_t>(batch.sequences.size());
    std::function<std::vector<BlockTrace>(int64_t)> run = [&](int64_t s) {
        return forward(model, batch.sequences[static_cast<size_t>(s)], opts).traces;
    };
    std::vector<std::vector<BlockTrace>> traces = parallel_map<std::vector<BlockTrace>>(n, n_threads, run);
    return lim_from_traces(traces, model.config.n_layers);
}

double zd_of_values(std::span<const float> values, bool two_sided) {
    if (values.empty()) fail(ErrorCode::InvalidInput, "empty value population");
    double sum = 0.0;
    for (float v : values) sum += v;
    double mu = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (float v : values) sq += (v - mu) * (v - mu);
    double sigma = std::sqrt(sq / static_cast<double>(values.size())); // population std
    if (sigma < 1e-20) return 0.0;
    int64_t hits = 0;
    for (float v : values) {
        double z = (v - mu) / sigma;
        if (two_sided ? std::fabs(z) > 1.0 : z > 1.0) hits++;
    }
    return static_cast<double>(hits) / static_cast<double>(values.size());
}

std::vector<double> zd_scores(const TransformerModel& model, const ZdOptions& opts) {
    std::vector<double> zd(static_cast<size_t>(model.config.n_layers));
    for (int i = 0; i < model.config.n_layers; i++) {
        if (opts.per_matrix) {
            double acc = 0.0;
            int n = 0;
            for (const std::string& name : block_matrix_names(i)) {
                auto vals = model.tensor(name).f32();
                acc += zd_of_values(vals, opts.two_sided);
                n++;
            }
            zd[static_cast<size_t>(i)] = acc / n;
        } else {
            std::vector<float> pooled;
            for (const std::string& name : block_matrix_names(i)) {
                auto vals = model.tensor(name).f32();
                pooled.insert(pooled.end(), vals.begin(), vals.end());
            }
            zd[static_cast<size_t>(i)] = zd_of_values(pooled, opts.two_sided);
        }
    }
    return zd;
}

std::vector<int> importance_order(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    return order;
}

ImportanceReport build_report(const TransformerModel& model, const TokenBatch* batch,
                              const ReportRequest& req, const std::string& calibration_fingerprint) {
    ImportanceReport r;
    r.n_layers = model.config.n_layers;
    if (req.want_lim) {
        if (batch == nullptr) fail(ErrorCode::InvalidInput, "LIM requires a calibration batch");
        r.lim = lim_scores(model, *batch, req.n_threads);
        r.lim_order = importance_order(r.lim);
        r.calibration_fingerprint = calibration_fingerprint;
    }
    if (req.want_zd) {
        r.zd = zd_scores(model, req.zd_options);
        r.zd_order = importance_order(r.zd);
    }
    return r;
}

std::string report_to_json(const ImportanceReport& r) {
    json j;
    j["n_layers"] = r.n_layers;
    j["lim"] = r.lim;
    j["zd"] = r.zd;
    j["lim_order"] = r.lim_order;
    j["zd_order"] = r.zd_order;
    j["calibration_fingerprint"] = r.calibration_fingerprint;
    return j.dump();
}

ImportanceReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("bad importance report JSON: ") + e.what());
    }
    ImportanceReport r;
    r.n_layers = j.at("n_layers").get<int>();
    r.lim = j.value("lim", std::vector<double>());
    r.zd = j.value("zd", std::vector<double>());
    r.lim_order = j.value("lim_order", std::vector<int>());
    r.zd_order = j.value("zd_order", std::vector<int>());
    r.calibration_fingerprint = j.value("calibration_fingerprint", std::string());
    return r;
}

std::string report_to_csv(const ImportanceReport& r) {
    std::ostringstream out;
    out << "layer,lim,zd\n";
    for (int i = 0; i < r.n_layers; i++) {
        out << i << ",";
        if (!r.lim.empty()) out << json(r.lim[static_cast<size_t>(i)]).dump();
        out << ",";
        if (!r.zd.empty()) out << json(r.zd[static_cast<size_t>(i)]).dump();
        out << "\n";
    }
    return out.str();
}

std::vector<int> ordering_by_name(const ImportanceReport& r, const std::string& name) {
    auto require = [&](const std::vector<int>& order, const char* which) {
        if (static_cast<int>(order.size()) != r.n_layers)
            fail(ErrorCode::InvalidInput, std::string("report has no ") + which + " ordering");
        return order;
    };
    if (name == "lim") return require(r.lim_order, "lim");
    if (name == "zd") return require(r.zd_order, "zd");
    if (name == "reverse_lim" || name == "reverse") return reverse_order(require(r.lim_order, "lim"));
    if (name == "sequential" || name == "sequential_top") return sequential_order(r.n_layers);
    if (name.rfind("random:", 0) == 0) {
        uint64_t seed = std::stoull(name.substr(7));
        return random_order(r.n_layers, seed);
    }
    fail(ErrorCode::InvalidInput, "unknown ordering name: " + name);
}

} // namespace lwq
