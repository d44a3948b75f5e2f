// SPDX-License-Identifier: Apache-2.0
#include "model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>
#include <unsupported/Eigen/SpecialFunctions>

#include "rng.hpp"
#include "util.hpp"

namespace lwq {

using nlohmann::json;

std::string config_to_json(const ModelConfig& c) {
    json j;
    j["n_layers"] = c.n_layers;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["d_ff"] = c.d_ff;
    j["vocab_size"] = c.vocab_size;
    j["max_seq_len"] = c.max_seq_len;
    j["norm_eps"] = c.norm_eps;
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("bad model config JSON: ") + e.what());
    }
    ModelConfig c;
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    return c;
}

static void validate_config(const ModelConfig& c) {
    if (c.n_layers < 1 || c.d_model < 1 || c.n_heads < 1 || c.d_ff < 1 || c.vocab_size < 1 ||
        c.max_seq_len < 1 || !(c.norm_eps > 0))
        fail(ErrorCode::ConfigError, "model config fields must be positive");
    if (c.d_model % c.n_heads != 0)
        fail(ErrorCode::ConfigError, "d_model must be divisible by n_heads");
}

std::vector<std::string> block_matrix_names(int layer) {
    std::string p = "blocks." + std::to_string(layer) + ".";
    return {p + "attn_q", p + "attn_k", p + "attn_v", p + "attn_o", p + "mlp_in", p + "mlp_out"};
}

// name -> shape for every tensor the config implies.
static std::vector<std::pair<std::string, std::vector<int64_t>>> expected_shapes(const ModelConfig& c) {
    std::vector<std::pair<std::string, std::vector<int64_t>>> out;
    int64_t d = c.d_model, ff = c.d_ff, v = c.vocab_size;
    out.emplace_back("embed", std::vector<int64_t>{v, d});
    out.emplace_back("pos_embed", std::vector<int64_t>{c.max_seq_len, d});
    for (int i = 0; i < c.n_layers; i++) {
        std::string p = "blocks." + std::to_string(i) + ".";
        out.emplace_back(p + "attn_q", std::vector<int64_t>{d, d});
        out.emplace_back(p + "attn_k", std::vector<int64_t>{d, d});
        out.emplace_back(p + "attn_v", std::vector<int64_t>{d, d});
        out.emplace_back(p + "attn_o", std::vector<int64_t>{d, d});
        out.emplace_back(p + "mlp_in", std::vector<int64_t>{d, ff});
        out.emplace_back(p + "mlp_out", std::vector<int64_t>{ff, d});
        out.emplace_back(p + "norm1", std::vector<int64_t>{d});
        out.emplace_back(p + "norm2", std::vector<int64_t>{d});
    }
    out.emplace_back("final_norm", std::vector<int64_t>{d});
    out.emplace_back("head", std::vector<int64_t>{d, v});
    return out;
}

int64_t block_matrix_numel(const ModelConfig& c) {
    int64_t d = c.d_model;
    return 4 * d * d + 2 * d * static_cast<int64_t>(c.d_ff);
}

int64_t param_count(const ModelConfig& c) {
    int64_t n = 0;
    for (const auto& [name, shape] : expected_shapes(c)) {
        int64_t k = 1;
        for (int64_t dim : shape) k *= dim;
        n += k;
    }
    return n;
}

const Tensor& TransformerModel::tensor(const std::string& name) const {
    auto it = weights.entries.find(name);
    if (it == weights.entries.end()) fail(ErrorCode::FormatError, "missing model tensor " + name);
    return it->second;
}

TransformerModel init_model(const ModelConfig& config, uint64_t seed) {
    validate_config(config);
    TransformerModel m;
    m.config = config;
    Rng rng(seed);
    // Fill in the canonical (lexicographic) tensor order so the byte
    // content is a pure function of (config, seed).
    auto shapes = expected_shapes(config);
    std::sort(shapes.begin(), shapes.end());
    for (const auto& [name, shape] : shapes) {
        Tensor t(DType::F32, shape);
        auto vals = t.f32_mut();
        bool is_norm = name.find("norm") != std::string::npos;
        if (is_norm) {
            std::fill(vals.begin(), vals.end(), 1.0f);
        } else {
            // fan_in: leading dim of matrices, d_model for embeddings.
            int64_t fan_in = (shape.size() == 2 && name != "embed" && name != "pos_embed")
                                 ? shape[0]
                                 : config.d_model;
            float std_dev = 1.0f / std::sqrt(static_cast<float>(fan_in));
            for (float& v : vals) v = static_cast<float>(rng.next_normal()) * std_dev;
        }
        m.weights.entries[name] = std::move(t);
    }
    m.weights.metadata["model_config"] = config_to_json(config);
    return m;
}

void save_model(const TransformerModel& model, const std::string& path) {
    NamedTensorMap map = model.weights;
    map.metadata["model_config"] = config_to_json(model.config);
    save_container(map, path);
}

static TransformerModel model_from_map(NamedTensorMap map) {
    auto it = map.metadata.find("model_config");
    if (it == map.metadata.end()) fail(ErrorCode::FormatError, "container has no model_config metadata");
    TransformerModel m;
    m.config = config_from_json(it->second);
    validate_config(m.config);
    for (auto& [name, shape] : expected_shapes(m.config)) {
        auto e = map.entries.find(name);
        if (e == map.entries.end()) {
            if (has_quantized(map, name)) {
                m.weights.entries[name] = dequantize(get_quantized(map, name));
            } else {
                fail(ErrorCode::FormatError, "missing model tensor " + name);
            }
        } else {
            Tensor t = e->second;
            if (t.dtype == DType::F16) t = Tensor::from_f32(t.shape, t.to_f32_vector());
            if (t.dtype != DType::F32) fail(ErrorCode::UnsupportedDtype, "weight tensor " + name + " must be float");
            m.weights.entries[name] = std::move(t);
        }
        if (m.weights.entries[name].shape != shape)
            fail(ErrorCode::FormatError, "tensor " + name + " has unexpected shape");
    }
    m.weights.metadata["model_config"] = it->second;
    return m;
}

TransformerModel load_model(const std::string& path) { return model_from_map(load_container(path)); }
TransformerModel load_any_model(const std::string& path) { return model_from_map(load_container(path)); }

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

static Eigen::Map<const RowMat> mat(const Tensor& t) {
    return Eigen::Map<const RowMat>(reinterpret_cast<const float*>(t.data.data()), t.shape[0], t.shape[1]);
}

// Row-wise layer norm with learned gain (no bias).
static RowMat layer_norm(const RowMat& x, const Tensor& gain, float eps) {
    Eigen::Map<const Eigen::RowVectorXf> g(reinterpret_cast<const float*>(gain.data.data()), x.cols());
    RowMat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); r++) {
        float mu = x.row(r).mean();
        float var = (x.row(r).array() - mu).square().mean();
        float inv = 1.0f / std::sqrt(var + eps);
        out.row(r) = ((x.row(r).array() - mu) * inv) * g.array();
    }
    return out;
}

static void causal_softmax_inplace(RowMat& scores) {
    for (Eigen::Index r = 0; r < scores.rows(); r++) {
        auto row = scores.row(r).head(r + 1).array();
        float mx = row.maxCoeff();
        row = (row - mx).exp();
        row /= row.sum();
        scores.row(r).tail(scores.cols() - r - 1).setZero();
    }
}

ForwardResult forward(const TransformerModel& model, std::span<const int32_t> tokens,
                      const ForwardOptions& opts) {
    const ModelConfig& c = model.config;
    const auto T = static_cast<Eigen::Index>(tokens.size());
    if (T < 1) fail(ErrorCode::InvalidInput, "empty token sequence");
    if (T > c.max_seq_len) fail(ErrorCode::InvalidInput, "sequence longer than max_seq_len");
    for (int32_t tok : tokens)
        if (tok < 0 || tok >= c.vocab_size) fail(ErrorCode::InvalidInput, "token out of range");

    auto embed = mat(model.tensor("embed"));
    auto pos = mat(model.tensor("pos_embed"));
    RowMat x(T, c.d_model);
    for (Eigen::Index t = 0; t < T; t++) x.row(t) = embed.row(tokens[t]) + pos.row(t);

    ForwardResult res;
    const int hd = c.d_model / c.n_heads;
    const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

    for (int i = 0; i < c.n_layers; i++) {
        std::string p = "blocks." + std::to_string(i) + ".";
        if (opts.capture) {
            BlockTrace tr;
            tr.layer_index = i;
            tr.input_states = x;
            res.traces.push_back(std::move(tr));
        }

        RowMat a = layer_norm(x, model.tensor(p + "norm1"), c.norm_eps);
        RowMat q = a * mat(model.tensor(p + "attn_q"));
        RowMat k = a * mat(model.tensor(p + "attn_k"));
        RowMat v = a * mat(model.tensor(p + "attn_v"));

        RowMat ctx(T, c.d_model);
        if (opts.capture_attn) res.attn.emplace_back();
        for (int h = 0; h < c.n_heads; h++) {
            auto qh = q.middleCols(h * hd, hd);
            auto kh = k.middleCols(h * hd, hd);
            auto vh = v.middleCols(h * hd, hd);
            RowMat scores = (qh * kh.transpose()) * inv_sqrt_hd;
            causal_softmax_inplace(scores);
            if (opts.capture_attn) res.attn.back().push_back(scores);
            ctx.middleCols(h * hd, hd) = scores * vh;
        }
        x += ctx * mat(model.tensor(p + "attn_o"));

        RowMat b = layer_norm(x, model.tensor(p + "norm2"), c.norm_eps);
        RowMat h1 = b * mat(model.tensor(p + "mlp_in"));
        // Exact erf-based GELU.
        h1 = (0.5f * h1.array() * (1.0f + (h1.array() * 0.70710678118654752440f).erf())).matrix();
        x += h1 * mat(model.tensor(p + "mlp_out"));

        if (opts.capture) res.traces.back().output_states = x;
    }

    RowMat f = layer_norm(x, model.tensor("final_norm"), c.norm_eps);
    res.logits = f * mat(model.tensor("head"));
    return res;
}

// ---------------------------------------------------------------------------
// Fake quantization / pruning
// ---------------------------------------------------------------------------

static void validate_plan_bits(const QuantPlan& plan) {
    for (int b : plan.bits_per_layer)
        if (b != 2 && b != 4 && b != 8 && b != 16)
            fail(ErrorCode::InvalidInput, "plan bit level must be one of {2,4,8,16}");
}

static Tensor fake_quant_tensor(const Tensor& t, int bits, double outlier_fraction,
                                const FakeQuantOptions& opts) {
    if (bits == 16) return t;
    GroupAffineParams p{bits, opts.group_size};
    if (outlier_fraction > 0.0) return dequantize(quantize_outlier_affine(t, p, outlier_fraction));
    if (bits == 8 && opts.symmetric_int8) return dequantize(quantize_symmetric_int8(t, SymmetricParams{}));
    return dequantize(quantize_group_affine(t, p));
}

TransformerModel apply_fake_quant(const TransformerModel& model, const QuantPlan& plan,
                                  const FakeQuantOptions& opts) {
    if (plan.n_layers() != model.config.n_layers)
        fail(ErrorCode::PlanMismatch, "plan covers " + std::to_string(plan.n_layers()) + " layers, model has " +
                                          std::to_string(model.config.n_layers));
    validate_plan_bits(plan);

    TransformerModel out = model;
    for (int i = 0; i < plan.n_layers(); i++) {
        if (plan.is_pruned(i)) continue;
        int bits = plan.bits_per_layer[static_cast<size_t>(i)];
        double frac = plan.outlier_fraction_per_layer.empty()
                          ? 0.0
                          : plan.outlier_fraction_per_layer[static_cast<size_t>(i)];
        if (bits == 16) continue;
        for (const std::string& name : block_matrix_names(i))
            out.weights.entries[name] = fake_quant_tensor(model.tensor(name), bits, frac, opts);
    }
    if (!plan.pruned_layers.empty())
        out = prune_layers(out, std::set<int>(plan.pruned_layers.begin(), plan.pruned_layers.end()));
    return out;
}

TransformerModel prune_layers(const TransformerModel& model, const std::set<int>& remove) {
    for (int i : remove)
        if (i < 0 || i >= model.config.n_layers) fail(ErrorCode::InvalidInput, "prune index out of range");
    if (remove.size() >= static_cast<size_t>(model.config.n_layers))
        fail(ErrorCode::InvalidInput, "cannot prune every layer");
    if (remove.empty()) return model;

    TransformerModel out;
    out.config = model.config;
    out.config.n_layers = model.config.n_layers - static_cast<int>(remove.size());
    for (const auto& [name, t] : model.weights.entries)
        if (name.rfind("blocks.", 0) != 0) out.weights.entries[name] = t;

    static const char* suffixes[] = {"attn_q", "attn_k", "attn_v", "attn_o",
                                     "mlp_in", "mlp_out", "norm1", "norm2"};
    int dst = 0;
    for (int src = 0; src < model.config.n_layers; src++) {
        if (remove.count(src)) continue;
        for (const char* s : suffixes) {
            out.weights.entries["blocks." + std::to_string(dst) + "." + s] =
                model.tensor("blocks." + std::to_string(src) + "." + std::string(s));
        }
        dst++;
    }
    out.weights.metadata["model_config"] = config_to_json(out.config);
    return out;
}

// ---------------------------------------------------------------------------
// Perplexity
// ---------------------------------------------------------------------------

double perplexity(const TransformerModel& model, const TokenBatch& batch, int n_threads) {
    if (batch.sequences.empty()) fail(ErrorCode::InvalidInput, "empty corpus");

    struct SeqStat {
        double nll = 0.0;
        int64_t positions = 0;
    };
    const int64_t n = static_cast<int64_t>(batch.sequences.size());
    std::function<SeqStat(int64_t)> eval_seq = [&](int64_t s) {
        const auto& seq = batch.sequences[static_cast<size_t>(s)];
        SeqStat st;
        if (seq.size() < 2) return st;
        ForwardResult r = forward(model, seq);
        for (Eigen::Index t = 0; t + 1 < static_cast<Eigen::Index>(seq.size()); t++) {
            float mx = r.logits.row(t).maxCoeff();
            double denom = ((r.logits.row(t).array() - mx).cast<double>()).exp().sum();
            int32_t target = seq[static_cast<size_t>(t) + 1];
            st.nll += std::log(denom) + static_cast<double>(mx) - static_cast<double>(r.logits(t, target));
            st.positions++;
        }
        return st;
    };
    std::vector<SeqStat> stats = parallel_map<SeqStat>(n, n_threads, eval_seq);

    double total = 0.0;
    int64_t positions = 0;
    for (const auto& st : stats) {
        total += st.nll;
        positions += st.positions;
    }
    if (positions == 0) fail(ErrorCode::InvalidInput, "corpus has no next-token positions");
    return std::exp(total / static_cast<double>(positions));
}

// ---------------------------------------------------------------------------
// Quantized checkpoints
// ---------------------------------------------------------------------------

void save_quantized_model(const TransformerModel& model, const QuantPlan& plan, const FakeQuantOptions& opts,
                          const std::string& path) {
    if (plan.n_layers() != model.config.n_layers)
        fail(ErrorCode::PlanMismatch, "plan/model layer count mismatch");
    validate_plan_bits(plan);

    // Prune first so block indices in the file match the loaded model.
    TransformerModel base = plan.pruned_layers.empty()
                                ? model
                                : prune_layers(model, std::set<int>(plan.pruned_layers.begin(),
                                                                    plan.pruned_layers.end()));
    std::vector<int> bits;
    std::vector<double> fracs;
    for (int i = 0; i < plan.n_layers(); i++) {
        if (plan.is_pruned(i)) continue;
        bits.push_back(plan.bits_per_layer[static_cast<size_t>(i)]);
        fracs.push_back(plan.outlier_fraction_per_layer.empty()
                            ? 0.0
                            : plan.outlier_fraction_per_layer[static_cast<size_t>(i)]);
    }

    NamedTensorMap map = base.weights;
    map.metadata["model_config"] = config_to_json(base.config);
    map.metadata["quant_plan"] = plan_to_json(plan);
    for (int i = 0; i < base.config.n_layers; i++) {
        int b = bits[static_cast<size_t>(i)];
        double frac = fracs[static_cast<size_t>(i)];
        if (b == 16) continue;
        for (const std::string& name : block_matrix_names(i)) {
            const Tensor& t = base.tensor(name);
            QuantizedTensor q;
            GroupAffineParams p{b, opts.group_size};
            if (frac > 0.0) q = quantize_outlier_affine(t, p, frac);
            else if (b == 8 && opts.symmetric_int8) q = quantize_symmetric_int8(t, SymmetricParams{});
            else q = quantize_group_affine(t, p);
            map.entries.erase(name);
            put_quantized(map, name, q);
        }
    }
    save_container(map, path);
}

} // namespace lwq
