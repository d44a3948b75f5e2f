// SPDX-License-Identifier: Apache-2.0
#include "train.hpp"

#include <cmath>
#include <map>

#include "rng.hpp"

namespace lwq {

namespace {

using Eigen::Index;

struct BlockCache {
    RowMat x0;        // block input
    RowMat ln1_hat;   // normalized pre-gain activations
    Eigen::VectorXf ln1_inv; // per-row 1/sqrt(var+eps)
    RowMat a;         // ln1 output (post gain)
    RowMat q, k, v;
    std::vector<RowMat> probs; // per head [T,T]
    RowMat ctx;
    RowMat x1;        // after attention residual
    RowMat ln2_hat;
    Eigen::VectorXf ln2_inv;
    RowMat b;
    RowMat h1;        // mlp_in output, pre-activation
    RowMat act;       // gelu(h1)
};

struct LnCache {
    RowMat hat;
    Eigen::VectorXf inv;
};

RowMat layer_norm_fwd(const RowMat& x, const Eigen::VectorXf& gain, float eps, LnCache& cache) {
    cache.hat.resize(x.rows(), x.cols());
    cache.inv.resize(x.rows());
    RowMat out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); r++) {
        float mu = x.row(r).mean();
        float var = (x.row(r).array() - mu).square().mean();
        float inv = 1.0f / std::sqrt(var + eps);
        cache.inv(r) = inv;
        cache.hat.row(r) = (x.row(r).array() - mu) * inv;
        out.row(r) = cache.hat.row(r).array() * gain.transpose().array();
    }
    return out;
}

// dy -> dx; accumulates dgain.
RowMat layer_norm_bwd(const RowMat& dy, const LnCache& cache, const Eigen::VectorXf& gain,
                      Eigen::VectorXf& dgain) {
    RowMat dx(dy.rows(), dy.cols());
    const float n = static_cast<float>(dy.cols());
    for (Index r = 0; r < dy.rows(); r++) {
        dgain += (dy.row(r).array() * cache.hat.row(r).array()).matrix().transpose();
        Eigen::RowVectorXf dhat = (dy.row(r).array() * gain.transpose().array()).matrix();
        float m1 = dhat.sum() / n;
        float m2 = (dhat.array() * cache.hat.row(r).array()).sum() / n;
        dx.row(r) = ((dhat.array() - m1 - cache.hat.row(r).array() * m2) * cache.inv(r)).matrix();
    }
    return dx;
}

inline float gelu_fn(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f)); }

inline float gelu_grad(float x) {
    const float kInvSqrt2 = 0.70710678118654752440f;
    const float kInvSqrt2Pi = 0.39894228040143267794f;
    float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
    float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
    return cdf + x * pdf;
}

struct Params {
    // Views over the model's tensors, by name.
    std::map<std::string, Eigen::Map<RowMat>> mats;
    std::map<std::string, Eigen::Map<Eigen::VectorXf>> vecs;
};

} // namespace

double train_model(TransformerModel& model, const TokenBatch& batch, const TrainConfig& cfg) {
    if (batch.sequences.empty()) fail(ErrorCode::InvalidInput, "empty training batch");
    const ModelConfig& c = model.config;
    const int hd = c.d_model / c.n_heads;
    const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

    // Gather parameter views and matching gradient/Adam buffers.
    std::vector<std::string> names;
    for (const auto& [name, t] : model.weights.entries) names.push_back(name);
    std::map<std::string, RowMat> grads, adam_m, adam_v;
    for (const auto& name : names) {
        const Tensor& t = model.weights.entries[name];
        Index rows = t.shape[0];
        Index cols = t.shape.size() == 2 ? t.shape[1] : 1;
        grads[name] = RowMat::Zero(rows, cols);
        adam_m[name] = RowMat::Zero(rows, cols);
        adam_v[name] = RowMat::Zero(rows, cols);
    }
    auto pmat = [&](const std::string& name) {
        Tensor& t = model.weights.entries.at(name);
        Index rows = t.shape[0];
        Index cols = t.shape.size() == 2 ? t.shape[1] : 1;
        return Eigen::Map<RowMat>(reinterpret_cast<float*>(t.data.data()), rows, cols);
    };

    // Usable sequences (need at least one next-token position).
    std::vector<const std::vector<int32_t>*> seqs;
    for (const auto& s : batch.sequences)
        if (s.size() >= 2) seqs.push_back(&s);
    if (seqs.empty()) fail(ErrorCode::InvalidInput, "no trainable sequences");

    Rng picker(cfg.seed);
    double last_loss = 0.0;

    for (int64_t step = 0; step < cfg.steps; step++) {
        for (auto& [name, g] : grads) g.setZero();

        // Count positions first so the loss normalizer is exact.
        std::vector<const std::vector<int32_t>*> chosen;
        int64_t positions = 0;
        for (int bi = 0; bi < cfg.batch_size; bi++) {
            const auto* s = seqs[picker.next_below(seqs.size())];
            chosen.push_back(s);
            positions += static_cast<int64_t>(s->size()) - 1;
        }
        const float inv_positions = 1.0f / static_cast<float>(positions);
        double loss = 0.0;

        for (const auto* sp : chosen) {
            const auto& seq = *sp;
            const auto T = static_cast<Index>(seq.size());

            // ---- forward with caches ----
            RowMat x(T, c.d_model);
            auto embed = pmat("embed");
            auto pos = pmat("pos_embed");
            for (Index t = 0; t < T; t++) x.row(t) = embed.row(seq[static_cast<size_t>(t)]) + pos.row(t);

            std::vector<BlockCache> caches(static_cast<size_t>(c.n_layers));
            std::vector<LnCache> ln1(static_cast<size_t>(c.n_layers)), ln2(static_cast<size_t>(c.n_layers));
            for (int i = 0; i < c.n_layers; i++) {
                std::string p = "blocks." + std::to_string(i) + ".";
                BlockCache& cc = caches[static_cast<size_t>(i)];
                cc.x0 = x;
                Eigen::VectorXf g1 = pmat(p + "norm1").col(0);
                cc.a = layer_norm_fwd(x, g1, c.norm_eps, ln1[static_cast<size_t>(i)]);
                cc.q = cc.a * pmat(p + "attn_q");
                cc.k = cc.a * pmat(p + "attn_k");
                cc.v = cc.a * pmat(p + "attn_v");
                cc.ctx.resize(T, c.d_model);
                cc.probs.resize(static_cast<size_t>(c.n_heads));
                for (int h = 0; h < c.n_heads; h++) {
                    RowMat scores = (cc.q.middleCols(h * hd, hd) * cc.k.middleCols(h * hd, hd).transpose()) *
                                    inv_sqrt_hd;
                    for (Index r = 0; r < T; r++) {
                        float mx = scores.row(r).head(r + 1).maxCoeff();
                        float denom = 0.0f;
                        for (Index col = 0; col <= r; col++) {
                            float e = std::exp(scores(r, col) - mx);
                            scores(r, col) = e;
                            denom += e;
                        }
                        for (Index col = 0; col <= r; col++) scores(r, col) /= denom;
                        for (Index col = r + 1; col < T; col++) scores(r, col) = 0.0f;
                    }
                    cc.probs[static_cast<size_t>(h)] = scores;
                    cc.ctx.middleCols(h * hd, hd) = scores * cc.v.middleCols(h * hd, hd);
                }
                x += cc.ctx * pmat(p + "attn_o");
                cc.x1 = x;
                Eigen::VectorXf g2 = pmat(p + "norm2").col(0);
                cc.b = layer_norm_fwd(x, g2, c.norm_eps, ln2[static_cast<size_t>(i)]);
                cc.h1 = cc.b * pmat(p + "mlp_in");
                cc.act = cc.h1.unaryExpr([](float vx) { return gelu_fn(vx); });
                x += cc.act * pmat(p + "mlp_out");
            }
            LnCache lnf;
            Eigen::VectorXf gf = pmat("final_norm").col(0);
            RowMat f = layer_norm_fwd(x, gf, c.norm_eps, lnf);
            RowMat logits = f * pmat("head");

            // ---- loss and dlogits ----
            RowMat dlogits = RowMat::Zero(T, c.vocab_size);
            for (Index t = 0; t + 1 < T; t++) {
                float mx = logits.row(t).maxCoeff();
                double denom = 0.0;
                for (Index col = 0; col < logits.cols(); col++)
                    denom += std::exp(static_cast<double>(logits(t, col) - mx));
                int32_t target = seq[static_cast<size_t>(t) + 1];
                loss += std::log(denom) + mx - logits(t, target);
                for (Index col = 0; col < logits.cols(); col++) {
                    float pcol = static_cast<float>(std::exp(static_cast<double>(logits(t, col) - mx)) / denom);
                    dlogits(t, col) = pcol * inv_positions;
                }
                dlogits(t, target) -= inv_positions;
            }

            // ---- backward ----
            grads["head"] += f.transpose() * dlogits;
            RowMat df = dlogits * pmat("head").transpose();
            Eigen::VectorXf dgf = Eigen::VectorXf::Zero(c.d_model);
            RowMat dx = layer_norm_bwd(df, lnf, gf, dgf);
            grads["final_norm"].col(0) += dgf;

            for (int i = c.n_layers - 1; i >= 0; i--) {
                std::string p = "blocks." + std::to_string(i) + ".";
                BlockCache& cc = caches[static_cast<size_t>(i)];

                // MLP branch: x2 = x1 + act * Wout
                grads[p + "mlp_out"] += cc.act.transpose() * dx;
                RowMat dact = dx * pmat(p + "mlp_out").transpose();
                RowMat dh1 = dact.array() * cc.h1.unaryExpr([](float vx) { return gelu_grad(vx); }).array();
                grads[p + "mlp_in"] += cc.b.transpose() * dh1;
                RowMat db = dh1 * pmat(p + "mlp_in").transpose();
                Eigen::VectorXf g2 = pmat(p + "norm2").col(0);
                Eigen::VectorXf dg2 = Eigen::VectorXf::Zero(c.d_model);
                RowMat dx1 = dx + layer_norm_bwd(db, ln2[static_cast<size_t>(i)], g2, dg2);
                grads[p + "norm2"].col(0) += dg2;

                // Attention branch: x1 = x0 + ctx * Wo
                grads[p + "attn_o"] += cc.ctx.transpose() * dx1;
                RowMat dctx = dx1 * pmat(p + "attn_o").transpose();
                const auto T2 = cc.x0.rows();
                RowMat dq(T2, c.d_model), dk(T2, c.d_model), dv(T2, c.d_model);
                for (int h = 0; h < c.n_heads; h++) {
                    auto qh = cc.q.middleCols(h * hd, hd);
                    auto kh = cc.k.middleCols(h * hd, hd);
                    auto vh = cc.v.middleCols(h * hd, hd);
                    const RowMat& probs = cc.probs[static_cast<size_t>(h)];
                    auto dch = dctx.middleCols(h * hd, hd);
                    RowMat dprobs = dch * vh.transpose();
                    dv.middleCols(h * hd, hd) = probs.transpose() * dch;
                    // Softmax backward per row (masked entries have prob 0).
                    RowMat dscores(T2, T2);
                    for (Index r = 0; r < T2; r++) {
                        float inner = (dprobs.row(r).array() * probs.row(r).array()).sum();
                        dscores.row(r) =
                            (probs.row(r).array() * (dprobs.row(r).array() - inner)).matrix();
                    }
                    dq.middleCols(h * hd, hd) = (dscores * kh) * inv_sqrt_hd;
                    dk.middleCols(h * hd, hd) = (dscores.transpose() * qh) * inv_sqrt_hd;
                }
                grads[p + "attn_q"] += cc.a.transpose() * dq;
                grads[p + "attn_k"] += cc.a.transpose() * dk;
                grads[p + "attn_v"] += cc.a.transpose() * dv;
                RowMat da = dq * pmat(p + "attn_q").transpose() + dk * pmat(p + "attn_k").transpose() +
                            dv * pmat(p + "attn_v").transpose();
                Eigen::VectorXf g1 = pmat(p + "norm1").col(0);
                Eigen::VectorXf dg1 = Eigen::VectorXf::Zero(c.d_model);
                dx = dx1 + layer_norm_bwd(da, ln1[static_cast<size_t>(i)], g1, dg1);
                grads[p + "norm1"].col(0) += dg1;
            }

            // Embeddings.
            for (Index t = 0; t < static_cast<Index>(seq.size()); t++) {
                grads["embed"].row(seq[static_cast<size_t>(t)]) += dx.row(t);
                grads["pos_embed"].row(t) += dx.row(t);
            }
        }

        // ---- Adam update ----
        double t_step = static_cast<double>(step + 1);
        double bc1 = 1.0 - std::pow(cfg.beta1, t_step);
        double bc2 = 1.0 - std::pow(cfg.beta2, t_step);
        for (const auto& name : names) {
            auto w = pmat(name);
            RowMat& g = grads[name];
            RowMat& m = adam_m[name];
            RowMat& v = adam_v[name];
            m = static_cast<float>(cfg.beta1) * m + static_cast<float>(1.0 - cfg.beta1) * g;
            v = (static_cast<float>(cfg.beta2) * v.array() +
                 static_cast<float>(1.0 - cfg.beta2) * g.array().square())
                    .matrix();
            auto mhat = (m.array() / static_cast<float>(bc1));
            auto vhat = (v.array() / static_cast<float>(bc2));
            w.array() -= static_cast<float>(cfg.lr) * mhat / (vhat.sqrt() + static_cast<float>(cfg.eps));
        }
        last_loss = loss / static_cast<double>(positions);
    }
    return last_loss;
}

} // namespace lwq
