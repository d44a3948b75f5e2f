// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "corpus.hpp"
#include "planner.hpp"
#include "quant.hpp"
#include "tensor.hpp"

namespace lwq {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int n_layers = 12;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 256;
    int max_seq_len = 256;
    float norm_eps = 1e-5f;
};

std::string config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const std::string& text);

// Weight naming: blocks.{i}.{attn_q,attn_k,attn_v,attn_o,mlp_in,mlp_out,
// norm1,norm2}, plus embed, pos_embed, final_norm, head. Matrices are
// [in, out] so activations multiply on the left.
struct TransformerModel {
    ModelConfig config;
    NamedTensorMap weights;

    const Tensor& tensor(const std::string& name) const;
};

// Names of the quantizable (2-D) weight matrices of one block.
std::vector<std::string> block_matrix_names(int layer);
int64_t block_matrix_numel(const ModelConfig& c); // per-block 2-D element count
int64_t param_count(const ModelConfig& c);

TransformerModel init_model(const ModelConfig& config, uint64_t seed);

void save_model(const TransformerModel& model, const std::string& path);
TransformerModel load_model(const std::string& path);

struct BlockTrace {
    int layer_index = 0;
    RowMat input_states;  // residual stream entering the block [T, d_model]
    RowMat output_states; // residual stream leaving the block
};

struct ForwardOptions {
    bool capture = false;      // record BlockTraces
    bool capture_attn = false; // record per-head attention rows (tests only)
};

struct ForwardResult {
    RowMat logits; // [T, vocab]
    std::vector<BlockTrace> traces;
    std::vector<std::vector<RowMat>> attn; // [layer][head] -> [T, T]
};

// Pre-norm decoder: x += Attn(LN1(x)); x += MLP(LN2(x)); causal masking.
ForwardResult forward(const TransformerModel& model, std::span<const int32_t> tokens,
                      const ForwardOptions& opts = {});

struct FakeQuantOptions {
    int64_t group_size = 128;
    bool symmetric_int8 = false; // use the symmetric kernel at 8 bits
};

// Replace every block weight matrix by dequantize(quantize(.)) at the
// plan's bit level; 16 bits passes through untouched. Norm vectors,
// embeddings and the head are never quantized. Pruned layers are removed.
TransformerModel apply_fake_quant(const TransformerModel& model, const QuantPlan& plan,
                                  const FakeQuantOptions& opts = {});

TransformerModel prune_layers(const TransformerModel& model, const std::set<int>& remove);

// exp(mean negative log-likelihood) over all next-token positions, pooled
// across sequences. n_threads affects speed only; the reduction order is
// fixed.
double perplexity(const TransformerModel& model, const TokenBatch& batch, int n_threads = 1);

// Quantized checkpoint: block matrices covered by the plan are stored in
// packed form, everything else verbatim. Loading dequantizes, so the
// loaded model's forward matches apply_fake_quant bit for bit.
void save_quantized_model(const TransformerModel& model, const QuantPlan& plan, const FakeQuantOptions& opts,
                          const std::string& path);
TransformerModel load_any_model(const std::string& path); // plain or quantized

} // namespace lwq
