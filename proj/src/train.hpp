// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "model.hpp"

namespace lwq {

struct TrainConfig {
    int64_t steps = 300;
    int batch_size = 4;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 1234;
};

// Next-token cross-entropy with Adam. Sequences are drawn from the batch
// in a seeded deterministic order; the result is a pure function of
// (model, batch, config). Returns the mean loss of the final step.
double train_model(TransformerModel& model, const TokenBatch& batch, const TrainConfig& cfg);

} // namespace lwq
