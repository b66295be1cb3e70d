// SPDX-License-Identifier: Apache-2.0
//
// Toy vision-transformer classifier with explicit backpropagation.
//
//   input (batch x tokens*patch_dim) -> tokens -> dense patch embedding
//   + positional embedding -> depth x pre-norm block -> layer norm
//   -> mean pool over tokens -> dense head -> softmax cross-entropy
//
//   block:  x += proj(attention(qkv(LN1(x))))
//           x += fc2(GELU(fc1(LN2(x))))
//
// qkv, proj, fc1 and fc2 run through the MX linear layer; the embedding,
// head, norms and biases stay in master precision.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mxfp4/matrix.hpp"
#include "mxfp4/mx_linear.hpp"
#include "mxfp4/train/config.hpp"
#include "mxfp4/train/dataset.hpp"

namespace mxfp4::train {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool quantized = false;  // weight of an MX linear layer
    bool decay = false;      // receives weight decay
    std::uint32_t layer_id = 0;  // random substream base of its quantizers
};

// Everything the forward and backward passes need besides the weights.
struct StepContext {
    QuantConfig quant{};
    std::uint64_t seed = 0;
    std::uint32_t step = 0;
    // EMA averages indexed like Model::params(); null entries use the
    // plain round-to-nearest weight quantizer.
    std::vector<const Matrix*> ema;
};

struct StepOutput {
    double loss = 0.0;  // mean cross-entropy
    int correct = 0;
};

// The forward-quantized weight exactly as Q2 produces it, in W's layout,
// plus its block representation (of W^T, column groups) when Q2 is on.
struct QuantizedWeight {
    Matrix values;
    std::optional<QuantizedMatrix> blocks;
};

QuantizedWeight quantize_weight(const Matrix& w, const LinearQuantConfig& cfg, const Matrix* ema = nullptr);

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }
    std::vector<Parameter>& params() noexcept { return params_; }
    const std::vector<Parameter>& params() const noexcept { return params_; }
    // Indices into params() of the MX linear weights.
    const std::vector<std::size_t>& quantized() const noexcept { return quantized_; }

    // Forward, loss and backward; overwrites every grad.
    StepOutput train_step(const Batch& batch, const StepContext& ctx);
    // Forward only; batch x classes.
    Matrix logits(const Matrix& x, const StepContext& ctx) const;
    // Residual stream after block `block`, (batch * tokens) x width.
    Matrix probe(const Matrix& x, int block, const StepContext& ctx) const;

private:
    struct Cache;
    Matrix forward(const Matrix& x, const StepContext& ctx, Cache* cache, int stop_after_block) const;

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    std::vector<std::size_t> quantized_;
};

}  // namespace mxfp4::train
