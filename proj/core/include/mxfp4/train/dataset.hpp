// SPDX-License-Identifier: Apache-2.0
//
// Classification data for the toy transformer. Each sample is a flat feature
// vector of tokens * patch_dim values, split into tokens by the model.
//
// File datasets use the MXDS layout (little-endian):
//
//   "MXDS" | u32 count | u32 dim | u32 classes
//          | count * dim f32 features (row-major) | count u8 labels
//
// The train/validation split of a file dataset is a seeded permutation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mxfp4/matrix.hpp"
#include "mxfp4/train/config.hpp"

namespace mxfp4::train {

struct Split {
    Matrix features;  // count x dim
    std::vector<int> labels;
    std::size_t size() const noexcept { return labels.size(); }
};

struct Dataset {
    Split train;
    Split val;
    int classes = 0;
    int dim = 0;
};

// Gaussian clusters: one mean per class, isotropic noise around it.
Dataset make_synthetic(const DataConfig& cfg, int dim, int classes, std::uint64_t seed);
// Loads an MXDS file and splits off cfg.val_size samples for validation.
Dataset load_mxds(const DataConfig& cfg, int dim, int classes, std::uint64_t seed);
Dataset make_dataset(const TrainConfig& cfg);

void write_mxds(const std::filesystem::path& path, const Matrix& features, const std::vector<int>& labels,
                int classes);

struct Batch {
    Matrix x;  // batch x dim
    std::vector<int> labels;
};

// Minibatch for `step`: indices drawn with replacement from a per-step
// random stream, so any step can be reproduced independently.
Batch sample_batch(const Split& split, int batch_size, std::uint64_t seed, std::uint32_t step);
// Rows [begin, begin + count) of a split.
Batch slice(const Split& split, std::size_t begin, std::size_t count);

}  // namespace mxfp4::train
