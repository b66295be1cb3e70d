// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "mxfp4/matrix.hpp"

namespace support {

// Gaussian matrix with a log-normal spread of magnitudes, so blocks mix
// large and small elements and exercise both rounding directions.
inline mxfp4::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    mxfp4::Matrix m(rows, cols);
    for (double& v : m.values()) v = scale * nd(gen) * std::exp(0.5 * nd(gen));
    return m;
}

}  // namespace support
