// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mxfp4/matrix.hpp"

namespace mxfp4::bench {

// Log-normal magnitudes so blocks see a realistic spread of scales.
inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    Matrix m(r, c);
    for (double& v : m.values()) v = nd(gen) * std::exp(0.5 * nd(gen));
    return m;
}

}  // namespace mxfp4::bench
