// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/rng.hpp"

#include <cmath>
#include <numbers>

namespace mxfp4 {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::uint64_t RandomStream::next_u64() noexcept {
    // Counter layout: draw index (c0), block (c1), tensor (c2), step (c3).
    // Each Philox call yields 128 bits covering two consecutive draws: the
    // even draw takes the low word and the odd draw the high word.
    const bool upper = (draw_ & 1u) != 0;
    const std::uint64_t call = draw_ >> 1;
    ++draw_;
    if (upper) return pending_;
    // Draw indices beyond 2^33 wrap; no substream needs that many.
    const auto out = philox4x32(
        {static_cast<std::uint32_t>(call), id_.block, id_.tensor, id_.step},
        {static_cast<std::uint32_t>(id_.seed), static_cast<std::uint32_t>(id_.seed >> 32)});
    pending_ = static_cast<std::uint64_t>(out[3]) << 32 | out[2];
    return static_cast<std::uint64_t>(out[1]) << 32 | out[0];
}

double RandomStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RandomStream::below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    // Reject the biased tail so the result is exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

}  // namespace mxfp4
