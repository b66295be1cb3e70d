// SPDX-License-Identifier: Apache-2.0
//
// FP4 element formats. A format is a signed, symmetric, zero-containing grid
// of 15 distinct values addressed by 4-bit codes (sign | exponent | mantissa).
//
//   E2M1: +-{0, 0.5, 1, 1.5, 2, 3, 4, 6}     Qp = 6,  e_max = 2
//   E3M0: +-{0, 0.25, 0.5, 1, 2, 4, 8, 16}   Qp = 16, e_max = 4
//
// E2M1 uses exponent bias 1 with exponent field 0 encoding the subnormals
// {0, 0.5}. E3M0 has no mantissa; exponent field 0 encodes zero and field e
// encodes 2^(e-3).
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

#include "mxfp4/rng.hpp"

namespace mxfp4 {

enum class FormatId : std::uint8_t { E2M1 = 0, E3M0 = 1 };

struct Fp4Code {
    std::uint8_t bits = 0;  // low nibble only

    friend bool operator==(Fp4Code, Fp4Code) = default;
};

inline constexpr std::size_t kGridSize = 15;

struct Fp4Format {
    FormatId id;
    std::string_view name;
    int exponent_bits;
    int mantissa_bits;
    std::array<double, kGridSize> grid;            // strictly increasing
    std::array<double, kGridSize - 1> thresholds;  // midpoints of neighbours
    double q_pos;
    double q_neg;
    int e_max;
};

const Fp4Format& e2m1() noexcept;
const Fp4Format& e3m0() noexcept;
const Fp4Format& format_of(FormatId id);
FormatId parse_format(std::string_view name);

double decode(Fp4Code code, const Fp4Format& fmt) noexcept;

// Throws InvalidInputError when `value` is not a grid value.
Fp4Code encode(double value, const Fp4Format& fmt);

// The consecutive grid values (q1, q2) with q1 <= x <= q2; q1 == q2 exactly
// when x is on the grid. Throws RangeError outside [Qn, Qp].
std::pair<double, double> bracket(double x, const Fp4Format& fmt);

// Round to nearest. |x| > Qp is clamped to +-Qp first (truncation); exact
// midpoints resolve to the upper neighbour.
double round_deterministic(double x, const Fp4Format& fmt);

// Stochastic rounding with a uniform dither drawn from `u` in [0, 1):
// returns q2 with probability (x - q1) / (q2 - q1). Throws RangeError
// outside [Qn, Qp].
double round_stochastic(double x, const Fp4Format& fmt, double u);

// Consumes exactly one draw from `rng`, including for on-grid inputs, so the
// stream position never depends on the data.
double round_stochastic(double x, const Fp4Format& fmt, RandomStream& rng);

}  // namespace mxfp4
