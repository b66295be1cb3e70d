// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/fp4_format.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mxfp4/error.hpp"

namespace mxfp4 {

namespace {

constexpr std::array<double, kGridSize> mirrored(std::array<double, 7> pos) {
    std::array<double, kGridSize> g{};
    for (std::size_t i = 0; i < 7; ++i) {
        g[i] = -pos[6 - i];
        g[8 + i] = pos[i];
    }
    g[7] = 0.0;
    return g;
}

constexpr std::array<double, kGridSize - 1> midpoints(const std::array<double, kGridSize>& g) {
    std::array<double, kGridSize - 1> t{};
    for (std::size_t i = 0; i + 1 < kGridSize; ++i) t[i] = 0.5 * (g[i] + g[i + 1]);
    return t;
}

constexpr auto kE2M1Grid = mirrored({0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0});
constexpr auto kE3M0Grid = mirrored({0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0});

const Fp4Format kE2M1{FormatId::E2M1, "e2m1", 2, 1, kE2M1Grid, midpoints(kE2M1Grid), 6.0, -6.0, 2};
const Fp4Format kE3M0{FormatId::E3M0, "e3m0", 3, 0, kE3M0Grid, midpoints(kE3M0Grid), 16.0, -16.0, 4};

void require_finite(double x) {
    if (!std::isfinite(x)) throw InvalidInputError("non-finite value " + std::to_string(x));
}

}  // namespace

const Fp4Format& e2m1() noexcept { return kE2M1; }
const Fp4Format& e3m0() noexcept { return kE3M0; }

const Fp4Format& format_of(FormatId id) {
    switch (id) {
        case FormatId::E2M1: return kE2M1;
        case FormatId::E3M0: return kE3M0;
    }
    throw FormatError("unknown FP4 format id " + std::to_string(static_cast<int>(id)));
}

FormatId parse_format(std::string_view name) {
    if (name == "e2m1" || name == "E2M1") return FormatId::E2M1;
    if (name == "e3m0" || name == "E3M0") return FormatId::E3M0;
    throw FormatError("unknown FP4 format '" + std::string(name) + "'");
}

double decode(Fp4Code code, const Fp4Format& fmt) noexcept {
    const bool negative = (code.bits & 0x8u) != 0;
    double mag = 0.0;
    if (fmt.id == FormatId::E2M1) {
        const int e = (code.bits >> 1) & 0x3;
        const int m = code.bits & 0x1;
        mag = e == 0 ? 0.5 * m : std::ldexp(1.0 + 0.5 * m, e - 1);
    } else {
        const int e = code.bits & 0x7;
        mag = e == 0 ? 0.0 : std::ldexp(1.0, e - 3);
    }
    return negative ? -mag : mag;
}

Fp4Code encode(double value, const Fp4Format& fmt) {
    require_finite(value);
    const double mag = std::fabs(value);
    std::uint8_t bits = 0;
    if (mag != 0.0) {
        if (fmt.id == FormatId::E2M1) {
            if (mag == 0.5) {
                bits = 0x1;
            } else {
                const int e = std::ilogb(mag) + 1;
                const double frac = std::ldexp(mag, 1 - e) - 1.0;
                if (e < 1 || e > 3 || (frac != 0.0 && frac != 0.5)) {
                    throw InvalidInputError(std::to_string(value) + " is not an E2M1 value");
                }
                bits = static_cast<std::uint8_t>(e << 1 | (frac != 0.0 ? 1 : 0));
            }
        } else {
            const int e = std::ilogb(mag) + 3;
            if (e < 1 || e > 7 || std::ldexp(1.0, e - 3) != mag) {
                throw InvalidInputError(std::to_string(value) + " is not an E3M0 value");
            }
            bits = static_cast<std::uint8_t>(e);
        }
        if (value < 0.0) bits |= 0x8u;
    }
    return Fp4Code{bits};
}

std::pair<double, double> bracket(double x, const Fp4Format& fmt) {
    require_finite(x);
    if (x < fmt.q_neg || x > fmt.q_pos) {
        throw RangeError("value " + std::to_string(x) + " outside [" + std::to_string(fmt.q_neg) +
                         ", " + std::to_string(fmt.q_pos) + "]");
    }
    const auto& g = fmt.grid;
    // First grid value strictly greater than x; its predecessor is <= x.
    auto hi = std::upper_bound(g.begin(), g.end(), x);
    if (hi == g.begin()) return {g.front(), g.front()};
    const double q1 = *(hi - 1);
    if (q1 == x || hi == g.end()) return {q1, q1};
    return {q1, *hi};
}

double round_deterministic(double x, const Fp4Format& fmt) {
    require_finite(x);
    x = std::clamp(x, fmt.q_neg, fmt.q_pos);
    const auto [q1, q2] = bracket(x, fmt);
    return std::fabs(x - q1) < std::fabs(x - q2) ? q1 : q2;
}

double round_stochastic(double x, const Fp4Format& fmt, double u) {
    const auto [q1, q2] = bracket(x, fmt);
    if (q1 == q2) return q1;
    const double xi = (u - 0.5) * (q2 - q1);
    return x + xi < 0.5 * (q1 + q2) ? q1 : q2;
}

double round_stochastic(double x, const Fp4Format& fmt, RandomStream& rng) {
    return round_stochastic(x, fmt, rng.uniform());
}

}  // namespace mxfp4
