// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace mxfp4 {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Output is a pure function of (key, counter), so any draw can be
// reproduced without replaying the stream that precedes it.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

// Identifies one independent random substream: a (tensor, step, block)
// triple under a global seed. Draws inside the substream are addressed by
// a monotonically increasing index.
struct StreamId {
    std::uint64_t seed = 0;
    std::uint32_t tensor = 0;
    std::uint32_t step = 0;
    std::uint32_t block = 0;
};

class RandomStream {
public:
    RandomStream() = default;
    explicit RandomStream(StreamId id) : id_(id) {}
    RandomStream(std::uint64_t seed, std::uint32_t tensor, std::uint32_t step,
                 std::uint32_t block)
        : id_{seed, tensor, step, block} {}

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept;

    // Standard normal via Box-Muller; consumes two uniforms.
    double normal() noexcept;

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

    std::uint64_t position() const noexcept { return draw_; }
    const StreamId& id() const noexcept { return id_; }

private:
    std::uint64_t next_u64() noexcept;

    StreamId id_{};
    std::uint64_t draw_ = 0;
    // Upper word of the last Philox output, served on the following odd draw.
    std::uint64_t pending_ = 0;
};

// Seed plus tensor identity for a quantizer call. Block streams are derived
// per block index, so results do not depend on traversal order.
struct RngContext {
    std::uint64_t seed = 0;
    std::uint32_t tensor = 0;
    std::uint32_t step = 0;

    RandomStream block_stream(std::uint32_t block) const noexcept {
        return RandomStream(seed, tensor, step, block);
    }
    RngContext with_tensor(std::uint32_t t) const noexcept { return {seed, t, step}; }
};

}  // namespace mxfp4
