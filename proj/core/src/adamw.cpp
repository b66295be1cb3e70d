// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/adamw.hpp"

#include "mxfp4/error.hpp"

namespace mxfp4 {

void AdamW::step(std::span<double> w, std::span<const double> g, double lr,
                 std::span<const std::uint8_t> frozen) {
    if (w.size() != m_.size() || g.size() != m_.size() || (!frozen.empty() && frozen.size() != m_.size())) {
        throw ContractError("AdamW::step: size mismatch");
    }
    ++t_;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!frozen.empty() && frozen[i] != 0) continue;
        adamw_update(w[i], g[i], m_[i], v_[i], t_, lr, params_);
    }
}

}  // namespace mxfp4
