// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/train/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mxfp4/error.hpp"
#include "mxfp4/q_ema.hpp"
#include "mxfp4/rng.hpp"

namespace mxfp4::train {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr std::uint32_t kInitTensor = 0xE0000000u;
constexpr double kInvSqrt2 = 0.70710678118654752440;

// Parameter layout: embedding, then twelve tensors per block, then the
// final norm and head.
enum : std::size_t { kEmbedW = 0, kEmbedB, kPos, kBlockBase };
enum : std::size_t {
    kLn1G = 0, kLn1B, kQkvW, kQkvB, kProjW, kProjB, kLn2G, kLn2B, kFc1W, kFc1B, kFc2W, kFc2B, kPerBlock
};

std::size_t block_param(std::size_t block, std::size_t which) { return kBlockBase + block * kPerBlock + which; }

void add_bias(Matrix& y, const Matrix& b) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t j = 0; j < y.cols(); ++j) row[j] += b(0, j);
    }
}

void accumulate_bias_grad(const Matrix& gy, Matrix& gb) {
    for (std::size_t r = 0; r < gy.rows(); ++r) {
        auto row = gy.row(r);
        for (std::size_t j = 0; j < gy.cols(); ++j) gb(0, j) += row[j];
    }
}

struct NormCache {
    Matrix hat;
    std::vector<double> rstd;
};

Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, NormCache* cache) {
    const std::size_t n = x.cols();
    Matrix y(x.rows(), n);
    if (cache) {
        cache->hat = Matrix(x.rows(), n);
        cache->rstd.assign(x.rows(), 0.0);
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        auto out = y.row(r);
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (in[j] - mean) * rstd;
            if (cache) cache->hat(r, j) = h;
            out[j] = h * g(0, j) + b(0, j);
        }
        if (cache) cache->rstd[r] = rstd;
    }
    return y;
}

Matrix layer_norm_backward(const Matrix& gy, const NormCache& c, const Matrix& g, Matrix& gg, Matrix& gb) {
    const std::size_t n = gy.cols();
    Matrix gx(gy.rows(), n);
    std::vector<double> ghat(n);
    for (std::size_t r = 0; r < gy.rows(); ++r) {
        double mean_g = 0.0;
        double mean_gh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            ghat[j] = gy(r, j) * g(0, j);
            gg(0, j) += gy(r, j) * c.hat(r, j);
            gb(0, j) += gy(r, j);
            mean_g += ghat[j];
            mean_gh += ghat[j] * c.hat(r, j);
        }
        mean_g /= static_cast<double>(n);
        mean_gh /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            gx(r, j) = c.rstd[r] * (ghat[j] - mean_g - c.hat(r, j) * mean_gh);
        }
    }
    return gx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * kInvSqrt2 * std::numbers::inv_sqrtpi;
    return cdf + x * pdf;
}

Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = matmul(x, transpose(w));
    add_bias(y, b);
    return y;
}

}  // namespace

QuantizedWeight quantize_weight(const Matrix& w, const LinearQuantConfig& cfg, const Matrix* ema) {
    if (!cfg.mask.on(2)) return {w, std::nullopt};
    const Matrix w_t = transpose(w);
    QuantizedMatrix qm =
        ema != nullptr
            ? quantize_matrix_ema(w_t, transpose(*ema), Axis::ColGroups, cfg.forward_format)
            : quantize_matrix(w_t, Axis::ColGroups, {cfg.forward_format, cfg.scale_rule, Rounding::Deterministic},
                              nullptr, QuantizerId::Q2);
    Matrix values = transpose(dequantize_matrix(qm));
    return {std::move(values), std::move(qm)};
}

struct LinearCache {
    LinearForward fwd;
    Matrix x;  // raw input, kept for the baseline backward
};

struct BlockCache {
    NormCache ln1;
    LinearCache qkv;
    Matrix qkv_out;
    std::vector<double> probs;  // batch x heads x tokens x tokens
    LinearCache proj;
    NormCache ln2;
    LinearCache fc1;
    Matrix fc1_out;
    LinearCache fc2;
};

struct Model::Cache {
    Matrix tokens;
    std::vector<BlockCache> blocks;
    NormCache lnf;
    Matrix pooled;
};

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const auto w = static_cast<std::size_t>(cfg.width);
    const auto hidden = w * static_cast<std::size_t>(cfg.mlp_ratio);
    const auto p = static_cast<std::size_t>(cfg.patch_dim);
    auto add = [&](std::string name, std::size_t rows, std::size_t cols, double init, bool quantized, bool decay) {
        Parameter prm;
        prm.name = std::move(name);
        prm.value = Matrix(rows, cols, init);
        prm.grad = Matrix(rows, cols);
        prm.quantized = quantized;
        prm.decay = decay;
        params_.push_back(std::move(prm));
    };
    add("embed.w", w, p, 0.0, false, true);
    add("embed.b", 1, w, 0.0, false, false);
    add("pos", static_cast<std::size_t>(cfg.tokens), w, 0.0, false, false);
    for (int l = 0; l < cfg.depth; ++l) {
        const std::string pre = "block" + std::to_string(l) + ".";
        add(pre + "ln1.g", 1, w, 1.0, false, false);
        add(pre + "ln1.b", 1, w, 0.0, false, false);
        add(pre + "qkv.w", 3 * w, w, 0.0, true, true);
        add(pre + "qkv.b", 1, 3 * w, 0.0, false, false);
        add(pre + "proj.w", w, w, 0.0, true, true);
        add(pre + "proj.b", 1, w, 0.0, false, false);
        add(pre + "ln2.g", 1, w, 1.0, false, false);
        add(pre + "ln2.b", 1, w, 0.0, false, false);
        add(pre + "fc1.w", hidden, w, 0.0, true, true);
        add(pre + "fc1.b", 1, hidden, 0.0, false, false);
        add(pre + "fc2.w", w, hidden, 0.0, true, true);
        add(pre + "fc2.b", 1, w, 0.0, false, false);
    }
    add("norm.g", 1, w, 1.0, false, false);
    add("norm.b", 1, w, 0.0, false, false);
    add("head.w", static_cast<std::size_t>(cfg.classes), w, 0.0, false, true);
    add("head.b", 1, static_cast<std::size_t>(cfg.classes), 0.0, false, false);

    std::uint32_t layer = 1;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& prm = params_[i];
        if (prm.quantized) {
            prm.layer_id = layer++;
            quantized_.push_back(i);
        }
        if (prm.decay || prm.name == "pos") {
            RandomStream rs(seed, kInitTensor + static_cast<std::uint32_t>(i), 0, 0);
            for (double& v : prm.value.values()) v = kInitStd * rs.normal();
        }
    }
}

Matrix Model::forward(const Matrix& x, const StepContext& ctx, Cache* cache, int stop_after_block) const {
    const auto batch = x.rows();
    const auto tokens = static_cast<std::size_t>(cfg_.tokens);
    const auto width = static_cast<std::size_t>(cfg_.width);
    const auto heads = static_cast<std::size_t>(cfg_.heads);
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t rows = batch * tokens;
    if (x.cols() != static_cast<std::size_t>(cfg_.input_dim())) {
        throw ContractError("model input has " + std::to_string(x.cols()) + " features, expected " +
                            std::to_string(cfg_.input_dim()));
    }
    const LinearQuantConfig& lq = ctx.quant.linear;

    auto qlinear = [&](std::size_t wi, std::size_t bi, const Matrix& in, LinearCache* lc) {
        const Matrix* ema = ctx.ema.empty() ? nullptr : ctx.ema[wi];
        LinearForward f = linear_forward(in, params_[wi].value, lq, ema);
        Matrix y = f.y;
        add_bias(y, params_[bi].value);
        if (lc) {
            lc->fwd = std::move(f);
            if (ctx.quant.gradient_path == GradientPath::Microscaling) lc->x = in;
        }
        return y;
    };

    Matrix tok(rows, static_cast<std::size_t>(cfg_.patch_dim), std::vector<double>(x.values().begin(), x.values().end()));
    Matrix h = dense_forward(tok, params_[kEmbedW].value, params_[kEmbedB].value);
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = h.row(r);
        auto pos = params_[kPos].value.row(r % tokens);
        for (std::size_t j = 0; j < width; ++j) row[j] += pos[j];
    }
    if (cache) {
        cache->tokens = std::move(tok);
        cache->blocks.assign(static_cast<std::size_t>(cfg_.depth), {});
    }

    for (std::size_t l = 0; l < static_cast<std::size_t>(cfg_.depth); ++l) {
        BlockCache* bc = cache ? &cache->blocks[l] : nullptr;
        auto P = [&](std::size_t which) -> const Matrix& { return params_[block_param(l, which)].value; };

        const Matrix a = layer_norm(h, P(kLn1G), P(kLn1B), bc ? &bc->ln1 : nullptr);
        Matrix qkv = qlinear(block_param(l, kQkvW), block_param(l, kQkvB), a, bc ? &bc->qkv : nullptr);
        Matrix att(rows, width);
        std::vector<double> probs(batch * heads * tokens * tokens);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t hd = 0; hd < heads; ++hd) {
                double* p = &probs[((b * heads + hd) * tokens) * tokens];
                const std::size_t qo = hd * dh, ko = width + hd * dh, vo = 2 * width + hd * dh;
                for (std::size_t i = 0; i < tokens; ++i) {
                    double mx = -INFINITY;
                    for (std::size_t j = 0; j < tokens; ++j) {
                        double s = 0.0;
                        for (std::size_t d = 0; d < dh; ++d) s += qkv(b * tokens + i, qo + d) * qkv(b * tokens + j, ko + d);
                        p[i * tokens + j] = s * scale;
                        mx = std::max(mx, p[i * tokens + j]);
                    }
                    double z = 0.0;
                    for (std::size_t j = 0; j < tokens; ++j) {
                        p[i * tokens + j] = std::exp(p[i * tokens + j] - mx);
                        z += p[i * tokens + j];
                    }
                    for (std::size_t j = 0; j < tokens; ++j) p[i * tokens + j] /= z;
                    for (std::size_t j = 0; j < tokens; ++j) {
                        const double pij = p[i * tokens + j];
                        for (std::size_t d = 0; d < dh; ++d) att(b * tokens + i, qo + d) += pij * qkv(b * tokens + j, vo + d);
                    }
                }
            }
        }
        const Matrix o = qlinear(block_param(l, kProjW), block_param(l, kProjB), att, bc ? &bc->proj : nullptr);
        add_inplace(h, o);

        const Matrix a2 = layer_norm(h, P(kLn2G), P(kLn2B), bc ? &bc->ln2 : nullptr);
        Matrix f = qlinear(block_param(l, kFc1W), block_param(l, kFc1B), a2, bc ? &bc->fc1 : nullptr);
        Matrix g(f.rows(), f.cols());
        for (std::size_t i = 0; i < f.size(); ++i) g.data()[i] = gelu(f.data()[i]);
        const Matrix m = qlinear(block_param(l, kFc2W), block_param(l, kFc2B), g, bc ? &bc->fc2 : nullptr);
        add_inplace(h, m);
        if (bc) {
            bc->qkv_out = std::move(qkv);
            bc->probs = std::move(probs);
            bc->fc1_out = std::move(f);
        }
        if (static_cast<int>(l) == stop_after_block) return h;
    }

    const std::size_t nf = params_.size() - 4;
    const Matrix n = layer_norm(h, params_[nf].value, params_[nf + 1].value, cache ? &cache->lnf : nullptr);
    Matrix pooled(batch, width);
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = n.row(r);
        auto dst = pooled.row(r / tokens);
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
    scale_inplace(pooled, 1.0 / static_cast<double>(tokens));
    Matrix logits = dense_forward(pooled, params_[nf + 2].value, params_[nf + 3].value);
    if (cache) cache->pooled = std::move(pooled);
    return logits;
}

Matrix Model::logits(const Matrix& x, const StepContext& ctx) const { return forward(x, ctx, nullptr, -1); }

Matrix Model::probe(const Matrix& x, int block, const StepContext& ctx) const {
    if (block < 0 || block >= cfg_.depth) throw ContractError("probe block out of range");
    return forward(x, ctx, nullptr, block);
}

StepOutput Model::train_step(const Batch& batch, const StepContext& ctx) {
    Cache cache;
    const Matrix logits = forward(batch.x, ctx, &cache, -1);
    for (auto& p : params_) p.grad.fill(0.0);

    const std::size_t nb = logits.rows();
    const std::size_t nc = logits.cols();
    const auto tokens = static_cast<std::size_t>(cfg_.tokens);
    const auto width = static_cast<std::size_t>(cfg_.width);
    const auto heads = static_cast<std::size_t>(cfg_.heads);
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t rows = nb * tokens;

    StepOutput out;
    Matrix gl(nb, nc);
    for (std::size_t b = 0; b < nb; ++b) {
        auto z = logits.row(b);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - mx);
        const auto y = static_cast<std::size_t>(batch.labels[b]);
        out.loss += (mx + std::log(sum) - z[y]) / static_cast<double>(nb);
        if (static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == y) ++out.correct;
        for (std::size_t c = 0; c < nc; ++c) {
            gl(b, c) = (std::exp(z[c] - mx) / sum - (c == y ? 1.0 : 0.0)) / static_cast<double>(nb);
        }
    }

    const LinearQuantConfig& lq = ctx.quant.linear;
    auto qlinear_backward = [&](std::size_t wi, std::size_t bi, const Matrix& gy, const LinearCache& lc) {
        Parameter& w = params_[wi];
        const RngContext rng{ctx.seed, w.layer_id, ctx.step};
        LinearGrads g = ctx.quant.gradient_path == GradientPath::DoubleQuantization
                            ? backward_tetrajet(gy, lc.fwd.tapes, lq, rng)
                            : backward_microscaling(gy, lc.x, w.value, lq, rng);
        add_inplace(w.grad, g.grad_w);
        accumulate_bias_grad(gy, params_[bi].grad);
        return std::move(g.grad_x);
    };

    const std::size_t nf = params_.size() - 4;
    // Head and pooling.
    Matrix gpool = matmul(gl, params_[nf + 2].value);
    add_inplace(params_[nf + 2].grad, matmul(transpose(gl), cache.pooled));
    accumulate_bias_grad(gl, params_[nf + 3].grad);
    Matrix gn(rows, width);
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = gpool.row(r / tokens);
        auto dst = gn.row(r);
        for (std::size_t j = 0; j < width; ++j) dst[j] = src[j] / static_cast<double>(tokens);
    }
    Matrix gh = layer_norm_backward(gn, cache.lnf, params_[nf].value, params_[nf].grad, params_[nf + 1].grad);

    for (std::size_t l = static_cast<std::size_t>(cfg_.depth); l-- > 0;) {
        BlockCache& bc = cache.blocks[l];
        auto idx = [&](std::size_t which) { return block_param(l, which); };

        // MLP branch.
        Matrix gg = qlinear_backward(idx(kFc2W), idx(kFc2B), gh, bc.fc2);
        for (std::size_t i = 0; i < gg.size(); ++i) gg.data()[i] *= gelu_grad(bc.fc1_out.data()[i]);
        Matrix ga2 = qlinear_backward(idx(kFc1W), idx(kFc1B), gg, bc.fc1);
        add_inplace(gh, layer_norm_backward(ga2, bc.ln2, params_[idx(kLn2G)].value, params_[idx(kLn2G)].grad,
                                            params_[idx(kLn2B)].grad));

        // Attention branch.
        Matrix gatt = qlinear_backward(idx(kProjW), idx(kProjB), gh, bc.proj);
        const Matrix& qkv = bc.qkv_out;
        Matrix gqkv(rows, 3 * width);
        std::vector<double> dp(tokens);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t hd = 0; hd < heads; ++hd) {
                const double* p = &bc.probs[((b * heads + hd) * tokens) * tokens];
                const std::size_t qo = hd * dh, ko = width + hd * dh, vo = 2 * width + hd * dh;
                for (std::size_t i = 0; i < tokens; ++i) {
                    const std::size_t ri = b * tokens + i;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < tokens; ++j) {
                        const std::size_t rj = b * tokens + j;
                        double s = 0.0;
                        for (std::size_t d = 0; d < dh; ++d) {
                            s += gatt(ri, qo + d) * qkv(rj, vo + d);
                            gqkv(rj, vo + d) += p[i * tokens + j] * gatt(ri, qo + d);
                        }
                        dp[j] = s;
                        dot += p[i * tokens + j] * s;
                    }
                    for (std::size_t j = 0; j < tokens; ++j) {
                        const std::size_t rj = b * tokens + j;
                        const double ds = p[i * tokens + j] * (dp[j] - dot) * scale;
                        for (std::size_t d = 0; d < dh; ++d) {
                            gqkv(ri, qo + d) += ds * qkv(rj, ko + d);
                            gqkv(rj, ko + d) += ds * qkv(ri, qo + d);
                        }
                    }
                }
            }
        }
        Matrix ga = qlinear_backward(idx(kQkvW), idx(kQkvB), gqkv, bc.qkv);
        add_inplace(gh, layer_norm_backward(ga, bc.ln1, params_[idx(kLn1G)].value, params_[idx(kLn1G)].grad,
                                            params_[idx(kLn1B)].grad));
    }

    // Embedding.
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = gh.row(r);
        auto dst = params_[kPos].grad.row(r % tokens);
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
    add_inplace(params_[kEmbedW].grad, matmul(transpose(gh), cache.tokens));
    accumulate_bias_grad(gh, params_[kEmbedB].grad);
    return out;
}

}  // namespace mxfp4::train
