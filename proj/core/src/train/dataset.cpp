// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/train/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <string>

#include "mxfp4/container.hpp"
#include "mxfp4/error.hpp"
#include "mxfp4/rng.hpp"

namespace mxfp4::train {

namespace {

// Substream tensor ids reserved for data; quantizer ids stay far below.
constexpr std::uint32_t kMeansTensor = 0xD0000001u;
constexpr std::uint32_t kTrainTensor = 0xD0000002u;
constexpr std::uint32_t kValTensor = 0xD0000003u;
constexpr std::uint32_t kBatchTensor = 0xD0000004u;
constexpr std::uint32_t kSplitTensor = 0xD0000005u;

Split draw_split(const Matrix& means, double noise, int count, std::uint64_t seed, std::uint32_t tensor) {
    const std::size_t dim = means.cols();
    Split s{Matrix(static_cast<std::size_t>(count), dim), std::vector<int>(static_cast<std::size_t>(count))};
    for (int i = 0; i < count; ++i) {
        RandomStream rs(seed, tensor, 0, static_cast<std::uint32_t>(i));
        const auto label = static_cast<int>(rs.below(means.rows()));
        s.labels[static_cast<std::size_t>(i)] = label;
        auto row = s.features.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < dim; ++j) row[j] = means(static_cast<std::size_t>(label), j) + noise * rs.normal();
    }
    return s;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

Split take(const Matrix& features, const std::vector<int>& labels, std::span<const std::size_t> idx) {
    Split s{Matrix(idx.size(), features.cols()), std::vector<int>(idx.size())};
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(features.row(idx[i]).begin(), features.cols(), s.features.row(i).begin());
        s.labels[i] = labels[idx[i]];
    }
    return s;
}

}  // namespace

Dataset make_synthetic(const DataConfig& cfg, int dim, int classes, std::uint64_t seed) {
    Matrix means(static_cast<std::size_t>(classes), static_cast<std::size_t>(dim));
    for (int c = 0; c < classes; ++c) {
        RandomStream rs(seed, kMeansTensor, 0, static_cast<std::uint32_t>(c));
        for (auto& v : means.row(static_cast<std::size_t>(c))) v = cfg.separation * rs.normal();
    }
    Dataset d;
    d.classes = classes;
    d.dim = dim;
    d.train = draw_split(means, cfg.noise, cfg.train_size, seed, kTrainTensor);
    d.val = draw_split(means, cfg.noise, cfg.val_size, seed, kValTensor);
    return d;
}

Dataset load_mxds(const DataConfig& cfg, int dim, int classes, std::uint64_t seed) {
    const auto bytes = read_file(cfg.path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "MXDS", 4) != 0) {
        throw FormatError("'" + cfg.path + "' is not an MXDS dataset");
    }
    const std::size_t count = read_u32(bytes, 4);
    const std::size_t fdim = read_u32(bytes, 8);
    const std::size_t fclasses = read_u32(bytes, 12);
    const std::size_t payload = bytes.size() - 16;
    if (fdim == 0 || count == 0 || payload / (fdim * 4 + 1) != count || payload % (fdim * 4 + 1) != 0) {
        throw FormatError("MXDS payload size does not match its header");
    }
    if (fdim != static_cast<std::size_t>(dim)) {
        throw ConfigError("model.tokens,model.patch_dim,data.path",
                          "dataset has " + std::to_string(fdim) + " features, model expects " + std::to_string(dim));
    }
    if (fclasses != static_cast<std::size_t>(classes)) {
        throw ConfigError("model.classes,data.path", "dataset has " + std::to_string(fclasses) + " classes");
    }
    if (static_cast<std::size_t>(cfg.val_size) >= count) {
        throw ConfigError("data.val_size", "validation split would leave no training data");
    }
    Matrix features(count, fdim);
    std::vector<int> labels(count);
    std::size_t at = 16;
    for (double& v : features.values()) {
        v = static_cast<double>(std::bit_cast<float>(read_u32(bytes, at)));
        at += 4;
    }
    for (auto& l : labels) {
        l = bytes[at++];
        if (l >= classes) throw FormatError("MXDS label out of range");
    }
    // Seeded Fisher-Yates permutation fixes the split.
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    RandomStream rs(seed, kSplitTensor, 0, 0);
    for (std::size_t i = count - 1; i > 0; --i) std::swap(perm[i], perm[rs.below(i + 1)]);
    const auto nval = static_cast<std::size_t>(cfg.val_size);
    Dataset d;
    d.classes = classes;
    d.dim = dim;
    d.val = take(features, labels, std::span(perm).first(nval));
    d.train = take(features, labels, std::span(perm).subspan(nval));
    return d;
}

Dataset make_dataset(const TrainConfig& cfg) {
    const int dim = cfg.model.input_dim();
    if (cfg.data.kind == DataKind::File) return load_mxds(cfg.data, dim, cfg.model.classes, cfg.seed_or_zero());
    return make_synthetic(cfg.data, dim, cfg.model.classes, cfg.seed_or_zero());
}

void write_mxds(const std::filesystem::path& path, const Matrix& features, const std::vector<int>& labels,
                int classes) {
    if (features.rows() != labels.size()) throw ContractError("write_mxds: label count mismatch");
    std::vector<std::uint8_t> out = {'M', 'X', 'D', 'S'};
    put_u32(out, static_cast<std::uint32_t>(features.rows()));
    put_u32(out, static_cast<std::uint32_t>(features.cols()));
    put_u32(out, static_cast<std::uint32_t>(classes));
    for (double v : features.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    for (int l : labels) {
        if (l < 0 || l >= classes || l > 255) throw InvalidInputError("write_mxds: label out of range");
        out.push_back(static_cast<std::uint8_t>(l));
    }
    write_file(path, out);
}

Batch sample_batch(const Split& split, int batch_size, std::uint64_t seed, std::uint32_t step) {
    RandomStream rs(seed, kBatchTensor, step, 0);
    Batch b{Matrix(static_cast<std::size_t>(batch_size), split.features.cols()),
            std::vector<int>(static_cast<std::size_t>(batch_size))};
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        const auto k = static_cast<std::size_t>(rs.below(split.size()));
        std::copy_n(split.features.row(k).begin(), split.features.cols(), b.x.row(i).begin());
        b.labels[i] = split.labels[k];
    }
    return b;
}

Batch slice(const Split& split, std::size_t begin, std::size_t count) {
    count = std::min(count, split.size() - std::min(begin, split.size()));
    Batch b{Matrix(count, split.features.cols()), std::vector<int>(count)};
    for (std::size_t i = 0; i < count; ++i) {
        std::copy_n(split.features.row(begin + i).begin(), split.features.cols(), b.x.row(i).begin());
        b.labels[i] = split.labels[begin + i];
    }
    return b;
}

}  // namespace mxfp4::train
