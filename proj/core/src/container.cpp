// SPDX-License-Identifier: Apache-2.0
#include "mxfp4/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mxfp4/error.hpp"

namespace mxfp4 {

namespace {

constexpr std::size_t kMxt1Header = 4 + 4 + 4 + 1 + 1;
constexpr std::size_t kMxd1Header = 4 + 4 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
    return v;
}

void check_magic(std::span<const std::uint8_t> b, const char* magic, std::size_t header) {
    if (b.size() < header) throw FormatError(std::string(magic) + ": truncated header");
    if (std::memcmp(b.data(), magic, 4) != 0) throw FormatError(std::string("bad magic, expected ") + magic);
}

std::uint32_t checked_dim(std::size_t n, const char* what) {
    if (n == 0 || n > 0xFFFFFFFFu) throw FormatError(std::string(what) + " out of u32 range");
    return static_cast<std::uint32_t>(n);
}

}  // namespace

std::vector<std::uint8_t> encode_mxt1(const QuantizedMatrix& qm) {
    std::vector<std::uint8_t> out;
    out.reserve(kMxt1Header + qm.blocks.size() * kBlockBytes);
    out.insert(out.end(), {'M', 'X', 'T', '1'});
    put_u32(out, checked_dim(qm.rows, "rows"));
    put_u32(out, checked_dim(qm.cols, "cols"));
    out.push_back(static_cast<std::uint8_t>(qm.axis));
    out.push_back(static_cast<std::uint8_t>(qm.format));
    for (const MxBlock& b : qm.blocks) {
        const auto bytes = serialize_block(b);
        out.insert(out.end(), bytes.begin(), bytes.end());
    }
    return out;
}

QuantizedMatrix decode_mxt1(std::span<const std::uint8_t> bytes) {
    check_magic(bytes, "MXT1", kMxt1Header);
    QuantizedMatrix qm;
    qm.rows = get_u32(bytes, 4);
    qm.cols = get_u32(bytes, 8);
    if (qm.rows == 0 || qm.cols == 0) throw FormatError("MXT1: zero dimension");
    const std::uint8_t axis = bytes[12];
    if (axis > 1) throw FormatError("MXT1: invalid axis " + std::to_string(axis));
    qm.axis = static_cast<Axis>(axis);
    qm.format = static_cast<FormatId>(bytes[13]);
    (void)format_of(qm.format);  // rejects unknown ids
    const std::size_t n = block_count(qm.rows, qm.cols, qm.axis);
    const std::size_t payload = bytes.size() - kMxt1Header;
    if (payload % kBlockBytes != 0 || payload / kBlockBytes != n) {
        throw FormatError("MXT1: expected " + std::to_string(n) + " blocks, got " +
                          std::to_string(payload) + " payload bytes");
    }
    qm.blocks.reserve(n);
    for (std::size_t b = 0; b < n; ++b) {
        const BlockLayout lay = block_layout(qm.rows, qm.cols, qm.axis, b);
        qm.blocks.push_back(deserialize_block(bytes.subspan(kMxt1Header + b * kBlockBytes, kBlockBytes),
                                              qm.format, lay.len));
    }
    return qm;
}

std::vector<std::uint8_t> encode_mxd1(const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kMxd1Header + 8 * m.size());
    out.insert(out.end(), {'M', 'X', 'D', '1'});
    put_u32(out, checked_dim(m.rows(), "rows"));
    put_u32(out, checked_dim(m.cols(), "cols"));
    for (double v : m.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

Matrix decode_mxd1(std::span<const std::uint8_t> bytes) {
    check_magic(bytes, "MXD1", kMxd1Header);
    const std::size_t rows = get_u32(bytes, 4);
    const std::size_t cols = get_u32(bytes, 8);
    if (rows == 0 || cols == 0) throw FormatError("MXD1: zero dimension");
    const std::size_t payload = bytes.size() - kMxd1Header;
    if (payload % 8 != 0 || payload / 8 != rows * cols) {
        throw FormatError("MXD1: expected " + std::to_string(rows * cols) + " values, got " +
                          std::to_string(payload) + " payload bytes");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.values()[i] = std::bit_cast<double>(get_u64(bytes, kMxd1Header + 8 * i));
    }
    return m;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace mxfp4
