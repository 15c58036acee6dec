#pragma once

// IDX (MNIST distribution format) reader, optionally gzip-compressed.

#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "bcnn/binary_io.hpp"
#include "bcnn/error.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn::data {

/// Decompresses a gzip stream; other input is returned unchanged.
inline std::vector<std::uint8_t> maybe_gunzip(const std::vector<std::uint8_t>& raw) {
    if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw internal_error("zlib initialization failed");
    zs.next_in = const_cast<Bytef*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            const std::size_t at = zs.total_in;
            inflateEnd(&zs);
            throw format_error("corrupt gzip stream", at);
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
        if (rc != Z_STREAM_END && zs.avail_in == 0) {
            const std::size_t at = zs.total_in;
            inflateEnd(&zs);
            throw format_error("truncated gzip stream", at);
        }
    }
    inflateEnd(&zs);
    return out;
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at, const char* what) {
    if (at + 4 > b.size()) throw format_error(std::string("truncated IDX header while reading ") + what, b.size());
    return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
           (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

struct IdxImages {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> pixels;
};

inline IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be32(bytes, 0, "magic");
    if (magic != 0x00000803u) throw format_error("bad IDX image magic", 0);
    IdxImages out;
    out.count = static_cast<int>(read_be32(bytes, 4, "image count"));
    out.rows = static_cast<int>(read_be32(bytes, 8, "row count"));
    out.cols = static_cast<int>(read_be32(bytes, 12, "column count"));
    const std::size_t expected = 16 + static_cast<std::size_t>(out.count) * out.rows * out.cols;
    if (bytes.size() < expected) {
        throw format_error("truncated IDX image data: expected " + std::to_string(expected) + " bytes, found " +
                               std::to_string(bytes.size()),
                           bytes.size());
    }
    if (bytes.size() > expected) throw format_error("trailing bytes after IDX image data", expected);
    out.pixels.assign(bytes.begin() + 16, bytes.end());
    return out;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be32(bytes, 0, "magic");
    if (magic != 0x00000801u) throw format_error("bad IDX label magic", 0);
    const std::size_t count = read_be32(bytes, 4, "label count");
    const std::size_t expected = 8 + count;
    if (bytes.size() < expected) {
        throw format_error("truncated IDX label data: expected " + std::to_string(expected) + " bytes, found " +
                               std::to_string(bytes.size()),
                           bytes.size());
    }
    if (bytes.size() > expected) throw format_error("trailing bytes after IDX label data", expected);
    return {bytes.begin() + 8, bytes.end()};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

/// Images in [0, 1] quantized to bytes.
inline std::vector<std::uint8_t> encode_idx_images(const Tensor4<double>& images) {
    if (images.c != 1) throw validation_error("IDX images must have a single channel");
    std::vector<std::uint8_t> out;
    append_be32(out, 0x00000803u);
    append_be32(out, static_cast<std::uint32_t>(images.n));
    append_be32(out, static_cast<std::uint32_t>(images.h));
    append_be32(out, static_cast<std::uint32_t>(images.w));
    for (double v : images.data) {
        const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.push_back(static_cast<std::uint8_t>(c * 255.0 + 0.5));
    }
    return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(const std::vector<int>& labels) {
    std::vector<std::uint8_t> out;
    append_be32(out, 0x00000801u);
    append_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) {
        if (y < 0 || y > 255) throw validation_error("IDX labels must fit in a byte");
        out.push_back(static_cast<std::uint8_t>(y));
    }
    return out;
}

} // namespace bcnn::data
