#pragma once

// Binary PGM (P5) images, 8- and 16-bit.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "bcnn/binary_io.hpp"
#include "bcnn/image.hpp"

namespace bcnn::data {

namespace detail {

inline std::size_t skip_space_and_comments(const std::vector<std::uint8_t>& b, std::size_t at) {
    while (at < b.size()) {
        if (b[at] == '#') {
            while (at < b.size() && b[at] != '\n') ++at;
        } else if (std::isspace(b[at])) {
            ++at;
        } else {
            break;
        }
    }
    return at;
}

inline int read_header_int(const std::vector<std::uint8_t>& b, std::size_t& at, const char* what) {
    at = skip_space_and_comments(b, at);
    const std::size_t start = at;
    long v = 0;
    while (at < b.size() && std::isdigit(b[at])) {
        v = v * 10 + (b[at] - '0');
        if (v > 1 << 20) throw format_error(std::string("PGM ") + what + " too large", start);
        ++at;
    }
    if (at == start) throw format_error(std::string("expected PGM ") + what, start);
    return static_cast<int>(v);
}

} // namespace detail

/// Pixels scaled to [0, 1] by the file's maxval.
inline Image decode_pgm(const std::vector<std::uint8_t>& b) {
    if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw format_error("not a binary PGM (P5)", 0);
    std::size_t at = 2;
    const int width = detail::read_header_int(b, at, "width");
    const int height = detail::read_header_int(b, at, "height");
    const int maxval = detail::read_header_int(b, at, "maxval");
    if (maxval < 1 || maxval > 65535) throw format_error("PGM maxval outside [1, 65535]", at);
    if (at >= b.size() || !std::isspace(b[at])) throw format_error("missing whitespace after PGM header", at);
    ++at;
    const int bytes_per = maxval > 255 ? 2 : 1;
    const std::size_t expected = at + static_cast<std::size_t>(width) * height * bytes_per;
    if (b.size() < expected) {
        throw format_error("truncated PGM raster: expected " + std::to_string(expected) + " bytes, found " +
                               std::to_string(b.size()),
                           b.size());
    }
    Image img(height, width);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const unsigned v = bytes_per == 1 ? b[at + i] : (static_cast<unsigned>(b[at + 2 * i]) << 8) | b[at + 2 * i + 1];
        if (v > static_cast<unsigned>(maxval)) throw format_error("PGM sample above maxval", at + i * bytes_per);
        img.pixels[i] = static_cast<double>(v) / maxval;
    }
    return img;
}

inline Image read_pgm(const std::string& path) { return decode_pgm(io::read_file(path)); }

/// Maps [lo, hi] linearly onto the full sample range, clamping outside values.
inline std::vector<std::uint8_t> encode_pgm(const Image& img, int bits = 8, double lo = 0.0, double hi = 1.0) {
    if (bits != 8 && bits != 16) throw validation_error("PGM depth must be 8 or 16 bits");
    if (!(hi > lo)) throw validation_error("PGM range needs hi > lo");
    const int maxval = bits == 8 ? 255 : 65535;
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                               std::to_string(maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (double p : img.pixels) {
        const double t = std::clamp((p - lo) / (hi - lo), 0.0, 1.0);
        const auto v = static_cast<unsigned>(std::lround(t * maxval));
        if (bits == 16) out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

inline void write_pgm(const Image& img, const std::string& path, int bits = 8, double lo = 0.0, double hi = 1.0) {
    io::write_file(path, encode_pgm(img, bits, lo, hi));
}

} // namespace bcnn::data
