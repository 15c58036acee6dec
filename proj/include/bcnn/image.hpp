#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bcnn/error.hpp"

namespace bcnn {

/// Real-valued single-channel image, row-major, row 0 at the top.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
        if (h < 0 || w < 0) throw validation_error("negative image size");
    }

    double& operator()(int r, int c) { return pixels[static_cast<std::size_t>(r * width + c)]; }
    double operator()(int r, int c) const { return pixels[static_cast<std::size_t>(r * width + c)]; }

    std::size_t size() const noexcept { return pixels.size(); }
    bool square() const noexcept { return height == width; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Counter-clockwise quarter turn (y up): out(r, c) = in(c, w - 1 - r).
inline Image rot90(const Image& in) {
    if (!in.square()) throw validation_error("rot90 needs a square image");
    const int n = in.width;
    Image out(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            out(r, c) = in(c, n - 1 - r);
        }
    }
    return out;
}

inline Image rot90(const Image& in, int quarter_turns) {
    Image out = in;
    const int k = ((quarter_turns % 4) + 4) % 4;
    for (int i = 0; i < k; ++i) out = rot90(out);
    return out;
}

/// Mirror about the vertical axis, (x, y) -> (-x, y).
inline Image mirror_vertical(const Image& in) {
    Image out(in.height, in.width);
    for (int r = 0; r < in.height; ++r) {
        for (int c = 0; c < in.width; ++c) {
            out(r, c) = in(r, in.width - 1 - c);
        }
    }
    return out;
}

/// Places `in` on a size x size canvas. When the margin is odd the extra
/// row/column goes to the bottom/right.
inline Image pad_or_crop_center(const Image& in, int size, double fill = 0.0) {
    Image out(size, size, fill);
    const int dr = (size - in.height) / 2;
    const int dc = (size - in.width) / 2;
    for (int r = 0; r < in.height; ++r) {
        for (int c = 0; c < in.width; ++c) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr >= 0 && rr < size && cc >= 0 && cc < size) out(rr, cc) = in(r, c);
        }
    }
    return out;
}

/// Whether pixel (r, c) of a (2n+1)-square lies in the inscribed disk.
inline bool inside_disk(int r, int c, int size) {
    const int n = (size - 1) / 2;
    const int x = c - n;
    const int y = n - r;
    return x * x + y * y <= n * n;
}

/// ||a - b|| / ||a|| restricted to the inscribed disk of an odd square.
inline double relative_l2_on_disk(const Image& reference, const Image& other) {
    if (reference.height != other.height || reference.width != other.width || !reference.square() ||
        reference.width % 2 == 0) {
        throw validation_error("relative_l2_on_disk needs matching odd square images");
    }
    double num = 0.0;
    double den = 0.0;
    for (int r = 0; r < reference.height; ++r) {
        for (int c = 0; c < reference.width; ++c) {
            if (!inside_disk(r, c, reference.width)) continue;
            const double d = reference(r, c) - other(r, c);
            num += d * d;
            den += reference(r, c) * reference(r, c);
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace bcnn
