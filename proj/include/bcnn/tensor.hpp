#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "bcnn/error.hpp"

namespace bcnn {

enum class Precision { double_, single };

inline const char* to_string(Precision p) { return p == Precision::double_ ? "double" : "single"; }

inline Precision parse_precision(const std::string& s) {
    if (s == "double") return Precision::double_;
    if (s == "single") return Precision::single;
    throw validation_error("unknown precision '" + s + "' (expected double|single)");
}

/// Dense batch x height x width x channels array (NHWC, channels fastest).
template <typename T>
struct Tensor4 {
    int n = 0;
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_, T fill = T(0)) : n(n_), h(h_), w(w_), c(c_) {
        if (n_ < 0 || h_ < 0 || w_ < 0 || c_ < 0) throw validation_error("negative tensor dimension");
        data.assign(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill);
    }

    std::size_t size() const noexcept { return data.size(); }
    std::array<int, 4> shape() const noexcept { return {n, h, w, c}; }
    bool same_shape(const Tensor4& o) const noexcept { return shape() == o.shape(); }

    std::size_t offset(int b, int y, int x, int ch) const noexcept {
        return ((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch;
    }
    T& operator()(int b, int y, int x, int ch) { return data[offset(b, y, x, ch)]; }
    T operator()(int b, int y, int x, int ch) const { return data[offset(b, y, x, ch)]; }

    T* image(int b) { return data.data() + static_cast<std::size_t>(b) * h * w * c; }
    const T* image(int b) const { return data.data() + static_cast<std::size_t>(b) * h * w * c; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out;
        out.n = n;
        out.h = h;
        out.w = w;
        out.c = c;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;
};

inline std::string shape_string(const std::array<int, 4>& s) {
    return "(" + std::to_string(s[0]) + ", " + std::to_string(s[1]) + ", " + std::to_string(s[2]) + ", " +
           std::to_string(s[3]) + ")";
}

} // namespace bcnn
