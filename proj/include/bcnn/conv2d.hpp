#pragma once

// Real 2D cross-correlation on NHWC tensors via im2col and a dense GEMM.
// Images are processed in fixed-size chunks; weight-gradient partials are
// summed in chunk order so results do not depend on the worker count.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcnn/error.hpp"
#include "bcnn/parallel.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kConvChunk = 8;

struct ConvGeometry {
    int size = 0;
    int stride = 1;
    int pad = 0;
    int in_h = 0;
    int in_w = 0;
    int c_in = 0;
    int out_h = 0;
    int out_w = 0;

    /// Columns of the im2col matrix, ordered (row, col, channel).
    int patch_len() const { return size * size * c_in; }
};

inline ConvGeometry conv_geometry(int in_h, int in_w, int c_in, int size, int stride, int pad) {
    if (size < 1 || stride < 1 || pad < 0) throw validation_error("invalid convolution geometry");
    ConvGeometry g{size, stride, pad, in_h, in_w, c_in, 0, 0};
    const int span_h = in_h + 2 * pad - size;
    const int span_w = in_w + 2 * pad - size;
    if (span_h < 0 || span_w < 0) {
        throw validation_error("filter of size " + std::to_string(size) + " does not fit a " +
                               std::to_string(in_h) + "x" + std::to_string(in_w) + " input with padding " +
                               std::to_string(pad));
    }
    g.out_h = span_h / stride + 1;
    g.out_w = span_w / stride + 1;
    return g;
}

/// Rows: (image, out_y, out_x) for images [b0, b1); zero outside the input.
template <typename T>
void im2col(const Tensor4<T>& in, int b0, int b1, const ConvGeometry& g, RowMatrix<T>& cols) {
    const int per_image = g.out_h * g.out_w;
    cols.resize(static_cast<Eigen::Index>(b1 - b0) * per_image, g.patch_len());
    for (int b = b0; b < b1; ++b) {
        const T* src = in.image(b);
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                T* dst = cols.data() + (static_cast<std::size_t>(b - b0) * per_image + oy * g.out_w + ox) *
                                           static_cast<std::size_t>(g.patch_len());
                for (int r = 0; r < g.size; ++r) {
                    const int y = oy * g.stride - g.pad + r;
                    for (int c = 0; c < g.size; ++c) {
                        const int x = ox * g.stride - g.pad + c;
                        T* cell = dst + (r * g.size + c) * g.c_in;
                        if (y < 0 || y >= g.in_h || x < 0 || x >= g.in_w) {
                            std::fill(cell, cell + g.c_in, T(0));
                        } else {
                            const T* p = src + (static_cast<std::size_t>(y) * g.in_w + x) * g.c_in;
                            std::copy(p, p + g.c_in, cell);
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds im2col-shaped gradients back onto the input layout.
template <typename T>
void col2im_add(const RowMatrix<T>& cols, int b0, int b1, const ConvGeometry& g, Tensor4<T>& out) {
    const int per_image = g.out_h * g.out_w;
    for (int b = b0; b < b1; ++b) {
        T* dst = out.image(b);
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const T* src = cols.data() + (static_cast<std::size_t>(b - b0) * per_image + oy * g.out_w + ox) *
                                                 static_cast<std::size_t>(g.patch_len());
                for (int r = 0; r < g.size; ++r) {
                    const int y = oy * g.stride - g.pad + r;
                    if (y < 0 || y >= g.in_h) continue;
                    for (int c = 0; c < g.size; ++c) {
                        const int x = ox * g.stride - g.pad + c;
                        if (x < 0 || x >= g.in_w) continue;
                        const T* cell = src + (r * g.size + c) * g.c_in;
                        T* p = dst + (static_cast<std::size_t>(y) * g.in_w + x) * g.c_in;
                        for (int ch = 0; ch < g.c_in; ++ch) p[ch] += cell[ch];
                    }
                }
            }
        }
    }
}

inline int chunk_count(int batch) { return (batch + kConvChunk - 1) / kConvChunk; }

/// out[b, y, x, :] = sum over the window of in * weights; weights is
/// patch_len x c_out with rows ordered (row, col, channel).
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& in, const RowMatrix<T>& weights, const ConvGeometry& g) {
    if (in.c != g.c_in || in.h != g.in_h || in.w != g.in_w) throw validation_error("conv input shape mismatch");
    if (weights.rows() != g.patch_len()) throw validation_error("conv weight shape mismatch");
    const int c_out = static_cast<int>(weights.cols());
    Tensor4<T> out(in.n, g.out_h, g.out_w, c_out);
    const int per_image = g.out_h * g.out_w;
    parallel_for(chunk_count(in.n), [&](int chunk) {
        const int b0 = chunk * kConvChunk;
        const int b1 = std::min(in.n, b0 + kConvChunk);
        RowMatrix<T> cols;
        im2col(in, b0, b1, g, cols);
        Eigen::Map<RowMatrix<T>> dst(out.image(b0), static_cast<Eigen::Index>(b1 - b0) * per_image, c_out);
        dst.noalias() = cols * weights;
    });
    return out;
}

/// Gradients of conv2d_forward. Either output pointer may be null.
template <typename T>
void conv2d_backward(const Tensor4<T>& in, const RowMatrix<T>& weights, const ConvGeometry& g,
                     const Tensor4<T>& grad_out, Tensor4<T>* grad_in, RowMatrix<T>* grad_weights) {
    const int c_out = static_cast<int>(weights.cols());
    const int per_image = g.out_h * g.out_w;
    const int chunks = chunk_count(in.n);
    std::vector<RowMatrix<T>> partial(grad_weights ? static_cast<std::size_t>(chunks) : 0);
    parallel_for(chunks, [&](int chunk) {
        const int b0 = chunk * kConvChunk;
        const int b1 = std::min(in.n, b0 + kConvChunk);
        Eigen::Map<const RowMatrix<T>> dy(grad_out.image(b0), static_cast<Eigen::Index>(b1 - b0) * per_image,
                                          c_out);
        if (grad_weights) {
            RowMatrix<T> cols;
            im2col(in, b0, b1, g, cols);
            partial[static_cast<std::size_t>(chunk)].noalias() = cols.transpose() * dy;
        }
        if (grad_in) {
            RowMatrix<T> dcols = dy * weights.transpose();
            col2im_add(dcols, b0, b1, g, *grad_in);
        }
    });
    if (grad_weights) {
        grad_weights->setZero(weights.rows(), weights.cols());
        for (const auto& p : partial) *grad_weights += p;
    }
}

} // namespace bcnn
