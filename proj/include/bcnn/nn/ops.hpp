#pragma once

// Differentiable operations recorded on a Graph.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bcnn/bconv.hpp"
#include "bcnn/conv2d.hpp"
#include "bcnn/nn/graph.hpp"
#include "bcnn/parameter.hpp"

namespace bcnn::nn {

template <typename T>
int input(Graph<T>& g, Tensor4<T> value) {
    return g.add("input", std::move(value));
}

/// A parameter viewed as a (1, 1, rows, cols) tensor; its gradient flows back
/// into the parameter's accumulator.
template <typename T>
int weight(Graph<T>& g, Parameter& p, int rows, int cols) {
    if (static_cast<std::size_t>(rows) * cols != p.size()) throw internal_error("weight shape mismatch for " + p.name);
    Tensor4<T> v(1, 1, rows, cols);
    std::copy(p.value.begin(), p.value.end(), v.data.begin());
    return g.add("weight:" + p.name, std::move(v), {}, [&p](Graph<T>& gr, int self) {
        const auto& d = gr.grad(self).data;
        for (std::size_t i = 0; i < d.size(); ++i) p.grad[i] += static_cast<double>(d[i]);
    });
}

namespace detail {

template <typename T>
RowMatrix<T> as_matrix(const Tensor4<T>& t) {
    return Eigen::Map<const RowMatrix<T>>(t.data.data(), t.w, t.c);
}

} // namespace detail

/// Cross-correlation of x with a (1, 1, patch_len, c_out) weight node.
template <typename T>
int conv(Graph<T>& g, int x, int w, int size, int stride, int pad) {
    const Tensor4<T>& in = g.value(x);
    const Tensor4<T>& wt = g.value(w);
    const ConvGeometry geo = conv_geometry(in.h, in.w, in.c, size, stride, pad);
    if (wt.w != geo.patch_len()) {
        throw validation_error("conv weight has " + std::to_string(wt.w) + " rows, expected " +
                               std::to_string(geo.patch_len()));
    }
    Tensor4<T> out = conv2d_forward(in, detail::as_matrix(wt), geo);
    return g.add("conv", std::move(out), {x, w}, [x, w, geo](Graph<T>& gr, int self) {
        const RowMatrix<T> wm = detail::as_matrix(gr.value(w));
        RowMatrix<T> gw;
        // Raw inputs need no gradient.
        Tensor4<T>* gx = gr.node(x).op == "input" ? nullptr : &gr.grad(x);
        conv2d_backward(gr.value(x), wm, geo, gr.grad(self), gx, &gw);
        auto& gwt = gr.grad(w).data;
        for (std::size_t i = 0; i < gwt.size(); ++i) gwt[i] += gw.data()[i];
    });
}

/// Real weight matrix of one scale of a Bessel layer, as a (1, 1, rows, cols) node.
template <typename T>
int bconv_projection(Graph<T>& g, BConvLayer& layer, std::size_t scale) {
    RowMatrix<T> w = projection_matrix<T>(layer, scale);
    Tensor4<T> v(1, 1, static_cast<int>(w.rows()), static_cast<int>(w.cols()));
    std::copy(w.data(), w.data() + w.size(), v.data.begin());
    return g.add("bconv_projection", std::move(v), {}, [&layer, scale](Graph<T>& gr, int self) {
        projection_backward(layer, scale, detail::as_matrix(gr.grad(self)));
    });
}

template <typename T>
int square_sum(Graph<T>& g, int x, int group) {
    Tensor4<T> out = group_square_sum(g.value(x), group);
    return g.add("square_sum", std::move(out), {x}, [x, group](Graph<T>& gr, int self) {
        group_square_sum_backward(gr.value(x), group, gr.grad(self), gr.grad(x));
    });
}

/// Elementwise maximum; the gradient goes to the first maximal input.
template <typename T>
int maximum(Graph<T>& g, const std::vector<int>& xs) {
    if (xs.empty()) throw validation_error("maximum of no inputs");
    Tensor4<T> out = g.value(xs.front());
    std::vector<int> arg(out.size(), 0);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        const Tensor4<T>& v = g.value(xs[k]);
        if (!v.same_shape(out)) throw validation_error("maximum over differently shaped maps");
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (v.data[i] > out.data[i]) {
                out.data[i] = v.data[i];
                arg[i] = static_cast<int>(k);
            }
        }
    }
    return g.add("maximum", std::move(out), xs, [xs, arg = std::move(arg)](Graph<T>& gr, int self) {
        const auto& d = gr.grad(self).data;
        std::vector<Tensor4<T>*> targets;
        for (int x : xs) targets.push_back(&gr.grad(x));
        for (std::size_t i = 0; i < d.size(); ++i) targets[static_cast<std::size_t>(arg[i])]->data[i] += d[i];
    });
}

template <typename T>
int stride_subsample(Graph<T>& g, int x, int stride) {
    if (stride == 1) return x;
    Tensor4<T> out = subsample(g.value(x), stride);
    return g.add("subsample", std::move(out), {x}, [x, stride](Graph<T>& gr, int self) {
        subsample_backward(gr.grad(self), stride, gr.grad(x));
    });
}

/// Full Bessel layer: projection, per-order real convolutions and squared-modulus
/// sum; several scales are combined by a per-pixel maximum.
template <typename T>
int bconv(Graph<T>& g, int x, BConvLayer& layer) {
    if (g.value(x).c != layer.c_in) {
        throw validation_error("bconv input has " + std::to_string(g.value(x).c) + " channels, expected " +
                               std::to_string(layer.c_in));
    }
    const int group = layer.bank.nu_rows * parts_per_order(layer.group);
    if (layer.scale_count() == 1) {
        const int size = layer.filter_size(0);
        const int w = bconv_projection(g, layer, 0);
        const int z = conv(g, x, w, size, layer.stride, padding_for(layer.padding, size));
        return square_sum(g, z, group);
    }
    std::vector<int> maps;
    for (std::size_t s = 0; s < layer.scale_count(); ++s) {
        const int size = layer.filter_size(s);
        const int w = bconv_projection(g, layer, s);
        const int z = conv(g, x, w, size, 1, (size - 1) / 2);
        maps.push_back(square_sum(g, z, group));
    }
    return stride_subsample(g, maximum(g, maps), layer.stride);
}

/// Adds a per-channel bias.
template <typename T>
int bias(Graph<T>& g, int x, Parameter& b) {
    Tensor4<T> out = g.value(x);
    if (static_cast<std::size_t>(out.c) != b.size()) throw internal_error("bias size mismatch for " + b.name);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += static_cast<T>(b.value[i % out.c]);
    return g.add("bias:" + b.name, std::move(out), {x}, [x, &b](Graph<T>& gr, int self) {
        const auto& d = gr.grad(self);
        auto& gx = gr.grad(x).data;
        for (std::size_t i = 0; i < d.size(); ++i) {
            gx[i] += d.data[i];
            b.grad[i % d.c] += static_cast<double>(d.data[i]);
        }
    });
}

template <typename T>
int relu(Graph<T>& g, int x) {
    Tensor4<T> out = g.value(x);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return g.add("relu", std::move(out), {x}, [x](Graph<T>& gr, int self) {
        const auto& in = gr.value(x).data;
        const auto& d = gr.grad(self).data;
        auto& gx = gr.grad(x).data;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (in[i] > T(0)) gx[i] += d[i];
        }
    });
}

/// x / (1 + |x|)
template <typename T>
int softsign(Graph<T>& g, int x) {
    Tensor4<T> out = g.value(x);
    for (auto& v : out.data) v = v / (T(1) + std::abs(v));
    return g.add("softsign", std::move(out), {x}, [x](Graph<T>& gr, int self) {
        const auto& in = gr.value(x).data;
        const auto& d = gr.grad(self).data;
        auto& gx = gr.grad(x).data;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const T den = T(1) + std::abs(in[i]);
            gx[i] += d[i] / (den * den);
        }
    });
}

/// 2x2 average pooling with stride 2; an odd trailing row/column is dropped.
template <typename T>
int avg_pool2(Graph<T>& g, int x) {
    const Tensor4<T>& in = g.value(x);
    if (in.h < 2 || in.w < 2) throw validation_error("average pool needs at least 2x2 maps");
    Tensor4<T> out(in.n, in.h / 2, in.w / 2, in.c);
    for (int b = 0; b < in.n; ++b)
        for (int y = 0; y < out.h; ++y)
            for (int xx = 0; xx < out.w; ++xx)
                for (int ch = 0; ch < in.c; ++ch)
                    out(b, y, xx, ch) = T(0.25) * (in(b, 2 * y, 2 * xx, ch) + in(b, 2 * y, 2 * xx + 1, ch) +
                                                   in(b, 2 * y + 1, 2 * xx, ch) + in(b, 2 * y + 1, 2 * xx + 1, ch));
    return g.add("avg_pool2", std::move(out), {x}, [x](Graph<T>& gr, int self) {
        const Tensor4<T>& d = gr.grad(self);
        Tensor4<T>& gx = gr.grad(x);
        for (int b = 0; b < d.n; ++b)
            for (int y = 0; y < d.h; ++y)
                for (int xx = 0; xx < d.w; ++xx)
                    for (int ch = 0; ch < d.c; ++ch) {
                        const T v = T(0.25) * d(b, y, xx, ch);
                        gx(b, 2 * y, 2 * xx, ch) += v;
                        gx(b, 2 * y, 2 * xx + 1, ch) += v;
                        gx(b, 2 * y + 1, 2 * xx, ch) += v;
                        gx(b, 2 * y + 1, 2 * xx + 1, ch) += v;
                    }
    });
}

/// Mean over the spatial dimensions -> (n, 1, 1, c).
template <typename T>
int global_avg_pool(Graph<T>& g, int x) {
    const Tensor4<T>& in = g.value(x);
    Tensor4<T> out(in.n, 1, 1, in.c);
    const T scale = T(1) / static_cast<T>(in.h * in.w);
    for (int b = 0; b < in.n; ++b)
        for (int y = 0; y < in.h; ++y)
            for (int xx = 0; xx < in.w; ++xx)
                for (int ch = 0; ch < in.c; ++ch) out(b, 0, 0, ch) += in(b, y, xx, ch) * scale;
    return g.add("global_avg_pool", std::move(out), {x}, [x, scale](Graph<T>& gr, int self) {
        const Tensor4<T>& d = gr.grad(self);
        Tensor4<T>& gx = gr.grad(x);
        for (int b = 0; b < gx.n; ++b)
            for (int y = 0; y < gx.h; ++y)
                for (int xx = 0; xx < gx.w; ++xx)
                    for (int ch = 0; ch < gx.c; ++ch) gx(b, y, xx, ch) += d(b, 0, 0, ch) * scale;
    });
}

/// (n, 1, 1, in) x (in, out) + b.
template <typename T>
int dense(Graph<T>& g, int x, Parameter& w, Parameter& b, int in_features, int out_features) {
    const Tensor4<T>& in = g.value(x);
    if (in.h * in.w * in.c != in_features) {
        throw validation_error("dense layer expects " + std::to_string(in_features) + " features, got " +
                               std::to_string(in.h * in.w * in.c));
    }
    Tensor4<T> out(in.n, 1, 1, out_features);
    for (int s = 0; s < in.n; ++s) {
        const T* xi = in.image(s);
        T* yo = out.image(s);
        for (int o = 0; o < out_features; ++o) yo[o] = static_cast<T>(b.value[static_cast<std::size_t>(o)]);
        for (int i = 0; i < in_features; ++i) {
            const double* wr = w.value.data() + static_cast<std::size_t>(i) * out_features;
            for (int o = 0; o < out_features; ++o) yo[o] += xi[i] * static_cast<T>(wr[o]);
        }
    }
    return g.add("dense:" + w.name, std::move(out), {x},
                 [x, &w, &b, in_features, out_features](Graph<T>& gr, int self) {
                     const Tensor4<T>& d = gr.grad(self);
                     const Tensor4<T>& in = gr.value(x);
                     Tensor4<T>& gx = gr.grad(x);
                     for (int s = 0; s < d.n; ++s) {
                         const T* dy = d.image(s);
                         const T* xi = in.image(s);
                         T* dx = gx.image(s);
                         for (int o = 0; o < out_features; ++o) b.grad[static_cast<std::size_t>(o)] += dy[o];
                         for (int i = 0; i < in_features; ++i) {
                             const double* wr = w.value.data() + static_cast<std::size_t>(i) * out_features;
                             double* gw = w.grad.data() + static_cast<std::size_t>(i) * out_features;
                             T acc = 0;
                             for (int o = 0; o < out_features; ++o) {
                                 acc += dy[o] * static_cast<T>(wr[o]);
                                 gw[o] += static_cast<double>(dy[o]) * static_cast<double>(xi[i]);
                             }
                             dx[i] += acc;
                         }
                     }
                 });
}

/// Row-wise log-softmax probabilities.
template <typename T>
std::vector<double> softmax_rows(const Tensor4<T>& logits) {
    const int k = logits.h * logits.w * logits.c;
    std::vector<double> p(static_cast<std::size_t>(logits.n) * k);
    for (int s = 0; s < logits.n; ++s) {
        const T* z = logits.image(s);
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i) mx = std::max(mx, static_cast<double>(z[i]));
        double sum = 0.0;
        for (int i = 0; i < k; ++i) sum += std::exp(static_cast<double>(z[i]) - mx);
        const double lse = mx + std::log(sum);
        for (int i = 0; i < k; ++i) p[static_cast<std::size_t>(s) * k + i] = std::exp(static_cast<double>(z[i]) - lse);
    }
    return p;
}

/// Mean cross-entropy of softmax(logits) against integer labels, computed
/// with log-sum-exp. Scalar (1, 1, 1, 1) output.
template <typename T>
int softmax_cross_entropy(Graph<T>& g, int logits, const std::vector<int>& labels) {
    const Tensor4<T>& z = g.value(logits);
    const int k = z.h * z.w * z.c;
    if (static_cast<int>(labels.size()) != z.n) throw validation_error("label count does not match the batch");
    double loss = 0.0;
    for (int s = 0; s < z.n; ++s) {
        const int y = labels[static_cast<std::size_t>(s)];
        if (y < 0 || y >= k) throw validation_error("label " + std::to_string(y) + " outside the class range");
        const T* zs = z.image(s);
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i) mx = std::max(mx, static_cast<double>(zs[i]));
        double sum = 0.0;
        for (int i = 0; i < k; ++i) sum += std::exp(static_cast<double>(zs[i]) - mx);
        loss += mx + std::log(sum) - static_cast<double>(zs[y]);
    }
    Tensor4<T> out(1, 1, 1, 1);
    out.data[0] = static_cast<T>(loss / z.n);
    return g.add("softmax_xent", std::move(out), {logits}, [logits, labels, k](Graph<T>& gr, int self) {
        const Tensor4<T>& zz = gr.value(logits);
        const std::vector<double> p = softmax_rows(zz);
        const double scale = static_cast<double>(gr.grad(self).data[0]) / zz.n;
        Tensor4<T>& gz = gr.grad(logits);
        for (int s = 0; s < zz.n; ++s) {
            T* gs = gz.image(s);
            for (int i = 0; i < k; ++i) {
                double d = p[static_cast<std::size_t>(s) * k + i];
                if (i == labels[static_cast<std::size_t>(s)]) d -= 1.0;
                gs[i] += static_cast<T>(d * scale);
            }
        }
    });
}

/// Per-channel running statistics for the optional standardization layer.
struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    bool initialized = false;
};

/// Per-channel batch normalization without affine terms. Training mode
/// normalizes with the batch statistics (and differentiates through them) and
/// folds them into the running statistics; evaluation uses the running ones.
template <typename T>
int standardize(Graph<T>& g, int x, RunningStats& stats, bool training) {
    const Tensor4<T>& in = g.value(x);
    const auto c = static_cast<std::size_t>(in.c);
    if (stats.mean.empty()) {
        stats.mean.assign(c, 0.0);
        stats.var.assign(c, 1.0);
    }
    std::vector<double> mean = stats.mean;
    std::vector<double> var = stats.var;
    const bool batch_stats = training && in.size() > 0;
    if (batch_stats) {
        const double per = static_cast<double>(in.size() / c);
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::size_t i = 0; i < in.size(); ++i) mean[i % c] += in.data[i];
        for (auto& m : mean) m /= per;
        for (std::size_t i = 0; i < in.size(); ++i) {
            const double d = in.data[i] - mean[i % c];
            var[i % c] += d * d;
        }
        for (auto& v : var) v /= per;
        const double mom = stats.initialized ? stats.momentum : 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            stats.mean[ch] += mom * (mean[ch] - stats.mean[ch]);
            stats.var[ch] += mom * (var[ch] - stats.var[ch]);
        }
        stats.initialized = true;
    }
    std::vector<T> scale(c);
    Tensor4<T> out = in;
    for (std::size_t ch = 0; ch < c; ++ch) scale[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + stats.epsilon));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = (out.data[i] - static_cast<T>(mean[i % c])) * scale[i % c];
    }
    return g.add("standardize", std::move(out), {x}, [x, scale, batch_stats](Graph<T>& gr, int self) {
        const auto& d = gr.grad(self).data;
        const auto& y = gr.value(self).data;
        auto& gx = gr.grad(x).data;
        const std::size_t c = scale.size();
        if (!batch_stats) {
            for (std::size_t i = 0; i < d.size(); ++i) gx[i] += d[i] * scale[i % c];
            return;
        }
        std::vector<double> mean_d(c, 0.0), mean_dy(c, 0.0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            mean_d[i % c] += d[i];
            mean_dy[i % c] += static_cast<double>(d[i]) * y[i];
        }
        const double per = static_cast<double>(d.size() / c);
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean_d[ch] /= per;
            mean_dy[ch] /= per;
        }
        for (std::size_t i = 0; i < d.size(); ++i) {
            const std::size_t ch = i % c;
            gx[i] += scale[ch] * static_cast<T>(d[i] - mean_d[ch] - y[i] * mean_dy[ch]);
        }
    });
}

/// Sum of squares of all entries; a scalar test objective.
template <typename T>
int sum_of_squares(Graph<T>& g, int x) {
    Tensor4<T> out(1, 1, 1, 1);
    for (T v : g.value(x).data) out.data[0] += v * v;
    return g.add("sum_of_squares", std::move(out), {x}, [x](Graph<T>& gr, int self) {
        const T s = gr.grad(self).data[0];
        const auto& in = gr.value(x).data;
        auto& gx = gr.grad(x).data;
        for (std::size_t i = 0; i < in.size(); ++i) gx[i] += 2 * s * in[i];
    });
}

} // namespace bcnn::nn
