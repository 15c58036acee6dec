#pragma once

// The Bessel convolution layer: filters live in Fourier-Bessel coefficient
// space, are projected to direct-space filters through the transform tensor,
// and their per-order responses are combined as squared moduli.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "bcnn/basis.hpp"
#include "bcnn/conv2d.hpp"
#include "bcnn/fb_image.hpp"
#include "bcnn/parameter.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

enum class Group : std::uint8_t { so2 = 0, o2 = 1 };
enum class Padding : std::uint8_t { same = 0, valid = 1 };

inline const char* to_string(Group g) { return g == Group::so2 ? "SO2" : "O2"; }
inline const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

inline Group parse_group(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "so2" || s == "so(2)") return Group::so2;
    if (s == "o2" || s == "o(2)") return Group::o2;
    throw validation_error("unknown group '" + s + "' (expected so2|o2)");
}

inline Padding parse_padding(const std::string& s) {
    if (s == "same") return Padding::same;
    if (s == "valid") return Padding::valid;
    throw validation_error("unknown padding '" + s + "' (expected same|valid)");
}

/// Real convolutions per order: (Re, Im) of one complex filter for SO2, of two for O2.
inline int parts_per_order(Group g) { return g == Group::so2 ? 2 : 4; }

/// Complex filter coefficients kappa[nu][j][c_in][c_out], stored as two real
/// parameters with the admitted-mode mask.
struct FilterBank {
    std::shared_ptr<const BasisSpec> spec;
    int c_in = 0;
    int c_out = 0;
    int nu_rows = 0;
    int j_cols = 0;
    Parameter re;
    Parameter im;

    std::size_t index(int nu, int j, int ci, int co) const {
        return ((static_cast<std::size_t>(nu) * j_cols + j) * c_in + ci) * c_out + co;
    }

    bool admitted(int nu, int j) const { return spec->admitted(nu, j); }

    std::complex<double> kappa(int nu, int j, int ci, int co) const {
        const std::size_t i = index(nu, j, ci, co);
        return {re.value[i], im.value[i]};
    }

    void set_kappa(int nu, int j, int ci, int co, std::complex<double> v) {
        const std::size_t i = index(nu, j, ci, co);
        re.value[i] = v.real();
        im.value[i] = v.imag();
    }

    /// kappa for one (c_in, c_out) pair in coefficient-matrix form.
    FBCoefficients slice(int ci, int co) const {
        FBCoefficients k(*spec);
        for (const Mode& m : spec->modes) k(m.nu, m.j) = kappa(m.nu, m.j, ci, co);
        return k;
    }

    void set_slice(int ci, int co, const FBCoefficients& k) {
        for (const Mode& m : spec->modes) set_kappa(m.nu, m.j, ci, co, k(m.nu, m.j));
    }

    std::size_t trainable_count() const { return re.trainable_count() + im.trainable_count(); }
    bool mask_respected() const { return re.mask_respected() && im.mask_respected(); }
};

inline FilterBank make_filter_bank(std::shared_ptr<const BasisSpec> spec, int c_in, int c_out) {
    if (c_in < 1 || c_out < 1) throw validation_error("channel counts must be positive");
    FilterBank bank;
    bank.spec = std::move(spec);
    bank.c_in = c_in;
    bank.c_out = c_out;
    bank.nu_rows = bank.spec->nu_count();
    bank.j_cols = bank.spec->j_count();
    const std::size_t count = static_cast<std::size_t>(bank.nu_rows) * bank.j_cols * c_in * c_out;
    bank.re = Parameter("kappa_re", count);
    bank.im = Parameter("kappa_im", count);
    std::vector<std::uint8_t> mask(count, 0);
    for (const Mode& m : bank.spec->modes) {
        for (int ci = 0; ci < c_in; ++ci) {
            for (int co = 0; co < c_out; ++co) mask[bank.index(m.nu, m.j, ci, co)] = 1;
        }
    }
    bank.re.mask = mask;
    bank.im.mask = std::move(mask);
    return bank;
}

struct BConvLayer {
    FilterBank bank;
    std::vector<TransformTensor> transforms; ///< one per scale, same mode set
    Group group = Group::so2;
    int stride = 1;
    Padding padding = Padding::same;
    int c_in = 0;
    int c_out = 0;

    const BasisSpec& spec() const { return *bank.spec; }
    std::size_t scale_count() const { return transforms.size(); }
    int filter_size(std::size_t scale = 0) const { return transforms.at(scale).size(); }
    int primary_size() const { return transforms.front().size(); }
    int output_columns() const { return c_out * bank.nu_rows * parts_per_order(group); }
};

/// Builds a layer whose basis is fixed by the first filter size; further sizes
/// reuse that mode set on their own grids. Unmasked kappa entries are drawn
/// i.i.d. normal with standard deviation 1 / sqrt(2 m c_in).
inline BConvLayer init_layer(int c_in, int c_out, const std::vector<int>& filter_sizes, Group group,
                             CutoffPolicy policy, std::uint64_t seed, int stride = 1,
                             Padding padding = Padding::same) {
    if (filter_sizes.empty()) throw validation_error("at least one filter size is required");
    if (c_in < 1 || c_out < 1) throw validation_error("channel counts must be positive");
    if (stride < 1) throw validation_error("stride must be positive");
    for (int s : filter_sizes) require_odd_filter_size(s);
    auto spec = std::make_shared<const BasisSpec>(make_basis(filter_sizes.front(), policy));
    BConvLayer layer;
    layer.bank = make_filter_bank(spec, c_in, c_out);
    for (int s : filter_sizes) layer.transforms.emplace_back(spec, s);
    layer.group = group;
    layer.stride = stride;
    layer.padding = padding;
    layer.c_in = c_in;
    layer.c_out = c_out;

    std::mt19937_64 rng(seed);
    const double sigma = 1.0 / std::sqrt(2.0 * static_cast<double>(spec->size()) * c_in);
    std::normal_distribution<double> normal(0.0, sigma);
    for (const Mode& m : spec->modes) {
        for (int ci = 0; ci < c_in; ++ci) {
            for (int co = 0; co < c_out; ++co) {
                const std::size_t i = layer.bank.index(m.nu, m.j, ci, co);
                layer.bank.re.value[i] = normal(rng);
                layer.bank.im.value[i] = normal(rng);
            }
        }
    }
    return layer;
}

/// Direct-space filters F_nu = sum_j T_{nu,j} conj(kappa_{nu,j}) at one scale.
struct ProjectedFilters {
    int size = 0;
    int nu_rows = 0;
    int c_in = 0;
    int c_out = 0;
    std::vector<std::complex<double>> values; ///< [pixel][nu][c_in * c_out]

    std::complex<double> operator()(int pixel, int nu, int ci, int co) const {
        return values[((static_cast<std::size_t>(pixel) * nu_rows + nu) * c_in + ci) * c_out + co];
    }
};

inline std::vector<ProjectedFilters> project_filters(const BConvLayer& layer) {
    std::vector<ProjectedFilters> out;
    const FilterBank& bank = layer.bank;
    const BasisSpec& spec = layer.spec();
    const int pairs = layer.c_in * layer.c_out;
    for (const TransformTensor& t : layer.transforms) {
        ProjectedFilters f;
        f.size = t.size();
        f.nu_rows = bank.nu_rows;
        f.c_in = layer.c_in;
        f.c_out = layer.c_out;
        f.values.assign(t.pixel_count() * static_cast<std::size_t>(bank.nu_rows * pairs), {0.0, 0.0});
        for (std::size_t m = 0; m < spec.size(); ++m) {
            const Mode& mode = spec.modes[m];
            const auto* col = t.column(m);
            for (std::size_t p = 0; p < t.pixel_count(); ++p) {
                if (col[p] == std::complex<double>{}) continue;
                auto* dst = f.values.data() + (p * bank.nu_rows + mode.nu) * pairs;
                for (int ci = 0; ci < layer.c_in; ++ci) {
                    for (int co = 0; co < layer.c_out; ++co) {
                        dst[ci * layer.c_out + co] += col[p] * std::conj(bank.kappa(mode.nu, mode.j, ci, co));
                    }
                }
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

/// Real weight matrix for the im2col convolution at one scale, with the pixel
/// area folded in. Rows: (pixel, c_in). Columns: (c_out, nu, part).
/// SO2 parts: Re F, Im F with F = sum_j T conj(kappa).
/// O2 parts: Re A, Im A, Re B, Im B with A = sum_j T Re(kappa), B = sum_j T Im(kappa).
template <typename T>
RowMatrix<T> projection_matrix(const BConvLayer& layer, std::size_t scale) {
    const TransformTensor& t = layer.transforms.at(scale);
    const FilterBank& bank = layer.bank;
    const BasisSpec& spec = layer.spec();
    const int parts = parts_per_order(layer.group);
    const int cols = layer.output_columns();
    const double area = t.pixel_area();
    RowMatrix<double> w = RowMatrix<double>::Zero(static_cast<Eigen::Index>(t.pixel_count()) * layer.c_in, cols);
    for (std::size_t m = 0; m < spec.size(); ++m) {
        const Mode& mode = spec.modes[m];
        const auto* col = t.column(m);
        for (std::size_t p = 0; p < t.pixel_count(); ++p) {
            const double tr = col[p].real() * area;
            const double ti = col[p].imag() * area;
            if (tr == 0.0 && ti == 0.0) continue;
            for (int ci = 0; ci < layer.c_in; ++ci) {
                double* row = w.data() + (static_cast<Eigen::Index>(p) * layer.c_in + ci) * cols;
                for (int co = 0; co < layer.c_out; ++co) {
                    const std::size_t k = bank.index(mode.nu, mode.j, ci, co);
                    const double kr = bank.re.value[k];
                    const double kim = bank.im.value[k];
                    double* cell = row + (co * bank.nu_rows + mode.nu) * parts;
                    if (layer.group == Group::so2) {
                        cell[0] += tr * kr + ti * kim;
                        cell[1] += ti * kr - tr * kim;
                    } else {
                        cell[0] += tr * kr;
                        cell[1] += ti * kr;
                        cell[2] += tr * kim;
                        cell[3] += ti * kim;
                    }
                }
            }
        }
    }
    if constexpr (std::is_same_v<T, double>) {
        return w;
    } else {
        return w.template cast<T>();
    }
}

/// Accumulates d(loss)/d(kappa) into the bank gradients from d(loss)/d(W).
template <typename T>
void projection_backward(BConvLayer& layer, std::size_t scale, const RowMatrix<T>& grad_w) {
    const TransformTensor& t = layer.transforms.at(scale);
    FilterBank& bank = layer.bank;
    const BasisSpec& spec = layer.spec();
    const int parts = parts_per_order(layer.group);
    const int cols = layer.output_columns();
    const double area = t.pixel_area();
    for (std::size_t m = 0; m < spec.size(); ++m) {
        const Mode& mode = spec.modes[m];
        const auto* col = t.column(m);
        for (std::size_t p = 0; p < t.pixel_count(); ++p) {
            const double tr = col[p].real() * area;
            const double ti = col[p].imag() * area;
            if (tr == 0.0 && ti == 0.0) continue;
            for (int ci = 0; ci < layer.c_in; ++ci) {
                const T* row = grad_w.data() + (static_cast<Eigen::Index>(p) * layer.c_in + ci) * cols;
                for (int co = 0; co < layer.c_out; ++co) {
                    const std::size_t k = bank.index(mode.nu, mode.j, ci, co);
                    const T* cell = row + (co * bank.nu_rows + mode.nu) * parts;
                    const double g0 = cell[0];
                    const double g1 = cell[1];
                    if (layer.group == Group::so2) {
                        bank.re.grad[k] += tr * g0 + ti * g1;
                        bank.im.grad[k] += ti * g0 - tr * g1;
                    } else {
                        bank.re.grad[k] += tr * g0 + ti * g1;
                        bank.im.grad[k] += tr * static_cast<double>(cell[2]) + ti * static_cast<double>(cell[3]);
                    }
                }
            }
        }
    }
}

/// out[..., g] = sum_{k < group} in[..., g * group + k]^2.
template <typename T>
Tensor4<T> group_square_sum(const Tensor4<T>& in, int group) {
    if (group < 1 || in.c % group != 0) throw validation_error("channel count not divisible by group");
    Tensor4<T> out(in.n, in.h, in.w, in.c / group);
    const std::size_t cells = out.size();
    for (std::size_t i = 0; i < cells; ++i) {
        const T* src = in.data.data() + i * static_cast<std::size_t>(group);
        T s = 0;
        for (int k = 0; k < group; ++k) s += src[k] * src[k];
        out.data[i] = s;
    }
    return out;
}

template <typename T>
void group_square_sum_backward(const Tensor4<T>& in, int group, const Tensor4<T>& grad_out, Tensor4<T>& grad_in) {
    const std::size_t cells = grad_out.size();
    for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t base = i * static_cast<std::size_t>(group);
        const T g = 2 * grad_out.data[i];
        for (int k = 0; k < group; ++k) grad_in.data[base + k] += g * in.data[base + k];
    }
}

/// Keeps every stride-th row and column.
template <typename T>
Tensor4<T> subsample(const Tensor4<T>& in, int stride) {
    if (stride == 1) return in;
    const int oh = (in.h - 1) / stride + 1;
    const int ow = (in.w - 1) / stride + 1;
    Tensor4<T> out(in.n, oh, ow, in.c);
    for (int b = 0; b < in.n; ++b)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                for (int ch = 0; ch < in.c; ++ch) out(b, y, x, ch) = in(b, y * stride, x * stride, ch);
    return out;
}

template <typename T>
void subsample_backward(const Tensor4<T>& grad_out, int stride, Tensor4<T>& grad_in) {
    for (int b = 0; b < grad_out.n; ++b)
        for (int y = 0; y < grad_out.h; ++y)
            for (int x = 0; x < grad_out.w; ++x)
                for (int ch = 0; ch < grad_out.c; ++ch)
                    grad_in(b, y * stride, x * stride, ch) += grad_out(b, y, x, ch);
}

inline int padding_for(Padding p, int size) { return p == Padding::same ? (size - 1) / 2 : 0; }

namespace detail {

template <typename T>
Tensor4<T> single_scale_forward(const Tensor4<T>& input, const BConvLayer& layer, std::size_t scale, int stride,
                                Padding padding) {
    const int size = layer.filter_size(scale);
    const ConvGeometry g = conv_geometry(input.h, input.w, input.c, size, stride, padding_for(padding, size));
    const RowMatrix<T> w = projection_matrix<T>(layer, scale);
    const Tensor4<T> z = conv2d_forward(input, w, g);
    return group_square_sum(z, layer.bank.nu_rows * parts_per_order(layer.group));
}

inline void check_input(const Tensor4<double>& input, const BConvLayer& layer) {
    if (input.c != layer.c_in) {
        throw validation_error("input has " + std::to_string(input.c) + " channels, layer expects " +
                               std::to_string(layer.c_in));
    }
}

} // namespace detail

/// a = sum_nu |Psi * F_nu|^2 on every window.
inline Tensor4<double> forward_so2(const Tensor4<double>& input, const BConvLayer& layer) {
    detail::check_input(input, layer);
    if (layer.group != Group::so2) throw validation_error("forward_so2 needs an SO2 layer");
    return detail::single_scale_forward(input, layer, 0, layer.stride, layer.padding);
}

/// a = sum_nu |Psi * A_nu|^2 + |Psi * B_nu|^2, reflection-invariant variant.
inline Tensor4<double> forward_o2(const Tensor4<double>& input, const BConvLayer& layer) {
    detail::check_input(input, layer);
    if (layer.group != Group::o2) throw validation_error("forward_o2 needs an O2 layer");
    return detail::single_scale_forward(input, layer, 0, layer.stride, layer.padding);
}

/// Per-pixel maximum over scales of the group forward. Scales run with same
/// padding and unit stride, the layer stride is applied after the maximum.
/// With a single scale this is the plain forward.
inline Tensor4<double> forward_multiscale(const Tensor4<double>& input, const BConvLayer& layer,
                                          std::vector<Tensor4<double>>* per_scale = nullptr) {
    detail::check_input(input, layer);
    if (layer.scale_count() == 1) {
        auto out = detail::single_scale_forward(input, layer, 0, layer.stride, layer.padding);
        if (per_scale) per_scale->assign(1, out);
        return out;
    }
    Tensor4<double> best;
    if (per_scale) per_scale->clear();
    for (std::size_t s = 0; s < layer.scale_count(); ++s) {
        auto a = detail::single_scale_forward(input, layer, s, 1, Padding::same);
        if (s == 0) {
            best = a;
        } else {
            for (std::size_t i = 0; i < a.size(); ++i) best.data[i] = std::max(best.data[i], a.data[i]);
        }
        if (per_scale) per_scale->push_back(std::move(a));
    }
    return subsample(best, layer.stride);
}

/// Dispatches on the layer's group and scale count.
inline Tensor4<double> forward(const Tensor4<double>& input, const BConvLayer& layer) {
    if (layer.scale_count() > 1) return forward_multiscale(input, layer);
    return layer.group == Group::so2 ? forward_so2(input, layer) : forward_o2(input, layer);
}

// ---- coefficient-space oracles ------------------------------------------------

/// sum_nu |sum_j conj(kappa) phi|^2 (SO2) or
/// sum_nu |sum_j Re(kappa) phi|^2 + |sum_j Im(kappa) phi|^2 (O2).
inline double activation_from_coefficients(const FBCoefficients& phi, const FBCoefficients& kappa, Group group) {
    double a = 0.0;
    for (int nu = 0; nu < phi.nu_rows; ++nu) {
        std::complex<double> s{};
        std::complex<double> sr{};
        std::complex<double> si{};
        for (int j = 0; j < phi.j_cols; ++j) {
            if (!phi.admitted(nu, j)) continue;
            const auto k = kappa(nu, j);
            s += std::conj(k) * phi(nu, j);
            sr += k.real() * phi(nu, j);
            si += k.imag() * phi(nu, j);
        }
        a += group == Group::so2 ? std::norm(s) : std::norm(sr) + std::norm(si);
    }
    return a;
}

inline double reference_activation_direct(const FourierBessel& fb, const Image& patch,
                                          const FBCoefficients& kappa, Group group) {
    return activation_from_coefficients(fb.decompose(patch), kappa, group);
}

inline double reference_activation_direct(const Image& patch, const FBCoefficients& kappa, const BasisSpec& spec,
                                          Group group) {
    return reference_activation_direct(FourierBessel(spec), patch, kappa, group);
}

struct IntegralActivation {
    double value = 0.0;
    bool below_exactness_bound = false; ///< n_angles < 2 nu_max + 1
};

/// (1/2pi) int |sum_{nu,j} phi e^{-i nu alpha} conj(kappa)|^2 d alpha by the
/// trapezoidal rule on n_angles equispaced angles. For O2 the integral is taken
/// separately over the real and imaginary parts of kappa and summed.
inline IntegralActivation reference_activation_integral(const FourierBessel& fb, const Image& patch,
                                                        const FBCoefficients& kappa, int n_angles,
                                                        Group group = Group::so2) {
    if (n_angles < 1) throw validation_error("n_angles must be positive");
    const FBCoefficients phi = fb.decompose(patch);
    auto integral = [&](auto&& weight) {
        std::vector<std::complex<double>> per_order(static_cast<std::size_t>(phi.nu_rows));
        for (int nu = 0; nu < phi.nu_rows; ++nu) {
            for (int j = 0; j < phi.j_cols; ++j) {
                if (phi.admitted(nu, j)) per_order[static_cast<std::size_t>(nu)] += phi(nu, j) * weight(nu, j);
            }
        }
        double sum = 0.0;
        for (int a = 0; a < n_angles; ++a) {
            const double alpha = 2.0 * std::numbers::pi * a / n_angles;
            std::complex<double> z{};
            for (int nu = 0; nu < phi.nu_rows; ++nu) {
                z += per_order[static_cast<std::size_t>(nu)] * std::polar(1.0, -nu * alpha);
            }
            sum += std::norm(z);
        }
        return sum / n_angles;
    };
    IntegralActivation r;
    if (group == Group::so2) {
        r.value = integral([&](int nu, int j) { return std::conj(kappa(nu, j)); });
    } else {
        r.value = integral([&](int nu, int j) { return std::complex<double>(kappa(nu, j).real()); }) +
                  integral([&](int nu, int j) { return std::complex<double>(kappa(nu, j).imag()); });
    }
    r.below_exactness_bound = n_angles < 2 * fb.spec().nu_max + 1;
    return r;
}

struct ReflectionDiscrepancy {
    double empirical = 0.0; ///< SO2 activation of the patch minus that of its mirror
    double analytic = 0.0;  ///< crossed-term closed form
};

inline ReflectionDiscrepancy reflection_discrepancy(const FourierBessel& fb, const Image& patch,
                                                    const FBCoefficients& kappa) {
    const FBCoefficients phi = fb.decompose(patch);
    const FBCoefficients mirrored = fb.decompose(mirror_vertical(patch));
    ReflectionDiscrepancy d;
    d.empirical = activation_from_coefficients(phi, kappa, Group::so2) -
                  activation_from_coefficients(mirrored, kappa, Group::so2);
    double cross = 0.0;
    for (int nu = 0; nu < phi.nu_rows; ++nu) {
        for (int j = 0; j < phi.j_cols; ++j) {
            if (!phi.admitted(nu, j)) continue;
            const double im_kc = -kappa(nu, j).imag(); // Im(conj(kappa))
            for (int jp = 0; jp < phi.j_cols; ++jp) {
                if (!phi.admitted(nu, jp)) continue;
                const double re_kc = kappa(nu, jp).real();
                const double mag = std::abs(phi(nu, j)) * std::abs(phi(nu, jp));
                cross += im_kc * re_kc * mag * std::sin(std::arg(phi(nu, j)) - std::arg(phi(nu, jp)));
            }
        }
    }
    d.analytic = -4.0 * cross;
    return d;
}

inline ReflectionDiscrepancy reflection_discrepancy(const Image& patch, const FBCoefficients& kappa,
                                                    const BasisSpec& spec) {
    return reflection_discrepancy(FourierBessel(spec), patch, kappa);
}

/// Single-window activation of one (c_in = 1) output channel through the fast path.
inline double window_activation(const BConvLayer& layer, const Image& patch, int co = 0) {
    if (layer.c_in != 1) throw validation_error("window_activation expects a single input channel");
    const int s = layer.primary_size();
    if (patch.height != s || patch.width != s) throw validation_error("patch does not match the filter size");
    Tensor4<double> in(1, s, s, 1);
    std::copy(patch.pixels.begin(), patch.pixels.end(), in.data.begin());
    const ConvGeometry g = conv_geometry(s, s, 1, s, 1, 0);
    const auto w = projection_matrix<double>(layer, 0);
    const auto z = conv2d_forward(in, w, g);
    return group_square_sum(z, layer.bank.nu_rows * parts_per_order(layer.group)).data[static_cast<std::size_t>(co)];
}

} // namespace bcnn
