#pragma once

// Mode enumeration under the Nyquist cutoff and the discretized transformation
// tensor T_{nu,j}(x, y) = N_{nu,j} J_nu(k_{nu,j} rho) exp(-i nu theta) on the
// (2n+1) x (2n+1) filter grid.

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcnn/bessel.hpp"
#include "bcnn/error.hpp"

namespace bcnn {

enum class CutoffPolicy : std::uint8_t { full = 0, half = 1 };

inline const char* to_string(CutoffPolicy p) { return p == CutoffPolicy::full ? "full" : "half"; }

inline CutoffPolicy parse_cutoff(const std::string& s) {
    if (s == "full") return CutoffPolicy::full;
    if (s == "half") return CutoffPolicy::half;
    throw validation_error("unknown cutoff policy '" + s + "' (expected full|half)");
}

inline void require_odd_filter_size(int filter_size) {
    if (filter_size < 3 || filter_size % 2 == 0) {
        throw validation_error("filter size must be odd and >= 3, got " +
                               std::to_string(filter_size));
    }
}

/// k_max = ((2n+1)/2) pi for a (2n+1)-pixel filter; the half policy divides by two.
inline double compute_kmax(int filter_size, CutoffPolicy policy) {
    require_odd_filter_size(filter_size);
    const double k = 0.5 * filter_size * std::numbers::pi;
    return policy == CutoffPolicy::half ? 0.5 * k : k;
}

/// One admitted basis element.
struct Mode {
    int nu = 0;
    int j = 0;
    double k = 0.0;
    double norm = 0.0; ///< N_{nu,j}

    friend bool operator==(const Mode&, const Mode&) = default;
};

/// The admitted (nu, j) modes, in lexicographic order (nu, then j).
struct BasisSpec {
    int filter_size = 0; ///< 0 when built directly from k_max
    double radius = 1.0;
    double k_max = 0.0;
    CutoffPolicy policy = CutoffPolicy::full;
    std::vector<Mode> modes;
    int nu_max = 0;
    int j_max = 0; ///< largest j index; the nu = 0 row is the longest

    std::size_t size() const noexcept { return modes.size(); }
    int nu_count() const noexcept { return nu_max + 1; }
    int j_count() const noexcept { return j_max + 1; }

    /// Position of (nu, j) in `modes`, if admitted.
    std::optional<std::size_t> index_of(int nu, int j) const {
        if (nu < 0 || nu > nu_max || j < 0) return std::nullopt;
        const std::size_t first = row_offset_[static_cast<std::size_t>(nu)];
        const std::size_t last = row_offset_[static_cast<std::size_t>(nu) + 1];
        if (first + static_cast<std::size_t>(j) >= last) return std::nullopt;
        return first + static_cast<std::size_t>(j);
    }

    bool admitted(int nu, int j) const { return index_of(nu, j).has_value(); }

    /// Number of admitted j for a given nu.
    int modes_for(int nu) const {
        if (nu < 0 || nu > nu_max) return 0;
        return static_cast<int>(row_offset_[static_cast<std::size_t>(nu) + 1] -
                                row_offset_[static_cast<std::size_t>(nu)]);
    }

    /// Rebuilds the per-nu offsets; call after editing `modes`.
    void reindex() {
        nu_max = 0;
        j_max = 0;
        for (const auto& m : modes) {
            nu_max = std::max(nu_max, m.nu);
            j_max = std::max(j_max, m.j);
        }
        row_offset_.assign(static_cast<std::size_t>(nu_max) + 2, 0);
        for (const auto& m : modes) {
            ++row_offset_[static_cast<std::size_t>(m.nu) + 1];
        }
        for (std::size_t i = 1; i < row_offset_.size(); ++i) {
            row_offset_[i] += row_offset_[i - 1];
        }
    }

    friend bool operator==(const BasisSpec& a, const BasisSpec& b) {
        return a.filter_size == b.filter_size && a.radius == b.radius && a.k_max == b.k_max &&
               a.policy == b.policy && a.modes == b.modes;
    }

private:
    std::vector<std::size_t> row_offset_{0, 0};
};

/// Keeps exactly the (nu, j) with k_{nu,j} <= k_max, walking nu upward until
/// the first root of an order exceeds k_max.
inline BasisSpec enumerate_modes(double k_max, double R = 1.0) {
    if (!(k_max > 0.0) || !std::isfinite(k_max)) {
        throw validation_error("k_max must be positive and finite");
    }
    if (R != 1.0) {
        throw validation_error("only the normalized radius R = 1 is supported");
    }
    BasisSpec spec;
    spec.k_max = k_max;
    spec.radius = R;
    for (int nu = 0; nu <= kBesselMaxOrder; ++nu) {
        const auto roots = derivative_zeros_below(nu, k_max, R);
        if (roots.empty()) {
            break;
        }
        for (const auto& r : roots) {
            spec.modes.push_back({r.nu, r.j, r.k, normalization_constant(r.nu, r.k, R)});
        }
    }
    spec.reindex();
    return spec;
}

/// Basis for a (2n+1)-pixel filter under the given cutoff policy.
inline BasisSpec make_basis(int filter_size, CutoffPolicy policy) {
    BasisSpec spec = enumerate_modes(compute_kmax(filter_size, policy));
    spec.filter_size = filter_size;
    spec.policy = policy;
    return spec;
}

/// Integer pixel offsets on a (2n+1)-grid: column c -> x = (c - n) / n and
/// row r -> y = (n - r) / n (row 0 is the top, y points up).
struct GridPoint {
    int xi;
    int yi;
};

inline GridPoint grid_point(int row, int col, int n) { return {col - n, n - row}; }

/// Complex samples of T_{nu,j} for every admitted mode on a (2n+1)^2 grid.
/// Stored mode-major: values[mode * pixels + pixel], pixel = row * size + col.
class TransformTensor {
public:
    TransformTensor() = default;

    TransformTensor(std::shared_ptr<const BasisSpec> spec, int grid_size)
        : spec_(std::move(spec)), size_(grid_size) {
        require_odd_filter_size(grid_size);
        const int n = (grid_size - 1) / 2;
        const std::size_t pixels = pixel_count();
        values_.assign(spec_->size() * pixels, {0.0, 0.0});
        for (std::size_t m = 0; m < spec_->size(); ++m) {
            const Mode& mode = spec_->modes[m];
            for (int r = 0; r < size_; ++r) {
                for (int c = 0; c < size_; ++c) {
                    const auto [xi, yi] = grid_point(r, c, n);
                    // Integer test keeps the disk mask exactly symmetric under the grid's
                    // rotations and mirrors.
                    if (xi * xi + yi * yi > n * n) {
                        continue;
                    }
                    const double rho = std::sqrt(static_cast<double>(xi * xi + yi * yi)) / n;
                    const double theta = (xi == 0 && yi == 0) ? 0.0 : std::atan2(yi, xi);
                    const double radial = mode.norm * bessel_j(mode.nu, mode.k * rho);
                    const double phase = -mode.nu * theta;
                    values_[m * pixels + static_cast<std::size_t>(r * size_ + c)] = {
                        radial * std::cos(phase), radial * std::sin(phase)};
                }
            }
        }
    }

    const BasisSpec& spec() const { return *spec_; }
    std::shared_ptr<const BasisSpec> spec_ptr() const { return spec_; }
    int size() const noexcept { return size_; }
    int half_width() const noexcept { return (size_ - 1) / 2; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(size_) * static_cast<std::size_t>(size_);
    }

    std::complex<double> operator()(std::size_t mode, std::size_t pixel) const {
        return values_[mode * pixel_count() + pixel];
    }

    /// T_{nu,j} at a pixel; zero for modes outside the basis.
    std::complex<double> at(int nu, int pixel, int j) const {
        const auto idx = spec_->index_of(nu, j);
        if (!idx) return {0.0, 0.0};
        return (*this)(*idx, static_cast<std::size_t>(pixel));
    }

    const std::complex<double>* column(std::size_t mode) const {
        return values_.data() + mode * pixel_count();
    }

    /// Area weight of one pixel, (1/n)^2.
    double pixel_area() const {
        const double n = half_width();
        return 1.0 / (n * n);
    }

private:
    std::shared_ptr<const BasisSpec> spec_;
    int size_ = 0;
    std::vector<std::complex<double>> values_;
};

/// Transform tensor on the basis' own filter grid.
inline TransformTensor build_transform_tensor(const BasisSpec& spec) {
    if (spec.filter_size == 0) {
        throw validation_error("basis has no filter size; pass a grid size explicitly");
    }
    return TransformTensor(std::make_shared<const BasisSpec>(spec), spec.filter_size);
}

inline TransformTensor build_transform_tensor(std::shared_ptr<const BasisSpec> spec, int grid_size) {
    return TransformTensor(std::move(spec), grid_size);
}

/// Discrete Gram matrix <b_a, b_b> of the admitted basis elements
/// b = N J_nu(k rho) exp(i nu theta), summed over the disk on the filter grid
/// refined `oversample` times, each point weighted by its pixel area.
inline Eigen::MatrixXcd basis_gram(const BasisSpec& spec, int oversample) {
    if (oversample < 1) {
        throw validation_error("oversample must be >= 1");
    }
    if (spec.filter_size == 0) {
        throw validation_error("basis has no filter size");
    }
    const int n = (spec.filter_size - 1) / 2 * oversample;
    const TransformTensor fine(std::make_shared<const BasisSpec>(spec), 2 * n + 1);
    const auto pixels = static_cast<Eigen::Index>(fine.pixel_count());
    const auto count = static_cast<Eigen::Index>(spec.size());
    // Columns hold conj(T) = b.
    Eigen::MatrixXcd b(pixels, count);
    for (Eigen::Index m = 0; m < count; ++m) {
        for (Eigen::Index p = 0; p < pixels; ++p) {
            b(p, m) = std::conj(fine(static_cast<std::size_t>(m), static_cast<std::size_t>(p)));
        }
    }
    Eigen::MatrixXcd gram = b.adjoint() * b * fine.pixel_area();
    // Enforce exact Hermitian symmetry against rounding in the product.
    Eigen::MatrixXcd herm = 0.5 * (gram + gram.adjoint());
    return herm;
}

/// Largest |G - I| entry.
inline double gram_deviation(const Eigen::MatrixXcd& gram) {
    const auto n = gram.rows();
    return (gram - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
}

} // namespace bcnn
