#pragma once

// Fourier-Bessel decomposition of image patches, reconstruction, and the
// rotation/reflection actions in coefficient space.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcnn/basis.hpp"
#include "bcnn/basis_io.hpp"
#include "bcnn/image.hpp"

namespace bcnn {

using cplx = std::complex<double>;

/// phi_{nu,j} for nu in [0, nu_max], j in [0, j_max]; zero outside the admitted set.
struct FBCoefficients {
    int nu_rows = 0;
    int j_cols = 0;
    std::vector<cplx> values;        ///< row-major [nu][j]
    std::vector<std::uint8_t> mask;  ///< 1 where (nu, j) is admitted
    std::string spec_id;

    FBCoefficients() = default;

    explicit FBCoefficients(const BasisSpec& spec)
        : nu_rows(spec.nu_count()),
          j_cols(spec.j_count()),
          values(static_cast<std::size_t>(nu_rows * j_cols), cplx{}),
          mask(values.size(), 0),
          spec_id(basis_hash(spec)) {
        for (const Mode& m : spec.modes) mask[index(m.nu, m.j)] = 1;
    }

    std::size_t index(int nu, int j) const { return static_cast<std::size_t>(nu * j_cols + j); }

    cplx& operator()(int nu, int j) { return values[index(nu, j)]; }
    cplx operator()(int nu, int j) const { return values[index(nu, j)]; }

    bool admitted(int nu, int j) const {
        return nu >= 0 && nu < nu_rows && j >= 0 && j < j_cols && mask[index(nu, j)] != 0;
    }

    /// phi_{nu,j} for signed nu, using phi_{-nu,j} = (-1)^nu conj(phi_{nu,j}).
    cplx signed_at(int nu, int j) const {
        if (nu >= 0) return admitted(nu, j) ? (*this)(nu, j) : cplx{};
        const int a = -nu;
        if (!admitted(a, j)) return {};
        const cplx c = std::conj((*this)(a, j));
        return (a % 2 == 0) ? c : -c;
    }

    friend bool operator==(const FBCoefficients&, const FBCoefficients&) = default;
};

inline double max_abs_difference(const FBCoefficients& a, const FBCoefficients& b) {
    if (a.nu_rows != b.nu_rows || a.j_cols != b.j_cols) {
        throw validation_error("coefficient layouts differ");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    }
    return worst;
}

/// Euclidean norm over the stored (nu >= 0) coefficients.
inline double coefficient_norm(const FBCoefficients& c) {
    double s = 0.0;
    for (const cplx& v : c.values) s += std::norm(v);
    return std::sqrt(s);
}

/// Residue thresholds for reconstruction: imaginary parts up to the first are
/// dropped silently, beyond the second they are treated as a symmetry bug.
inline constexpr double kResidueSilent = 1e-8;
inline constexpr double kResidueFatal = 1e-6;

/// Decomposition/reconstruction on a fixed (2n+1)-grid for a given basis.
class FourierBessel {
public:
    explicit FourierBessel(const BasisSpec& spec)
        : FourierBessel(std::make_shared<const BasisSpec>(spec), spec.filter_size) {}

    FourierBessel(std::shared_ptr<const BasisSpec> spec, int grid_size)
        : tensor_(std::move(spec), grid_size), spec_id_(basis_hash(tensor_.spec())) {}

    const BasisSpec& spec() const { return tensor_.spec(); }
    const TransformTensor& tensor() const { return tensor_; }
    int grid_size() const { return tensor_.size(); }
    const std::string& spec_id() const { return spec_id_; }

    /// phi_{nu,j} = sum_pixels T_{nu,j} * patch * (1/n)^2, i.e. the area-weighted
    /// inner product with the basis element N J_nu(k rho) e^{i nu theta}.
    FBCoefficients decompose(const Image& patch) const {
        check_patch(patch);
        FBCoefficients out = empty();
        const double area = tensor_.pixel_area();
        const std::size_t pixels = tensor_.pixel_count();
        const BasisSpec& s = spec();
        for (std::size_t m = 0; m < s.size(); ++m) {
            const cplx* col = tensor_.column(m);
            double re = 0.0;
            double im = 0.0;
            for (std::size_t p = 0; p < pixels; ++p) {
                re += col[p].real() * patch.pixels[p];
                im += col[p].imag() * patch.pixels[p];
            }
            out(s.modes[m].nu, s.modes[m].j) = {re * area, im * area};
        }
        return out;
    }

    /// Synthesizes the real image from the stored rows and their negative-nu
    /// partners. `residue` receives the largest imaginary part encountered.
    Image reconstruct(const FBCoefficients& c, double* residue = nullptr) const {
        check_layout(c);
        const int size = grid_size();
        const std::size_t pixels = tensor_.pixel_count();
        std::vector<cplx> acc(pixels, cplx{});
        const BasisSpec& s = spec();
        for (std::size_t m = 0; m < s.size(); ++m) {
            const Mode& mode = s.modes[m];
            const cplx phi = c(mode.nu, mode.j);
            if (phi == cplx{}) continue;
            const cplx* col = tensor_.column(m);
            for (std::size_t p = 0; p < pixels; ++p) {
                acc[p] += phi * std::conj(col[p]);
                if (mode.nu > 0) acc[p] += std::conj(phi) * col[p];
            }
        }
        Image out(size, size);
        double peak = 0.0;
        double worst = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
            out.pixels[p] = acc[p].real();
            peak = std::max(peak, std::abs(acc[p].real()));
            worst = std::max(worst, std::abs(acc[p].imag()));
        }
        const double relative = worst / std::max(1.0, peak);
        if (residue) *residue = relative;
        if (relative > kResidueFatal) {
            throw internal_error("reconstruction left an imaginary residue of " +
                                 std::to_string(relative) + "; coefficient symmetry is broken");
        }
        return out;
    }

    /// Direct signed-order projection onto N J_nu(k rho) e^{i nu theta}, computed
    /// from the Bessel evaluator without going through the stored tensor or the
    /// conjugate-symmetry relation. Used to audit that relation.
    cplx project_signed(const Image& patch, int nu, int j) const {
        check_patch(patch);
        const int a = std::abs(nu);
        const auto idx = spec().index_of(a, j);
        if (!idx) throw validation_error("mode (" + std::to_string(nu) + ", " + std::to_string(j) +
                                         ") is not admitted");
        const Mode& mode = spec().modes[*idx];
        const int size = grid_size();
        const int n = tensor_.half_width();
        const double sign = (nu < 0 && a % 2 == 1) ? -1.0 : 1.0; // J_{-nu} = (-1)^nu J_nu
        double re = 0.0;
        double im = 0.0;
        for (int r = 0; r < size; ++r) {
            for (int col = 0; col < size; ++col) {
                const auto [xi, yi] = grid_point(r, col, n);
                if (xi * xi + yi * yi > n * n) continue;
                const double rho = std::sqrt(static_cast<double>(xi * xi + yi * yi)) / n;
                const double theta = (xi == 0 && yi == 0) ? 0.0 : std::atan2(yi, xi);
                const double radial = sign * mode.norm * bessel_j(a, mode.k * rho);
                // conj(e^{i nu theta}) = e^{-i nu theta}
                const double v = patch(r, col) * radial;
                re += v * std::cos(nu * theta);
                im -= v * std::sin(nu * theta);
            }
        }
        const double area = tensor_.pixel_area();
        return {re * area, im * area};
    }

    FBCoefficients empty() const {
        FBCoefficients c(spec());
        c.spec_id = spec_id_;
        return c;
    }

private:
    void check_patch(const Image& patch) const {
        if (patch.height != grid_size() || patch.width != grid_size()) {
            throw validation_error("patch is " + std::to_string(patch.height) + "x" +
                                   std::to_string(patch.width) + ", expected " +
                                   std::to_string(grid_size()) + "x" + std::to_string(grid_size()));
        }
    }

    void check_layout(const FBCoefficients& c) const {
        if (c.nu_rows != spec().nu_count() || c.j_cols != spec().j_count()) {
            throw validation_error("coefficients do not match the basis layout");
        }
    }

    TransformTensor tensor_;
    std::string spec_id_;
};

/// phi_{nu,j} <- phi_{nu,j} e^{-i nu alpha}.
inline FBCoefficients rotate_coeffs(const FBCoefficients& c, double alpha) {
    FBCoefficients out = c;
    for (int nu = 0; nu < c.nu_rows; ++nu) {
        const cplx phase = std::polar(1.0, -nu * alpha);
        for (int j = 0; j < c.j_cols; ++j) {
            if (c.admitted(nu, j)) out(nu, j) = c(nu, j) * phase;
        }
    }
    return out;
}

/// Mirror about the vertical axis: Re <- (-1)^nu Re, Im <- (-1)^{nu+1} Im.
inline FBCoefficients reflect_coeffs(const FBCoefficients& c) {
    FBCoefficients out = c;
    for (int nu = 0; nu < c.nu_rows; ++nu) {
        const double re_sign = nu % 2 == 0 ? 1.0 : -1.0;
        for (int j = 0; j < c.j_cols; ++j) {
            if (!c.admitted(nu, j)) continue;
            const cplx v = c(nu, j);
            out(nu, j) = {re_sign * v.real(), -re_sign * v.imag()};
        }
    }
    return out;
}

/// max |phi_{-nu,j} - (-1)^nu conj(phi_{nu,j})| given both signed halves.
inline double conjugate_symmetry_report(const FBCoefficients& positive,
                                        const FBCoefficients& negative) {
    if (positive.nu_rows != negative.nu_rows || positive.j_cols != negative.j_cols) {
        throw validation_error("coefficient layouts differ");
    }
    double worst = 0.0;
    for (int nu = 0; nu < positive.nu_rows; ++nu) {
        for (int j = 0; j < positive.j_cols; ++j) {
            if (!positive.admitted(nu, j)) continue;
            worst = std::max(worst, std::abs(negative(nu, j) - positive.signed_at(-nu, j)));
        }
    }
    return worst;
}

/// Negative-order coefficients of a patch by direct projection, stored at |nu|.
inline FBCoefficients negative_order_coefficients(const FourierBessel& fb, const Image& patch) {
    FBCoefficients neg = fb.empty();
    for (const Mode& m : fb.spec().modes) neg(m.nu, m.j) = fb.project_signed(patch, -m.nu, m.j);
    return neg;
}

/// Recomputes the negative orders of a real patch directly and compares them
/// with the conjugate-symmetry prediction from the stored rows.
inline double conjugate_symmetry_report(const FourierBessel& fb, const Image& patch) {
    return conjugate_symmetry_report(fb.decompose(patch), negative_order_coefficients(fb, patch));
}

inline nlohmann::json coeffs_to_json(const FBCoefficients& c) {
    nlohmann::json records = nlohmann::json::array();
    for (int nu = 0; nu < c.nu_rows; ++nu) {
        for (int j = 0; j < c.j_cols; ++j) {
            if (!c.admitted(nu, j)) continue;
            records.push_back({{"nu", nu}, {"j", j}, {"re", c(nu, j).real()}, {"im", c(nu, j).imag()}});
        }
    }
    return {{"basis", c.spec_id}, {"nu_rows", c.nu_rows}, {"j_cols", c.j_cols}, {"coefficients", records}};
}

inline FBCoefficients coeffs_from_json(const nlohmann::json& j, const BasisSpec& spec) {
    FBCoefficients c(spec);
    try {
        if (j.contains("basis") && j.at("basis").get<std::string>() != c.spec_id) {
            throw validation_error("coefficients were computed with a different basis");
        }
        for (const auto& rec : j.at("coefficients")) {
            const int nu = rec.at("nu").get<int>();
            const int jj = rec.at("j").get<int>();
            if (!c.admitted(nu, jj)) {
                throw validation_error("coefficient (" + std::to_string(nu) + ", " + std::to_string(jj) +
                                       ") is outside the basis");
            }
            c(nu, jj) = {rec.at("re").get<double>(), rec.at("im").get<double>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed coefficient JSON: ") + e.what());
    }
    return c;
}

} // namespace bcnn
