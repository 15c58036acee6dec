#pragma once

// Bessel functions of the first kind for integer order, the zeros of their
// derivative, and the normalization constants of the Fourier-Bessel basis.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bcnn/error.hpp"

namespace bcnn {

/// Supported envelope of the public evaluators.
inline constexpr int kBesselMaxOrder = 200;
inline constexpr double kBesselMaxArg = 500.0;

/// Root search stops when k*R passes this value.
inline constexpr double kRootSearchLimit = 600.0;
/// Bracketing step on k*R; well below half the smallest gap between zeros of J'_nu.
inline constexpr double kRootBracketStep = std::numbers::pi / 8.0;
inline constexpr double kRootTolerance = 1e-12;

/// The j-th zero of J'_nu(k R), with R normalized away (k is in units of 1/R).
struct ModeRoot {
    int nu = 0;
    int j = 0;
    double k = 0.0;

    friend bool operator==(const ModeRoot&, const ModeRoot&) = default;
};

namespace detail {

// Ascending series. Used where the terms cannot cancel catastrophically:
// x <= 12 (largest term ~4e3 for nu = 0) or x^2 <= nu + 1 (terms shrink by >= 4x).
inline double bessel_j_series(int nu, double x) {
    const double half = 0.5 * x;
    double term = 1.0;
    for (int i = 1; i <= nu; ++i) {
        term *= half / i;
    }
    if (term == 0.0) {
        return 0.0;
    }
    const double q = -half * half;
    double sum = term;
    for (int k = 1; k < 1000; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k + nu));
        sum += term;
        if (k > half && std::abs(term) <= 1e-18 * std::abs(sum) + 1e-300) {
            break;
        }
    }
    return sum;
}

// Miller's backward recurrence normalized with J_0 + 2 sum_{k>=1} J_{2k} = 1.
// Stable for every order; the start index sits past the turning point max(nu, x).
inline double bessel_j_miller(int nu, double x) {
    const double anchor = std::max(static_cast<double>(nu), x);
    int start = static_cast<int>(anchor + 20.0 + 15.0 * std::cbrt(anchor));
    start += start % 2;

    constexpr double big = 1e250;
    constexpr double small = 1e-250;
    const double two_over_x = 2.0 / x;

    double next = 0.0;  // v_{k+1}
    double cur = 1e-30; // v_k
    double answer = 0.0;
    double even_sum = 0.0; // sum of v_k over even k >= 2
    for (int k = start; k > 0; --k) {
        const double prev = k * two_over_x * cur - next; // v_{k-1}
        next = cur;
        cur = prev;
        if (std::abs(cur) > big) {
            cur *= small;
            next *= small;
            answer *= small;
            even_sum *= small;
        }
        const int order = k - 1;
        if (order == nu) {
            answer = cur;
        }
        if (order >= 2 && order % 2 == 0) {
            even_sum += cur;
        }
    }
    const double norm = cur + 2.0 * even_sum;
    return answer / norm;
}

/// J_nu(x) for nu >= 0 and x >= 0 with no envelope check.
inline double bessel_j_unchecked(int nu, double x) {
    if (x == 0.0) {
        return nu == 0 ? 1.0 : 0.0;
    }
    if (x <= 12.0 || x * x <= nu + 1.0) {
        return bessel_j_series(nu, x);
    }
    return bessel_j_miller(nu, x);
}

/// J'_nu(x) = (J_{nu-1}(x) - J_{nu+1}(x)) / 2, with J_{-1} = -J_1.
inline double bessel_j_prime_unchecked(int nu, double x) {
    if (nu == 0) {
        return -bessel_j_unchecked(1, x);
    }
    return 0.5 * (bessel_j_unchecked(nu - 1, x) - bessel_j_unchecked(nu + 1, x));
}

inline void check_envelope(int nu, double x) {
    if (nu < 0 || nu > kBesselMaxOrder) {
        throw domain_error("bessel order " + std::to_string(nu) + " outside [0, " +
                           std::to_string(kBesselMaxOrder) + "]");
    }
    if (!(x >= 0.0 && x <= kBesselMaxArg)) {
        throw domain_error("bessel argument " + std::to_string(x) + " outside [0, " +
                           std::to_string(kBesselMaxArg) + "]");
    }
}

} // namespace detail

/// Bessel function of the first kind J_nu(x); absolute error below 1e-12 on the envelope.
inline double bessel_j(int nu, double x) {
    detail::check_envelope(nu, x);
    return detail::bessel_j_unchecked(nu, x);
}

/// First derivative J'_nu(x).
inline double bessel_j_prime(int nu, double x) {
    detail::check_envelope(nu, x);
    return detail::bessel_j_prime_unchecked(nu, x);
}

namespace detail {

// Calls on_root(t) for successive zeros t of J'_nu on (0, limit], in increasing
// order, until on_root returns false. Zeros are bracketed on a uniform grid
// and refined by bisection.
template <typename OnRoot>
void scan_derivative_zeros(int nu, double limit, OnRoot&& on_root) {
    // J'_nu has no positive zero below nu for nu >= 1 (j'_{nu,1} > nu), and
    // J'_0 = -J_1 < 0 on (0, 3.83).
    double a = nu == 0 ? 0.5 * kRootBracketStep : static_cast<double>(nu);
    double fa = bessel_j_prime_unchecked(nu, a);
    while (true) {
        const double b = a + kRootBracketStep;
        if (b > limit) {
            return;
        }
        const double fb = bessel_j_prime_unchecked(nu, b);
        if (fa == 0.0 || (fb != 0.0 && (fa < 0.0) != (fb < 0.0))) {
            double lo = a;
            double hi = b;
            double flo = fa;
            if (fa != 0.0) {
                while (hi - lo > kRootTolerance) {
                    const double mid = 0.5 * (lo + hi);
                    if (mid <= lo || mid >= hi) {
                        break;
                    }
                    const double fm = bessel_j_prime_unchecked(nu, mid);
                    if (fm == 0.0) {
                        lo = hi = mid;
                        break;
                    }
                    if ((fm < 0.0) == (flo < 0.0)) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
            }
            const double root = fa == 0.0 ? a : 0.5 * (lo + hi);
            if (!on_root(root)) {
                return;
            }
            if (fa == 0.0) {
                // The root sat on the left endpoint; step off it.
                a = b;
                fa = fb;
                continue;
            }
        }
        a = b;
        fa = fb;
    }
}

} // namespace detail

/// The first `count` zeros k of J'_nu(k R). For nu = 0 the first entry is the
/// constant mode k = 0, stored exactly.
inline std::vector<ModeRoot> find_derivative_zeros(int nu, int count, double R = 1.0) {
    if (nu < 0 || nu > kBesselMaxOrder) {
        throw validation_error("order must lie in [0, " + std::to_string(kBesselMaxOrder) + "]");
    }
    if (count < 1) {
        throw validation_error("root count must be positive");
    }
    if (!(R > 0.0) || !std::isfinite(R)) {
        throw validation_error("radius must be positive and finite");
    }
    std::vector<ModeRoot> roots;
    roots.reserve(static_cast<std::size_t>(count));
    if (nu == 0) {
        roots.push_back({0, 0, 0.0});
    }
    if (static_cast<int>(roots.size()) < count) {
        detail::scan_derivative_zeros(nu, kRootSearchLimit, [&](double t) {
            roots.push_back({nu, static_cast<int>(roots.size()), t / R});
            return static_cast<int>(roots.size()) < count;
        });
    }
    if (static_cast<int>(roots.size()) < count) {
        throw search_exhausted_error("found only " + std::to_string(roots.size()) + " of " +
                                     std::to_string(count) + " zeros of J'_" +
                                     std::to_string(nu) + " below kR = " +
                                     std::to_string(kRootSearchLimit));
    }
    return roots;
}

/// All zeros of J'_nu(k R) with k <= k_max (including k = 0 when nu = 0).
inline std::vector<ModeRoot> derivative_zeros_below(int nu, double k_max, double R = 1.0) {
    if (nu < 0 || nu > kBesselMaxOrder) {
        throw validation_error("order must lie in [0, " + std::to_string(kBesselMaxOrder) + "]");
    }
    std::vector<ModeRoot> roots;
    if (nu == 0 && k_max >= 0.0) {
        roots.push_back({0, 0, 0.0});
    }
    const double t_max = k_max * R;
    if (t_max > kRootSearchLimit) {
        throw search_exhausted_error("k_max * R exceeds the root search limit");
    }
    // Scan one step past t_max so a root just below it is still bracketed.
    detail::scan_derivative_zeros(nu, t_max + kRootBracketStep, [&](double t) {
        if (t / R > k_max) {
            return false;
        }
        roots.push_back({nu, static_cast<int>(roots.size()), t / R});
        return true;
    });
    return roots;
}

namespace detail {

inline void require_mode_root(int nu, double k, double R) {
    if (nu < 0 || !(k >= 0.0) || !(R > 0.0)) {
        throw validation_error("contract violation: invalid (nu, k, R)");
    }
    if (k == 0.0) {
        if (nu != 0) {
            throw validation_error("contract violation: k = 0 is a mode root only for nu = 0");
        }
        return;
    }
    const double slope = bessel_j_prime(nu, k * R);
    if (std::abs(slope) > 1e-8) {
        throw validation_error("contract violation: k = " + std::to_string(k) +
                               " is not a zero of J'_" + std::to_string(nu));
    }
}

} // namespace detail

/// N_{nu,j} = 1 / sqrt(2 pi int_0^R rho J_nu(k rho)^2 drho), evaluated in closed
/// form through Lommel's integral at a zero of J'_nu.
inline double normalization_constant(int nu, double k, double R = 1.0) {
    detail::require_mode_root(nu, k, R);
    if (k == 0.0) {
        return 1.0 / std::sqrt(std::numbers::pi * R * R);
    }
    const double jv = bessel_j(nu, k * R);
    const double radial = (0.5 * R * R - 0.5 * nu * nu / (k * k)) * jv * jv;
    return 1.0 / std::sqrt(2.0 * std::numbers::pi * radial);
}

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = false;
};

/// int_0^R rho J_nu(k_a rho) J_nu(k_b rho) drho by adaptive Gauss-Kronrod
/// quadrature. Validation only: vanishes for distinct roots of J'_nu.
inline QuadratureResult lommel_orthogonality(int nu, double k_a, double k_b, double R = 1.0,
                                             double tolerance = 1e-13) {
    detail::require_mode_root(nu, k_a, R);
    detail::require_mode_root(nu, k_b, R);
    auto integrand = [&](double rho) {
        return rho * bessel_j(nu, k_a * rho) * bessel_j(nu, k_b * rho);
    };
    QuadratureResult result;
    result.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        integrand, 0.0, R, 20, tolerance, &result.error_estimate);
    result.converged = result.error_estimate <= std::max(1e-10, 1e3 * tolerance);
    return result;
}

} // namespace bcnn
