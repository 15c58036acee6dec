#pragma once

// Randomized oracle-equivalence and symmetry suite, plus the
// pseudo-injectivity probe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcnn/bconv.hpp"
#include "bcnn/fb_image.hpp"

namespace bcnn {

struct CheckStat {
    double tolerance = 0.0;
    double worst = 0.0;
    int cases = 0;
    int failures = 0;

    void add(double deviation) {
        ++cases;
        worst = std::max(worst, deviation);
        if (!(deviation <= tolerance)) ++failures;
    }
};

struct CertifyResult {
    std::uint64_t seed = 0;
    int cases = 0;
    std::map<std::string, CheckStat> checks;

    bool passed() const {
        for (const auto& [name, c] : checks) {
            if (c.failures) return false;
        }
        return true;
    }
};

using ReflectFn = std::function<FBCoefficients(const FBCoefficients&)>;

struct CertifyCase {
    int size = 0;
    CutoffPolicy cutoff = CutoffPolicy::full;
    Image patch;
};

/// Random odd size in {5, ..., 13}, random cutoff, uniform [0, 1) pixels.
inline CertifyCase random_case(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> half(2, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CertifyCase c;
    c.size = 2 * half(rng) + 1;
    c.cutoff = rng() & 1u ? CutoffPolicy::full : CutoffPolicy::half;
    c.patch = Image(c.size, c.size);
    for (auto& p : c.patch.pixels) p = u(rng);
    return c;
}

inline FBCoefficients random_kappa(const BasisSpec& spec, std::mt19937_64& rng, bool real_only = false) {
    std::normal_distribution<double> normal(0.0, 1.0);
    FBCoefficients k(spec);
    for (const Mode& m : spec.modes) k(m.nu, m.j) = {normal(rng), real_only ? 0.0 : normal(rng)};
    return k;
}

namespace detail {

inline BConvLayer single_filter_layer(const BasisSpec& spec, const FBCoefficients& kappa, Group group) {
    BConvLayer layer = init_layer(1, 1, {spec.filter_size}, group, spec.policy, 0, 1, Padding::valid);
    layer.bank.set_slice(0, 0, kappa);
    return layer;
}

inline double scaled(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double relative(double a, double b) { return std::abs(a - b) / (std::abs(a) + 1e-12); }

} // namespace detail

/// Runs `cases` random instances per group through every oracle pairing and
/// symmetry law. `reflect` substitutes the coefficient-space mirror (used to
/// check that a broken implementation is caught).
inline CertifyResult certify(std::uint64_t seed, int cases, const ReflectFn& reflect = reflect_coeffs) {
    if (cases < 1) throw validation_error("certify needs at least one case");
    CertifyResult r;
    r.seed = seed;
    r.cases = cases;
    auto& fast = r.checks["fast_vs_direct"];
    auto& integral = r.checks["integral_vs_direct"];
    auto& symmetry = r.checks["conjugate_symmetry"];
    auto& rotate = r.checks["rotate_path"];
    auto& reflect_path = r.checks["reflect_path"];
    auto& delta = r.checks["reflection_formula"];
    auto& delta_real = r.checks["reflection_real_kappa"];
    auto& rot_inv = r.checks["rot90_invariance"];
    auto& o2_mirror = r.checks["o2_mirror_invariance"];
    fast.tolerance = 1e-10;
    integral.tolerance = 1e-9;
    symmetry.tolerance = 1e-10;
    rotate.tolerance = 1e-10;
    reflect_path.tolerance = 1e-10;
    delta.tolerance = 1e-9;
    delta_real.tolerance = 1e-12;
    rot_inv.tolerance = 1e-8;
    o2_mirror.tolerance = 1e-8;

    std::mt19937_64 rng(seed);
    for (int i = 0; i < cases; ++i) {
        const CertifyCase c = random_case(rng);
        const BasisSpec spec = make_basis(c.size, c.cutoff);
        const FourierBessel fb(spec);
        const FBCoefficients phi = fb.decompose(c.patch);

        symmetry.add(conjugate_symmetry_report(fb, c.patch));
        rotate.add(max_abs_difference(rotate_coeffs(phi, std::numbers::pi / 2), fb.decompose(rot90(c.patch))));
        reflect_path.add(max_abs_difference(reflect(phi), fb.decompose(mirror_vertical(c.patch))));

        for (Group g : {Group::so2, Group::o2}) {
            const FBCoefficients kappa = random_kappa(spec, rng);
            const BConvLayer layer = detail::single_filter_layer(spec, kappa, g);
            const double direct = activation_from_coefficients(phi, kappa, g);
            const double a_fast = window_activation(layer, c.patch);
            fast.add(detail::scaled(a_fast, direct));
            rot_inv.add(detail::relative(a_fast, window_activation(layer, rot90(c.patch))));
            const int n_angles = 2 * spec.nu_max + 1;
            integral.add(detail::scaled(reference_activation_integral(fb, c.patch, kappa, n_angles, g).value, direct));
            if (g == Group::so2) {
                const ReflectionDiscrepancy d = reflection_discrepancy(fb, c.patch, kappa);
                delta.add(std::abs(d.analytic - d.empirical) / std::max(1.0, std::abs(direct)));
                const FBCoefficients real_kappa = random_kappa(spec, rng, true);
                delta_real.add(std::abs(reflection_discrepancy(fb, c.patch, real_kappa).analytic));
            } else {
                o2_mirror.add(detail::relative(a_fast, window_activation(layer, mirror_vertical(c.patch))));
            }
        }
    }
    return r;
}

inline nlohmann::json certify_to_json(const CertifyResult& r) {
    nlohmann::json checks = nlohmann::json::object();
    for (const auto& [name, c] : r.checks) {
        checks[name] = {{"worst", c.worst}, {"tolerance", c.tolerance}, {"cases", c.cases}, {"failures", c.failures}};
    }
    return {{"seed", r.seed}, {"cases", r.cases}, {"passed", r.passed()}, {"checks", checks}};
}

struct InjectivityReport {
    int pairs = 0;
    int kappa_draws = 0;
    int collisions = 0;
    double min_separation = 0.0;      ///< smallest relative distance between activation profiles
    int control_pairs = 0;
    double control_max_separation = 0.0; ///< patch vs its rot90, expected ~0
};

/// Activation profiles over `kappa_draws` random filters for random patch
/// pairs; a collision is a relative profile distance below `tolerance`.
inline InjectivityReport injectivity_probe(std::uint64_t seed, int pairs = 200, int kappa_draws = 64, int size = 9,
                                           Group group = Group::so2, double tolerance = 1e-9) {
    const BConvLayer layer = init_layer(1, kappa_draws, {size}, group, CutoffPolicy::full, seed, 1, Padding::valid);
    std::mt19937_64 rng(seed ^ 0x1a7ec71eULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_patch = [&] {
        Image p(size, size);
        for (auto& v : p.pixels) v = u(rng);
        return p;
    };
    auto profile = [&](const Image& p) {
        Tensor4<double> in(1, size, size, 1);
        std::copy(p.pixels.begin(), p.pixels.end(), in.data.begin());
        return forward(in, layer).data;
    };
    auto separation = [](const std::vector<double>& a, const std::vector<double>& b) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            num = std::max(num, std::abs(a[i] - b[i]));
            den = std::max({den, std::abs(a[i]), std::abs(b[i])});
        }
        return den > 0.0 ? num / den : 0.0;
    };
    auto is_rotation = [](const Image& a, const Image& b) {
        for (int k = 0; k < 4; ++k) {
            if (rot90(a, k) == b) return true;
        }
        return false;
    };

    InjectivityReport rep;
    rep.kappa_draws = kappa_draws;
    rep.min_separation = std::numeric_limits<double>::infinity();
    for (int i = 0; i < pairs; ++i) {
        const Image a = random_patch();
        Image b = random_patch();
        while (is_rotation(a, b)) b = random_patch();
        const double s = separation(profile(a), profile(b));
        rep.min_separation = std::min(rep.min_separation, s);
        if (s <= tolerance) ++rep.collisions;
        ++rep.pairs;
        if (i % 10 == 0) {
            rep.control_max_separation = std::max(rep.control_max_separation, separation(profile(a), profile(rot90(a))));
            ++rep.control_pairs;
        }
    }
    return rep;
}

inline nlohmann::json injectivity_to_json(const InjectivityReport& r) {
    return {{"pairs", r.pairs},
            {"kappa_draws", r.kappa_draws},
            {"collisions", r.collisions},
            {"min_separation", r.min_separation},
            {"control_pairs", r.control_pairs},
            {"control_max_separation", r.control_max_separation}};
}

} // namespace bcnn
