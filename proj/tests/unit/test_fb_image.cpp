#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "bcnn/data/dataset.hpp"
#include "bcnn/fb_image.hpp"

using namespace bcnn;

namespace {

Image random_patch(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image p(size, size);
    for (auto& v : p.pixels) v = u(rng);
    return p;
}

// Zero outside the disk so that direct-space and coefficient-space
// comparisons see the same support.
Image disk_only(Image p) {
    for (int r = 0; r < p.height; ++r)
        for (int c = 0; c < p.width; ++c)
            if (!inside_disk(r, c, p.height)) p(r, c) = 0.0;
    return p;
}

} // namespace

TEST(Decompose, ConstantPatch) {
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const double c = 0.7;
    const FBCoefficients phi = fb.decompose(Image(9, 9, c));
    // Discrete oracle: c * N00 * (disk pixel count) * (1/n)^2.
    int inside = 0;
    for (int r = 0; r < 9; ++r)
        for (int col = 0; col < 9; ++col) inside += inside_disk(r, col, 9);
    const double n00 = 1.0 / std::sqrt(std::numbers::pi);
    EXPECT_NEAR(phi(0, 0).real(), c * n00 * inside / 16.0, 1e-12);
    EXPECT_NEAR(phi(0, 0).real(), c * std::sqrt(std::numbers::pi), 0.1 * c * std::sqrt(std::numbers::pi));
    // The pixel disk has four-fold symmetry, so only orders divisible by 4 survive.
    for (const Mode& m : spec.modes) {
        if (m.nu % 4 != 0) EXPECT_LT(std::abs(phi(m.nu, m.j)), 1e-13) << m.nu << "," << m.j;
    }
}

TEST(Decompose, ZeroPatch) {
    const FourierBessel fb(make_basis(7, CutoffPolicy::half));
    const FBCoefficients phi = fb.decompose(Image(7, 7));
    for (auto v : phi.values) EXPECT_EQ(v, cplx{});
}

TEST(Decompose, RenderedBasisElementIsDominant) {
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const TransformTensor& t = fb.tensor();
    Image p(9, 9);
    for (int i = 0; i < 81; ++i) p.pixels[static_cast<std::size_t>(i)] = t.at(2, i, 0).real();
    const FBCoefficients phi = fb.decompose(p);
    double best = 0.0;
    int best_nu = -1;
    int best_j = -1;
    for (const Mode& m : spec.modes) {
        if (std::abs(phi(m.nu, m.j)) > best) {
            best = std::abs(phi(m.nu, m.j));
            best_nu = m.nu;
            best_j = m.j;
        }
    }
    EXPECT_EQ(best_nu, 2);
    EXPECT_EQ(best_j, 0);
}

TEST(Decompose, MatchesGramOracle) {
    // Decomposing Re(b_m) gives G[:, m] / 2 plus the partner term; here we check
    // the exact linear-algebra identity phi = B^H p (1/n)^2 at oversample 1.
    const BasisSpec spec = make_basis(7, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const Image p = random_patch(7, 3);
    const FBCoefficients phi = fb.decompose(p);
    const Eigen::MatrixXcd g = basis_gram(spec, 1);
    (void)g;
    for (std::size_t m = 0; m < spec.size(); ++m) {
        cplx expected{};
        for (int i = 0; i < 49; ++i) expected += fb.tensor()(m, static_cast<std::size_t>(i)) * p.pixels[static_cast<std::size_t>(i)];
        expected /= 9.0;
        EXPECT_LT(std::abs(phi(spec.modes[m].nu, spec.modes[m].j) - expected), 1e-13);
    }
}

TEST(Decompose, InvariantsForRealPatch) {
    const BasisSpec spec = make_basis(11, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const FBCoefficients phi = fb.decompose(random_patch(11, 9));
    for (int nu = 0; nu < phi.nu_rows; ++nu) {
        for (int j = 0; j < phi.j_cols; ++j) {
            if (!phi.admitted(nu, j)) EXPECT_EQ(phi(nu, j), cplx{});
        }
    }
    for (int j = 0; j < phi.j_cols; ++j) EXPECT_LT(std::abs(phi(0, j).imag()), 1e-10);
}

TEST(Decompose, SizeMismatchThrows) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    EXPECT_THROW(fb.decompose(Image(7, 7)), validation_error);
    EXPECT_THROW(fb.decompose(Image(9, 11)), validation_error);
}

TEST(Decompose, Linearity) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const Image p = random_patch(9, 1);
    const Image q = random_patch(9, 2);
    Image mix(9, 9);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.pixels[i] = 2.5 * p.pixels[i] - 0.75 * q.pixels[i];
    const auto a = fb.decompose(p);
    const auto b = fb.decompose(q);
    const auto m = fb.decompose(mix);
    for (std::size_t i = 0; i < m.values.size(); ++i) EXPECT_LT(std::abs(m.values[i] - (2.5 * a.values[i] - 0.75 * b.values[i])), 1e-12);
}

TEST(Decompose, ParsevalBound) {
    const BasisSpec spec = make_basis(13, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const double gram = gram_deviation(basis_gram(spec, 1));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Image p = random_patch(13, seed);
        const FBCoefficients phi = fb.decompose(p);
        double coeff_energy = 0.0;
        for (const Mode& m : spec.modes) coeff_energy += (m.nu == 0 ? 1.0 : 2.0) * std::norm(phi(m.nu, m.j));
        double disk_energy = 0.0;
        for (int r = 0; r < 13; ++r)
            for (int c = 0; c < 13; ++c)
                if (inside_disk(r, c, 13)) disk_energy += p(r, c) * p(r, c) / 36.0;
        EXPECT_LE(coeff_energy, disk_energy * (1.0 + spec.size() * gram));
    }
}

TEST(Reconstruct, ZeroCoefficients) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const Image out = fb.reconstruct(fb.empty());
    for (double v : out.pixels) EXPECT_EQ(v, 0.0);
}

TEST(Reconstruct, ZeroOutsideDiskAndReal) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    double residue = 1.0;
    const Image out = fb.reconstruct(fb.decompose(random_patch(9, 4)), &residue);
    EXPECT_LT(residue, kResidueSilent);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c)
            if (!inside_disk(r, c, 9)) EXPECT_EQ(out(r, c), 0.0);
}

TEST(Reconstruct, RoundTripDriftShrinksOnFinerGrids) {
    // The pixel-sampled basis is only approximately orthonormal, so a second
    // decompose/reconstruct pass moves the coefficients by an amount that
    // vanishes as the same basis is rendered on finer grids.
    auto spec = std::make_shared<const BasisSpec>(make_basis(9, CutoffPolicy::full));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    FBCoefficients c0(*spec);
    for (const Mode& m : spec->modes) c0(m.nu, m.j) = {g(rng), m.nu == 0 ? 0.0 : g(rng)};
    double previous = std::numeric_limits<double>::infinity();
    for (int grid : {9, 17, 33, 65, 129}) {
        const FourierBessel fb(spec, grid);
        const FBCoefficients c1 = fb.decompose(fb.reconstruct(c0));
        const double drift = max_abs_difference(c1, fb.decompose(fb.reconstruct(c1)));
        EXPECT_LT(drift, previous) << grid;
        previous = drift;
    }
    EXPECT_LT(previous, 0.01 * coefficient_norm(c0));
}

TEST(Reconstruct, BrokenSymmetryIsInternalError) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    FBCoefficients c = fb.empty();
    c(0, 1) = {0.0, 1.0}; // a real patch never has an imaginary nu = 0 coefficient
    EXPECT_THROW(fb.reconstruct(c), internal_error);
}

TEST(Reconstruct, LayoutMismatchThrows) {
    const FourierBessel fb9(make_basis(9, CutoffPolicy::full));
    const FourierBessel fb7(make_basis(7, CutoffPolicy::full));
    EXPECT_THROW(fb9.reconstruct(fb7.empty()), validation_error);
}

TEST(Reconstruct, DigitAtFilterSize29) {
    const auto ds = data::load_idx(std::string(BCNN_DATA_DIR) + "/images-idx3-ubyte.gz",
                                   std::string(BCNN_DATA_DIR) + "/labels-idx1-ubyte.gz");
    const FourierBessel fb(make_basis(29, CutoffPolicy::full));
    for (std::size_t i = 0; i < 5; ++i) {
        const Image digit = pad_or_crop_center(ds.image(i), 29);
        const Image back = fb.reconstruct(fb.decompose(digit));
        EXPECT_LT(relative_l2_on_disk(digit, back), 0.25) << i;
    }
}

TEST(Rotate, IdentityAndMagnitudes) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const FBCoefficients phi = fb.decompose(random_patch(9, 6));
    EXPECT_EQ(rotate_coeffs(phi, 0.0), phi);
    const FBCoefficients r = rotate_coeffs(phi, 1.234);
    for (std::size_t i = 0; i < phi.values.size(); ++i) EXPECT_NEAR(std::abs(r.values[i]), std::abs(phi.values[i]), 1e-14);
}

TEST(Rotate, QuarterTurnPhase) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const FBCoefficients phi = fb.decompose(random_patch(9, 7));
    const FBCoefficients r = rotate_coeffs(phi, std::numbers::pi / 2);
    for (int nu = 0; nu < phi.nu_rows; ++nu)
        for (int j = 0; j < phi.j_cols; ++j)
            EXPECT_LT(std::abs(r(nu, j) - phi(nu, j) * std::polar(1.0, -nu * std::numbers::pi / 2)), 1e-14);
}

TEST(Rotate, QuarterTurnMatchesPixelRotation) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const Image img = disk_only(random_patch(9, 8));
    const FBCoefficients phi = fb.decompose(img);
    const Image recon = fb.reconstruct(phi);
    const double base = relative_l2_on_disk(img, recon);
    const Image turned = fb.reconstruct(rotate_coeffs(phi, std::numbers::pi / 2));
    EXPECT_LT(relative_l2_on_disk(rot90(img), turned), base + 1e-6);
    // Exact on the grid: rotating coefficients equals decomposing the rotated pixels.
    EXPECT_LT(max_abs_difference(rotate_coeffs(phi, std::numbers::pi / 2), fb.decompose(rot90(img))), 1e-12);
}

TEST(Rotate, Composition) {
    const FourierBessel fb(make_basis(11, CutoffPolicy::full));
    const FBCoefficients phi = fb.decompose(random_patch(11, 10));
    EXPECT_LT(max_abs_difference(rotate_coeffs(rotate_coeffs(phi, 0.4), 1.1), rotate_coeffs(phi, 1.5)), 1e-12);
}

TEST(Reflect, Involution) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const FBCoefficients phi = fb.decompose(random_patch(9, 11));
    EXPECT_EQ(reflect_coeffs(reflect_coeffs(phi)), phi);
}

TEST(Reflect, NuZeroRow) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    FBCoefficients phi = fb.empty();
    phi(0, 1) = {0.3, -0.2};
    phi(1, 0) = {0.5, 0.25};
    const FBCoefficients r = reflect_coeffs(phi);
    EXPECT_EQ(r(0, 1), cplx(0.3, 0.2));
    EXPECT_EQ(r(1, 0), cplx(-0.5, 0.25));
}

TEST(Reflect, MatchesPixelMirror) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const Image img = disk_only(random_patch(9, 12));
    const FBCoefficients phi = fb.decompose(img);
    const double base = relative_l2_on_disk(img, fb.reconstruct(phi));
    EXPECT_LT(relative_l2_on_disk(mirror_vertical(img), fb.reconstruct(reflect_coeffs(phi))), base + 1e-6);
    EXPECT_LT(max_abs_difference(reflect_coeffs(phi), fb.decompose(mirror_vertical(img))), 1e-12);
}

TEST(Reflect, GroupLawWithRotation) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const FBCoefficients phi = fb.decompose(random_patch(9, 13));
    for (double a : {0.3, 1.0, 2.9}) {
        EXPECT_LT(max_abs_difference(reflect_coeffs(rotate_coeffs(phi, a)), rotate_coeffs(reflect_coeffs(phi), -a)), 1e-12);
    }
}

TEST(ConjugateSymmetry, RandomRealPatches) {
    for (int size : {5, 9, 13}) {
        const FourierBessel fb(make_basis(size, CutoffPolicy::full));
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            EXPECT_LT(conjugate_symmetry_report(fb, random_patch(size, seed)), 1e-10);
        }
    }
}

TEST(ConjugateSymmetry, ZeroPatch) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    EXPECT_EQ(conjugate_symmetry_report(fb, Image(9, 9)), 0.0);
}

TEST(ConjugateSymmetry, ReportsInjectedPerturbation) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::full));
    const Image p = random_patch(9, 14);
    FBCoefficients pos = fb.decompose(p);
    const FBCoefficients neg = negative_order_coefficients(fb, p);
    const double base = conjugate_symmetry_report(pos, neg);
    pos(2, 1) += cplx(0.0, 3e-3);
    EXPECT_NEAR(conjugate_symmetry_report(pos, neg), 3e-3, base + 1e-12);
}

TEST(CoefficientsJson, RoundTrip) {
    const BasisSpec spec = make_basis(9, CutoffPolicy::half);
    const FourierBessel fb(spec);
    const FBCoefficients phi = fb.decompose(random_patch(9, 15));
    EXPECT_EQ(coeffs_from_json(coeffs_to_json(phi), spec), phi);
}

TEST(CoefficientsJson, RejectsForeignBasis) {
    const FourierBessel fb(make_basis(9, CutoffPolicy::half));
    const auto j = coeffs_to_json(fb.decompose(random_patch(9, 16)));
    EXPECT_THROW(coeffs_from_json(j, make_basis(9, CutoffPolicy::full)), validation_error);
    EXPECT_THROW(coeffs_from_json(nlohmann::json{{"coefficients", 3}}, make_basis(9, CutoffPolicy::half)), validation_error);
}
