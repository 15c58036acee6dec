#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "bcnn/bconv.hpp"
#include "bcnn/certify.hpp"

using namespace bcnn;

namespace {

Image random_patch(int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image p(size, size);
    for (auto& v : p.pixels) v = u(rng);
    return p;
}

Tensor4<double> as_tensor(const Image& p) {
    Tensor4<double> t(1, p.height, p.width, 1);
    std::copy(p.pixels.begin(), p.pixels.end(), t.data.begin());
    return t;
}

BConvLayer one_filter(int size, Group g, const FBCoefficients& kappa, CutoffPolicy policy = CutoffPolicy::full) {
    BConvLayer layer = init_layer(1, 1, {size}, g, policy, 0, 1, Padding::valid);
    layer.bank.set_slice(0, 0, kappa);
    return layer;
}

// Independent direct-space evaluation of the SO2 window activation: build
// F_nu = sum_j T conj(kappa) from the tensor and correlate it with the patch.
double direct_space_so2(const TransformTensor& t, const Image& patch, const FBCoefficients& kappa) {
    const BasisSpec& s = t.spec();
    double a = 0.0;
    for (int nu = 0; nu <= s.nu_max; ++nu) {
        cplx z{};
        for (std::size_t p = 0; p < t.pixel_count(); ++p) {
            cplx f{};
            for (int j = 0; j < s.modes_for(nu); ++j) f += t.at(nu, static_cast<int>(p), j) * std::conj(kappa(nu, j));
            z += f * patch.pixels[p];
        }
        a += std::norm(z * t.pixel_area());
    }
    return a;
}

} // namespace

TEST(InitLayer, SeededDeterminism) {
    const BConvLayer a = init_layer(1, 1, {9}, Group::so2, CutoffPolicy::full, 7);
    const BConvLayer b = init_layer(1, 1, {9}, Group::so2, CutoffPolicy::full, 7);
    EXPECT_EQ(a.bank.re.value, b.bank.re.value);
    EXPECT_EQ(a.bank.im.value, b.bank.im.value);
    const BConvLayer c = init_layer(1, 1, {9}, Group::so2, CutoffPolicy::full, 8);
    EXPECT_NE(a.bank.re.value, c.bank.re.value);
}

TEST(InitLayer, MaskedEntriesAreZero) {
    const BConvLayer layer = init_layer(3, 4, {9}, Group::o2, CutoffPolicy::half, 1);
    const BasisSpec& s = layer.spec();
    for (int nu = 0; nu < layer.bank.nu_rows; ++nu) {
        for (int j = 0; j < layer.bank.j_cols; ++j) {
            for (int ci = 0; ci < 3; ++ci) {
                for (int co = 0; co < 4; ++co) {
                    if (!s.admitted(nu, j)) EXPECT_EQ(layer.bank.kappa(nu, j, ci, co), cplx{});
                }
            }
        }
    }
    EXPECT_TRUE(layer.bank.mask_respected());
}

TEST(InitLayer, ModeCountMatchesBasis) {
    const BConvLayer layer = init_layer(2, 5, {9}, Group::so2, CutoffPolicy::full, 3);
    EXPECT_EQ(layer.spec().size(), make_basis(9, CutoffPolicy::full).size());
    EXPECT_EQ(layer.bank.trainable_count(), 2u * 32u * 10u);
}

TEST(InitLayer, Scale) {
    const BConvLayer layer = init_layer(8, 16, {7}, Group::so2, CutoffPolicy::full, 4);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < layer.bank.re.size(); ++i) {
        if (!layer.bank.re.trainable(i)) continue;
        sum += layer.bank.re.value[i] * layer.bank.re.value[i] + layer.bank.im.value[i] * layer.bank.im.value[i];
        n += 2;
    }
    const double expected = 1.0 / (2.0 * 20 * 8);
    EXPECT_NEAR(sum / n, expected, 0.1 * expected);
}

TEST(InitLayer, Errors) {
    EXPECT_THROW(init_layer(1, 1, {}, Group::so2, CutoffPolicy::full, 0), validation_error);
    EXPECT_THROW(init_layer(1, 1, {8}, Group::so2, CutoffPolicy::full, 0), validation_error);
    EXPECT_THROW(init_layer(0, 1, {9}, Group::so2, CutoffPolicy::full, 0), validation_error);
    EXPECT_THROW(init_layer(1, 1, {9}, Group::so2, CutoffPolicy::full, 0, 0), validation_error);
}

TEST(ProjectFilters, OneHotKappa) {
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    FBCoefficients k(spec);
    const cplx v{0.6, -0.8};
    k(0, 0) = v;
    const BConvLayer layer = one_filter(9, Group::so2, k);
    const auto f = project_filters(layer).at(0);
    const TransformTensor& t = layer.transforms[0];
    for (int p = 0; p < 81; ++p) {
        EXPECT_LT(std::abs(f(p, 0, 0, 0) - t.at(0, p, 0) * std::conj(v)), 1e-15);
        for (int nu = 1; nu < f.nu_rows; ++nu) EXPECT_EQ(f(p, nu, 0, 0), cplx{});
    }
}

TEST(ProjectFilters, ZeroKappa) {
    BConvLayer layer = init_layer(2, 3, {7, 9}, Group::so2, CutoffPolicy::full, 0);
    std::fill(layer.bank.re.value.begin(), layer.bank.re.value.end(), 0.0);
    std::fill(layer.bank.im.value.begin(), layer.bank.im.value.end(), 0.0);
    for (const auto& f : project_filters(layer))
        for (auto v : f.values) EXPECT_EQ(v, cplx{});
}

TEST(ProjectFilters, ShapesAndDiskSupport) {
    const BConvLayer layer = init_layer(2, 3, {7, 11}, Group::so2, CutoffPolicy::full, 5);
    const auto fs = project_filters(layer);
    ASSERT_EQ(fs.size(), 2u);
    EXPECT_EQ(fs[1].size, 11);
    EXPECT_EQ(fs[1].values.size(), 121u * static_cast<std::size_t>(fs[1].nu_rows) * 6u);
    for (const auto& f : fs) {
        for (int r = 0; r < f.size; ++r)
            for (int c = 0; c < f.size; ++c)
                if (!inside_disk(r, c, f.size))
                    for (int nu = 0; nu < f.nu_rows; ++nu) EXPECT_EQ(f(r * f.size + c, nu, 1, 2), cplx{});
    }
}

TEST(ProjectFilters, DecomposeRecoversKappa) {
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const BConvLayer layer = init_layer(1, 1, {9}, Group::so2, CutoffPolicy::full, 9);
    const auto f = project_filters(layer).at(0);
    const TransformTensor& t = layer.transforms[0];
    const Eigen::MatrixXcd gram = basis_gram(spec, 1);
    const FBCoefficients kappa = layer.bank.slice(0, 0);
    // <b_{nu,j'}, F_nu> = sum_j G[j', j] conj(kappa_j): exact identity, and close
    // to conj(kappa_{j'}) up to the Gram deviation.
    for (std::size_t m = 0; m < spec.size(); ++m) {
        const Mode& mode = spec.modes[m];
        cplx recovered{};
        for (int p = 0; p < 81; ++p) recovered += std::conj(t(m, static_cast<std::size_t>(p))) * f(p, mode.nu, 0, 0);
        recovered *= t.pixel_area();
        cplx via_gram{};
        for (std::size_t q = 0; q < spec.size(); ++q) {
            if (spec.modes[q].nu != mode.nu) continue;
            via_gram += gram(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q)) *
                        std::conj(kappa(spec.modes[q].nu, spec.modes[q].j));
        }
        EXPECT_LT(std::abs(recovered - via_gram), 1e-12);
        EXPECT_LT(std::abs(recovered - std::conj(kappa(mode.nu, mode.j))),
                  gram_deviation(gram) * coefficient_norm(kappa) * std::sqrt(static_cast<double>(spec.size())));
    }
}

TEST(ForwardSo2, ZeroInput) {
    const BConvLayer layer = init_layer(2, 3, {7}, Group::so2, CutoffPolicy::full, 1);
    const auto out = forward_so2(Tensor4<double>(2, 10, 10, 2), layer);
    EXPECT_EQ(out.shape(), (std::array<int, 4>{2, 10, 10, 3}));
    for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(ForwardSo2, MatchesOraclesOnSinglePatch) {
    std::mt19937_64 rng(21);
    for (int size : {5, 9, 13}) {
        const BasisSpec spec = make_basis(size, CutoffPolicy::full);
        const FourierBessel fb(spec);
        const BConvLayer layer = init_layer(1, 1, {size}, Group::so2, CutoffPolicy::full, 2, 1, Padding::valid);
        const FBCoefficients kappa = layer.bank.slice(0, 0);
        const Image p = random_patch(size, rng);
        const double fast = forward_so2(as_tensor(p), layer).data.at(0);
        EXPECT_NEAR(fast, reference_activation_direct(fb, p, kappa, Group::so2), 1e-10);
        EXPECT_NEAR(fast, direct_space_so2(fb.tensor(), p, kappa), 1e-10);
        EXPECT_NEAR(fast, reference_activation_integral(fb, p, kappa, 2 * spec.nu_max + 1).value, 1e-9);
    }
}

TEST(ForwardSo2, Nonnegative) {
    std::mt19937_64 rng(1);
    const BConvLayer layer = init_layer(3, 4, {7}, Group::so2, CutoffPolicy::full, 6);
    Tensor4<double> in(2, 12, 12, 3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : in.data) v = normal(rng);
    for (double v : forward_so2(in, layer).data) EXPECT_GE(v, 0.0);
}

TEST(ForwardSo2, QuarterTurnInvariance) {
    std::mt19937_64 rng(22);
    const BConvLayer layer = init_layer(1, 4, {9}, Group::so2, CutoffPolicy::full, 3, 1, Padding::valid);
    const Image p = random_patch(9, rng);
    const auto a = forward_so2(as_tensor(p), layer);
    for (int k = 1; k < 4; ++k) {
        const auto b = forward_so2(as_tensor(rot90(p, k)), layer);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.data[i], a.data[i], 1e-8 * std::max(1.0, a.data[i]));
    }
}

TEST(ForwardSo2, ShapeAndErrors) {
    const BConvLayer same = init_layer(2, 3, {7}, Group::so2, CutoffPolicy::full, 0, 2, Padding::same);
    EXPECT_EQ(forward_so2(Tensor4<double>(1, 9, 9, 2), same).shape(), (std::array<int, 4>{1, 5, 5, 3}));
    const BConvLayer valid = init_layer(2, 3, {7}, Group::so2, CutoffPolicy::full, 0, 1, Padding::valid);
    EXPECT_EQ(forward_so2(Tensor4<double>(1, 9, 9, 2), valid).shape(), (std::array<int, 4>{1, 3, 3, 3}));
    EXPECT_THROW(forward_so2(Tensor4<double>(1, 9, 9, 1), valid), validation_error);
    const BConvLayer o2 = init_layer(2, 3, {7}, Group::o2, CutoffPolicy::full, 0);
    EXPECT_THROW(forward_so2(Tensor4<double>(1, 9, 9, 2), o2), validation_error);
    EXPECT_THROW(forward_o2(Tensor4<double>(1, 9, 9, 2), same), validation_error);
}

TEST(ForwardSo2, TranslationEquivariance) {
    std::mt19937_64 rng(4);
    const BConvLayer layer = init_layer(1, 2, {5}, Group::so2, CutoffPolicy::full, 8, 1, Padding::valid);
    Tensor4<double> in(1, 16, 16, 1);
    for (int y = 4; y < 10; ++y)
        for (int x = 3; x < 9; ++x) in(0, y, x, 0) = std::uniform_real_distribution<double>(0, 1)(rng);
    Tensor4<double> shifted(1, 16, 16, 1);
    for (int y = 0; y + 2 < 16; ++y)
        for (int x = 0; x + 3 < 16; ++x) shifted(0, y + 2, x + 3, 0) = in(0, y, x, 0);
    const auto a = forward_so2(in, layer);
    const auto b = forward_so2(shifted, layer);
    for (int y = 0; y + 2 < a.h; ++y)
        for (int x = 0; x + 3 < a.w; ++x)
            for (int c = 0; c < 2; ++c) EXPECT_NEAR(b(0, y + 2, x + 3, c), a(0, y, x, c), 1e-12);
}

TEST(ForwardO2, MirrorAndQuarterTurnInvariance) {
    std::mt19937_64 rng(23);
    const BConvLayer layer = init_layer(1, 3, {9}, Group::o2, CutoffPolicy::full, 4, 1, Padding::valid);
    for (int trial = 0; trial < 5; ++trial) {
        const Image p = random_patch(9, rng);
        const auto a = forward_o2(as_tensor(p), layer);
        const auto m = forward_o2(as_tensor(mirror_vertical(p)), layer);
        const auto r = forward_o2(as_tensor(rot90(p)), layer);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_NEAR(m.data[i], a.data[i], 1e-8 * std::max(1.0, a.data[i]));
            EXPECT_NEAR(r.data[i], a.data[i], 1e-8 * std::max(1.0, a.data[i]));
        }
    }
}

TEST(ForwardO2, MatchesCoefficientOracle) {
    std::mt19937_64 rng(24);
    const FourierBessel fb(make_basis(7, CutoffPolicy::half));
    const BConvLayer layer = init_layer(1, 1, {7}, Group::o2, CutoffPolicy::half, 5, 1, Padding::valid);
    const Image p = random_patch(7, rng);
    EXPECT_NEAR(forward_o2(as_tensor(p), layer).data[0],
                reference_activation_direct(fb, p, layer.bank.slice(0, 0), Group::o2), 1e-10);
    EXPECT_NEAR(forward_o2(as_tensor(p), layer).data[0],
                reference_activation_integral(fb, p, layer.bank.slice(0, 0), 2 * fb.spec().nu_max + 1, Group::o2).value,
                1e-9);
}

TEST(ForwardO2, ZeroKappa) {
    std::mt19937_64 rng(25);
    BConvLayer layer = init_layer(1, 2, {7}, Group::o2, CutoffPolicy::full, 5);
    std::fill(layer.bank.re.value.begin(), layer.bank.re.value.end(), 0.0);
    std::fill(layer.bank.im.value.begin(), layer.bank.im.value.end(), 0.0);
    for (double v : forward_o2(as_tensor(random_patch(11, rng)), layer).data) EXPECT_EQ(v, 0.0);
}

TEST(ForwardO2, So2IsNotMirrorInvariant) {
    std::mt19937_64 rng(26);
    const BConvLayer layer = init_layer(1, 1, {9}, Group::so2, CutoffPolicy::full, 4, 1, Padding::valid);
    const Image p = random_patch(9, rng);
    const double a = forward_so2(as_tensor(p), layer).data[0];
    const double m = forward_so2(as_tensor(mirror_vertical(p)), layer).data[0];
    EXPECT_GT(std::abs(a - m), 1e-6 * a);
}

TEST(Multiscale, SingleScaleReducesToPlainForward) {
    std::mt19937_64 rng(27);
    const BConvLayer layer = init_layer(1, 2, {9}, Group::so2, CutoffPolicy::full, 4);
    const auto in = as_tensor(random_patch(15, rng));
    EXPECT_EQ(forward_multiscale(in, layer), forward_so2(in, layer));
}

TEST(Multiscale, MaximumOverScales) {
    std::mt19937_64 rng(28);
    const BConvLayer layer = init_layer(1, 2, {7, 9, 11}, Group::o2, CutoffPolicy::full, 4);
    const auto in = as_tensor(random_patch(15, rng));
    std::vector<Tensor4<double>> per_scale;
    const auto out = forward_multiscale(in, layer, &per_scale);
    ASSERT_EQ(per_scale.size(), 3u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double best = 0.0;
        for (const auto& s : per_scale) {
            EXPECT_GE(out.data[i], s.data[i]);
            best = std::max(best, s.data[i]);
        }
        EXPECT_EQ(out.data[i], best);
    }
}

TEST(Multiscale, MatchedPatternPicksItsScale) {
    const BasisSpec spec = make_basis(7, CutoffPolicy::full);
    BConvLayer layer = init_layer(1, 1, {7, 9, 11}, Group::so2, CutoffPolicy::full, 12);
    // Render the filter's own coefficients as an image on the 11 grid; an image
    // has a real zero-order row, so the filter is made to match.
    FBCoefficients k = layer.bank.slice(0, 0);
    for (int j = 0; j < k.j_cols; ++j)
        if (k.admitted(0, j)) k(0, j) = k(0, j).real();
    layer.bank.set_slice(0, 0, k);
    const FourierBessel fb11(std::make_shared<const BasisSpec>(spec), 11);
    const Image pattern = fb11.reconstruct(k);
    const Image input = pad_or_crop_center(pattern, 21);
    std::vector<Tensor4<double>> per_scale;
    forward_multiscale(as_tensor(input), layer, &per_scale);
    int arg = 0;
    for (int s = 1; s < 3; ++s)
        if (per_scale[static_cast<std::size_t>(s)](0, 10, 10, 0) > per_scale[static_cast<std::size_t>(arg)](0, 10, 10, 0)) arg = s;
    EXPECT_EQ(layer.filter_size(static_cast<std::size_t>(arg)), 11);
}

TEST(Multiscale, StrideAppliedAfterMaximum) {
    std::mt19937_64 rng(29);
    BConvLayer strided = init_layer(1, 2, {5, 7}, Group::so2, CutoffPolicy::full, 4, 2, Padding::same);
    BConvLayer unit = init_layer(1, 2, {5, 7}, Group::so2, CutoffPolicy::full, 4, 1, Padding::same);
    const auto in = as_tensor(random_patch(11, rng));
    const auto a = forward_multiscale(in, strided);
    const auto b = forward_multiscale(in, unit);
    EXPECT_EQ(a.shape(), (std::array<int, 4>{1, 6, 6, 2}));
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) EXPECT_EQ(a(0, y, x, 1), b(0, 2 * y, 2 * x, 1));
}

TEST(ReferenceActivation, OneHotAndZeroPatch) {
    std::mt19937_64 rng(30);
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const Image p = random_patch(9, rng);
    const FBCoefficients phi = fb.decompose(p);
    FBCoefficients k(spec);
    k(2, 1) = {1.0, 0.0};
    EXPECT_NEAR(reference_activation_direct(fb, p, k, Group::so2), std::norm(phi(2, 1)), 1e-15);
    EXPECT_EQ(reference_activation_direct(fb, Image(9, 9), random_kappa(spec, rng), Group::so2), 0.0);
}

TEST(ReferenceActivation, IntegralNeedsEnoughAngles) {
    std::mt19937_64 rng(31);
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const Image p = random_patch(9, rng);
    const FBCoefficients k = random_kappa(spec, rng);
    const double direct = reference_activation_direct(fb, p, k, Group::so2);
    const auto exact = reference_activation_integral(fb, p, k, 2 * spec.nu_max + 1);
    EXPECT_FALSE(exact.below_exactness_bound);
    EXPECT_NEAR(exact.value, direct, 1e-9);
    const auto coarse = reference_activation_integral(fb, p, k, 1);
    EXPECT_TRUE(coarse.below_exactness_bound);
    EXPECT_GT(std::abs(coarse.value - direct), 1e-6);
    EXPECT_THROW(reference_activation_integral(fb, p, k, 0), validation_error);
}

TEST(ReferenceActivation, NuZeroOnlyKappaIgnoresAngleCount) {
    std::mt19937_64 rng(32);
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const Image p = random_patch(9, rng);
    FBCoefficients k(spec);
    for (int j = 0; j < spec.modes_for(0); ++j) k(0, j) = {std::normal_distribution<double>()(rng), 0.3};
    const FBCoefficients phi = fb.decompose(p);
    cplx s{};
    for (int j = 0; j < spec.modes_for(0); ++j) s += phi(0, j) * std::conj(k(0, j));
    for (int n : {1, 2, 5, 40}) EXPECT_NEAR(reference_activation_integral(fb, p, k, n).value, std::norm(s), 1e-12);
}

TEST(ReflectionDiscrepancy, AnalyticMatchesEmpirical) {
    std::mt19937_64 rng(33);
    bool nonzero_seen = false;
    for (int trial = 0; trial < 20; ++trial) {
        const BasisSpec spec = make_basis(trial % 2 ? 9 : 7, CutoffPolicy::full);
        const FourierBessel fb(spec);
        const Image p = random_patch(spec.filter_size, rng);
        const auto d = reflection_discrepancy(fb, p, random_kappa(spec, rng));
        EXPECT_NEAR(d.analytic, d.empirical, 1e-9);
        nonzero_seen = nonzero_seen || std::abs(d.empirical) > 1e-6;
    }
    EXPECT_TRUE(nonzero_seen);
}

TEST(ReflectionDiscrepancy, VanishesForRealOrImaginaryKappa) {
    std::mt19937_64 rng(34);
    const BasisSpec spec = make_basis(9, CutoffPolicy::full);
    const FourierBessel fb(spec);
    const Image p = random_patch(9, rng);
    FBCoefficients real_k = random_kappa(spec, rng, true);
    EXPECT_LT(std::abs(reflection_discrepancy(fb, p, real_k).analytic), 1e-12);
    EXPECT_LT(std::abs(reflection_discrepancy(fb, p, real_k).empirical), 1e-12);
    FBCoefficients imag_k = real_k;
    for (auto& v : imag_k.values) v = {0.0, v.real()};
    EXPECT_LT(std::abs(reflection_discrepancy(fb, p, imag_k).analytic), 1e-12);
    EXPECT_LT(std::abs(reflection_discrepancy(fb, p, imag_k).empirical), 1e-12);
}

TEST(Certify, AllChecksPass) {
    const CertifyResult r = certify(5, 20);
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(r.checks.size(), 9u);
    for (const auto& [name, c] : r.checks) EXPECT_GT(c.cases, 0) << name;
}

TEST(Certify, CatchesBrokenReflection) {
    const CertifyResult r = certify(5, 10, [](const FBCoefficients& c) {
        FBCoefficients out = c;
        for (auto& v : out.values) v = std::conj(v); // forgets the (-1)^nu sign
        return out;
    });
    EXPECT_FALSE(r.passed());
    EXPECT_GT(r.checks.at("reflect_path").failures, 0);
}

TEST(Injectivity, NoCollisionsAndRotationControl) {
    const InjectivityReport r = injectivity_probe(3, 40, 32, 9);
    EXPECT_EQ(r.pairs, 40);
    EXPECT_EQ(r.collisions, 0);
    EXPECT_GT(r.min_separation, 1e-6);
    EXPECT_LT(r.control_max_separation, 1e-8);
}
