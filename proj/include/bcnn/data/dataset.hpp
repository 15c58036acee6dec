#pragma once

// Labeled image sets, stratified subsampling, rotation augmentation and the
// regenerated MNIST variants.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcnn/data/idx.hpp"
#include "bcnn/image.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn::data {

struct LabeledDataset {
    Tensor4<double> images; ///< (n, h, w, 1), pixels in [0, 1]
    std::vector<int> labels;
    int class_count = 10;

    int size() const noexcept { return static_cast<int>(labels.size()); }
    int height() const noexcept { return images.h; }
    int width() const noexcept { return images.w; }

    Image image(int i) const {
        Image img(images.h, images.w);
        std::copy(images.image(i), images.image(i) + img.size(), img.pixels.begin());
        return img;
    }

    void set_image(int i, const Image& img) {
        if (img.height != images.h || img.width != images.w) throw validation_error("image size mismatch");
        std::copy(img.pixels.begin(), img.pixels.end(), images.image(i));
    }

    std::vector<int> class_histogram() const {
        std::vector<int> h(static_cast<std::size_t>(class_count), 0);
        for (int y : labels) ++h[static_cast<std::size_t>(y)];
        return h;
    }

    LabeledDataset subset(const std::vector<int>& indices) const {
        LabeledDataset out;
        out.class_count = class_count;
        out.images = Tensor4<double>(static_cast<int>(indices.size()), images.h, images.w, images.c);
        const std::size_t per = static_cast<std::size_t>(images.h) * images.w * images.c;
        for (std::size_t k = 0; k < indices.size(); ++k) {
            const int i = indices[k];
            if (i < 0 || i >= size()) throw validation_error("subset index out of range");
            std::copy(images.image(i), images.image(i) + per, out.images.image(static_cast<int>(k)));
            out.labels.push_back(labels[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    void validate() const {
        if (images.n != size()) throw validation_error("image and label counts differ");
        for (int y : labels) {
            if (y < 0 || y >= class_count) throw validation_error("label outside [0, class_count)");
        }
    }
};

/// Reads an IDX image/label pair (plain or gzip); pixels scaled to [0, 1].
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const IdxImages imgs = parse_idx_images(maybe_gunzip(io::read_file(images_path)));
    const std::vector<std::uint8_t> labels = parse_idx_labels(maybe_gunzip(io::read_file(labels_path)));
    if (static_cast<int>(labels.size()) != imgs.count) {
        throw format_error("label file holds " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(imgs.count) + " images",
                           4);
    }
    LabeledDataset ds;
    ds.images = Tensor4<double>(imgs.count, imgs.rows, imgs.cols, 1);
    for (std::size_t i = 0; i < imgs.pixels.size(); ++i) ds.images.data[i] = imgs.pixels[i] / 255.0;
    int max_label = 0;
    for (auto y : labels) {
        ds.labels.push_back(y);
        max_label = std::max<int>(max_label, y);
    }
    ds.class_count = std::max(10, max_label + 1);
    return ds;
}

/// Picks `count` items keeping each class's share (largest-remainder rounding,
/// so every class is within one sample of its exact proportion). The result
/// keeps the original order.
inline std::vector<int> stratified_indices(const LabeledDataset& ds, int count, std::uint64_t seed) {
    const int n = ds.size();
    if (count > n) throw validation_error("cannot draw " + std::to_string(count) + " of " + std::to_string(n));
    if (count < ds.class_count) throw validation_error("subsample smaller than the number of classes");
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.class_count));
    for (int i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

    std::vector<int> quota(by_class.size());
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const double exact = static_cast<double>(count) * by_class[c].size() / n;
        quota[c] = static_cast<int>(std::floor(exact));
        assigned += quota[c];
        remainders.push_back({exact - quota[c], static_cast<int>(c)});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; assigned < count; ++k, ++assigned) ++quota[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k)].second)];

    std::mt19937_64 rng(seed);
    std::vector<int> picked;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<int> pool = by_class[c];
        std::shuffle(pool.begin(), pool.end(), rng);
        picked.insert(picked.end(), pool.begin(), pool.begin() + quota[c]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

inline LabeledDataset stratified_subsample(const LabeledDataset& ds, int count, std::uint64_t seed) {
    return ds.subset(stratified_indices(ds, count, seed));
}

/// Indices not in `taken` (sorted input).
inline std::vector<int> complement_indices(int n, const std::vector<int>& taken) {
    std::vector<int> out;
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        if (k < taken.size() && taken[k] == i) {
            ++k;
        } else {
            out.push_back(i);
        }
    }
    return out;
}

/// Counter-clockwise rotation about the image center by inverse-mapped
/// bilinear interpolation. Multiples of pi/2 use exact pixel permutations.
inline Image rotate_image(const Image& in, double alpha, double fill = 0.0) {
    if (!in.square()) throw validation_error("rotate_image needs a square image");
    const double quarter = alpha / (std::numbers::pi / 2);
    const double nearest = std::round(quarter);
    if (std::abs(quarter - nearest) < 1e-12) {
        return rot90(in, static_cast<int>(static_cast<long long>(nearest) % 4));
    }
    const int n = in.width;
    const double center = 0.5 * (n - 1);
    const double c = std::cos(alpha);
    const double s = std::sin(alpha);
    Image out(n, n, fill);
    for (int r = 0; r < n; ++r) {
        for (int col = 0; col < n; ++col) {
            const double x = col - center;
            const double y = center - r;
            const double xs = c * x + s * y;
            const double ys = -s * x + c * y;
            const double fc = center + xs;
            const double fr = center - ys;
            const int c0 = static_cast<int>(std::floor(fc));
            const int r0 = static_cast<int>(std::floor(fr));
            const double tc = fc - c0;
            const double tr = fr - r0;
            auto at = [&](int rr, int cc) { return rr >= 0 && rr < n && cc >= 0 && cc < n ? in(rr, cc) : fill; };
            if (r0 < -1 || r0 >= n || c0 < -1 || c0 >= n) continue;
            out(r, col) = (1 - tr) * ((1 - tc) * at(r0, c0) + tc * at(r0, c0 + 1)) +
                          tr * ((1 - tc) * at(r0 + 1, c0) + tc * at(r0 + 1, c0 + 1));
        }
    }
    return out;
}

/// Resamples to size x size treating pixels as samples of a bilinear surface;
/// each output pixel averages that surface over its footprint.
inline Image resize_image(const Image& in, int size) {
    if (size < 1) throw validation_error("resize target must be positive");
    Image out(size, size);
    const double sy = static_cast<double>(in.height) / size;
    const double sx = static_cast<double>(in.width) / size;
    const int sub = std::max(2, 2 * static_cast<int>(std::ceil(std::max(sx, sy))));
    auto sample = [&](double fr, double fc) {
        fr = std::clamp(fr, 0.0, in.height - 1.0);
        fc = std::clamp(fc, 0.0, in.width - 1.0);
        const int r0 = std::min(static_cast<int>(fr), in.height - 1);
        const int c0 = std::min(static_cast<int>(fc), in.width - 1);
        const int r1 = std::min(r0 + 1, in.height - 1);
        const int c1 = std::min(c0 + 1, in.width - 1);
        const double tr = fr - r0;
        const double tc = fc - c0;
        return (1 - tr) * ((1 - tc) * in(r0, c0) + tc * in(r0, c1)) + tr * ((1 - tc) * in(r1, c0) + tc * in(r1, c1));
    };
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            double acc = 0.0;
            for (int a = 0; a < sub; ++a) {
                for (int b = 0; b < sub; ++b) {
                    const double fr = (r + (a + 0.5) / sub) * sy - 0.5;
                    const double fc = (c + (b + 0.5) / sub) * sx - 0.5;
                    acc += sample(fr, fc);
                }
            }
            out(r, c) = acc / (sub * sub);
        }
    }
    return out;
}

enum class AugmentPolicy : std::uint8_t { none, rotations, rotations_reflections };

inline const char* to_string(AugmentPolicy p) {
    switch (p) {
    case AugmentPolicy::none: return "none";
    case AugmentPolicy::rotations: return "online-rotations";
    default: return "online-rotations-reflections";
    }
}

inline AugmentPolicy parse_augment(const std::string& s) {
    if (s == "none") return AugmentPolicy::none;
    if (s == "online-rotations" || s == "rotations" || s == "rot") return AugmentPolicy::rotations;
    if (s == "online-rotations-reflections" || s == "rotations-reflections") return AugmentPolicy::rotations_reflections;
    throw validation_error("unknown augmentation '" + s + "' (expected none|online-rotations|online-rotations-reflections)");
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Batch {
    Tensor4<double> images;
    std::vector<int> labels;
    std::vector<int> indices;
};

/// Deterministic epoch/batch view of a dataset. Every (epoch, sample) pair
/// has its own random stream, so results do not depend on access order.
class AugmentStream {
public:
    AugmentStream(const LabeledDataset& ds, AugmentPolicy policy, std::uint64_t seed, int batch_size = 64,
                  bool shuffle = true)
        : ds_(&ds), policy_(policy), seed_(seed), batch_size_(batch_size), shuffle_(shuffle) {
        if (batch_size < 1) throw validation_error("batch size must be positive");
    }

    int batch_count() const { return (ds_->size() + batch_size_ - 1) / batch_size_; }

    std::vector<int> order(int epoch) const {
        std::vector<int> idx(static_cast<std::size_t>(ds_->size()));
        std::iota(idx.begin(), idx.end(), 0);
        if (shuffle_) {
            std::mt19937_64 rng(mix_seed(seed_, 0x51ed2700ULL + static_cast<std::uint64_t>(epoch)));
            std::shuffle(idx.begin(), idx.end(), rng);
        }
        return idx;
    }

    /// Sample `index` as seen during `epoch`.
    Image sample(int epoch, int index) const {
        Image img = ds_->image(index);
        if (policy_ == AugmentPolicy::none) return img;
        std::mt19937_64 rng(mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(epoch) + 1),
                                     static_cast<std::uint64_t>(index)));
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        const double alpha = angle(rng);
        if (policy_ == AugmentPolicy::rotations_reflections && (rng() & 1u)) img = mirror_vertical(img);
        return rotate_image(img, alpha);
    }

    Batch batch(int epoch, int b) const { return batch(epoch, b, order(epoch)); }

    Batch batch(int epoch, int b, const std::vector<int>& ord) const {
        const int start = b * batch_size_;
        const int stop = std::min(ds_->size(), start + batch_size_);
        if (start >= stop) throw validation_error("batch index out of range");
        Batch out;
        out.images = Tensor4<double>(stop - start, ds_->height(), ds_->width(), 1);
        for (int k = start; k < stop; ++k) {
            const int i = ord[static_cast<std::size_t>(k)];
            const Image img = sample(epoch, i);
            std::copy(img.pixels.begin(), img.pixels.end(), out.images.image(k - start));
            out.labels.push_back(ds_->labels[static_cast<std::size_t>(i)]);
            out.indices.push_back(i);
        }
        return out;
    }

private:
    const LabeledDataset* ds_;
    AugmentPolicy policy_;
    std::uint64_t seed_;
    int batch_size_;
    bool shuffle_;
};

/// Every image rotated by its own seeded uniform angle in [0, 2 pi).
inline LabeledDataset make_rotated(const LabeledDataset& ds, std::uint64_t seed) {
    LabeledDataset out = ds;
    for (int i = 0; i < ds.size(); ++i) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        out.set_image(i, rotate_image(ds.image(i), angle(rng)));
    }
    return out;
}

/// Procedural grayscale texture: a few octaves of smoothed value noise.
inline Image make_texture(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image tex(size, size, 0.0);
    double weight = 0.5;
    double total = 0.0;
    for (int cell = 32; cell >= 4; cell /= 2) {
        const int g = size / cell + 2;
        std::vector<double> lattice(static_cast<std::size_t>(g * g));
        for (auto& v : lattice) v = u(rng);
        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                const double fr = static_cast<double>(r) / cell;
                const double fc = static_cast<double>(c) / cell;
                const int r0 = static_cast<int>(fr);
                const int c0 = static_cast<int>(fc);
                const double tr = fr - r0;
                const double tc = fc - c0;
                auto L = [&](int rr, int cc) { return lattice[static_cast<std::size_t>(rr * g + cc)]; };
                const double v = (1 - tr) * ((1 - tc) * L(r0, c0) + tc * L(r0, c0 + 1)) +
                                 tr * ((1 - tc) * L(r0 + 1, c0) + tc * L(r0 + 1, c0 + 1));
                tex(r, c) += weight * v;
            }
        }
        total += weight;
        weight *= 0.6;
    }
    for (auto& p : tex.pixels) p /= total;
    return tex;
}

/// Composites each digit over a random crop of a generated texture (pixelwise max).
inline LabeledDataset make_background(const LabeledDataset& ds, std::uint64_t seed) {
    const Image tex = make_texture(256, mix_seed(seed, 0xbac4ULL));
    LabeledDataset out = ds;
    for (int i = 0; i < ds.size(); ++i) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        std::uniform_int_distribution<int> pr(0, tex.height - ds.height());
        std::uniform_int_distribution<int> pc(0, tex.width - ds.width());
        const int r0 = pr(rng);
        const int c0 = pc(rng);
        Image img = ds.image(i);
        for (int r = 0; r < img.height; ++r)
            for (int c = 0; c < img.width; ++c) img(r, c) = std::max(img(r, c), tex(r0 + r, c0 + c));
        out.set_image(i, img);
    }
    return out;
}

enum class Regime : std::uint8_t { high, inter, low };

inline const char* to_string(Regime r) {
    return r == Regime::high ? "high" : r == Regime::inter ? "inter" : "low";
}

inline Regime parse_regime(const std::string& s) {
    if (s == "high") return Regime::high;
    if (s == "inter" || s == "intermediate") return Regime::inter;
    if (s == "low") return Regime::low;
    throw validation_error("unknown regime '" + s + "' (expected high|inter|low)");
}

/// Training-set size for a regime: 20%, 2% and 0.2% of the 60000 MNIST images.
inline int regime_count(Regime r) { return r == Regime::high ? 12000 : r == Regime::inter ? 1200 : 120; }

struct Split {
    LabeledDataset train;
    LabeledDataset test;
    nlohmann::json manifest;
};

/// Test pool first (stratified), then the training subsample from the rest.
/// Variants: "mnist", "mnist-rot", "mnist-back", "mnist-rot-back". `rotate_test`
/// additionally rotates only the test images (upright training).
inline Split make_split(const LabeledDataset& source, const std::string& variant, Regime regime, int test_count,
                        std::uint64_t seed, bool rotate_test = false, const std::string& source_name = "") {
    const bool rot = variant == "mnist-rot" || variant == "mnist-rot-back";
    const bool back = variant == "mnist-back" || variant == "mnist-rot-back";
    if (!rot && !back && variant != "mnist") throw validation_error("unknown dataset variant '" + variant + "'");

    LabeledDataset base = source;
    if (back) base = make_background(base, mix_seed(seed, 0xb0ULL));
    if (rot) base = make_rotated(base, mix_seed(seed, 0x70ULL));

    const std::vector<int> test_idx = stratified_indices(base, std::min(test_count, base.size() / 2),
                                                         mix_seed(seed, 0x7e57ULL));
    const std::vector<int> rest = complement_indices(base.size(), test_idx);
    LabeledDataset pool = base.subset(rest);
    const int wanted = regime_count(regime);
    const int train_count = std::min(wanted, pool.size());
    Split s;
    s.train = stratified_subsample(pool, train_count, mix_seed(seed, 0x7a1ULL));
    s.test = base.subset(test_idx);
    if (rotate_test && !rot) s.test = make_rotated(s.test, mix_seed(seed, 0x7e57707ULL));

    s.manifest = {{"source", source_name},
                  {"variant", variant},
                  {"regenerated", rot || back},
                  {"rotated_test_only", rotate_test && !rot},
                  {"seed", seed},
                  {"regime", to_string(regime)},
                  {"train_count", s.train.size()},
                  {"train_count_requested", wanted},
                  {"test_count", s.test.size()},
                  {"train_histogram", s.train.class_histogram()},
                  {"test_histogram", s.test.class_histogram()}};
    return s;
}

} // namespace bcnn::data
