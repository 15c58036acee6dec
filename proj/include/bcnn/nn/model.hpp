#pragma once

// Sequential models: the generic six-conv architecture used for the MNIST
// family (Bessel or plain convolutions) and a small all-Bessel invariance net.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "bcnn/bconv.hpp"
#include "bcnn/nn/ops.hpp"

namespace bcnn::nn {

enum class Method : std::uint8_t { bcnn = 0, vanilla = 1 };

inline const char* to_string(Method m) { return m == Method::bcnn ? "bcnn" : "vanilla"; }

inline Method parse_method(const std::string& s) {
    if (s == "bcnn" || s == "b-cnn") return Method::bcnn;
    if (s == "vanilla" || s == "cnn") return Method::vanilla;
    throw validation_error("unknown method '" + s + "' (expected bcnn|vanilla)");
}

/// Everything needed to rebuild a model bit-for-bit before loading weights.
struct ModelConfig {
    std::string dataset = "mnist";
    Method method = Method::bcnn;
    double lambda = 1.0;
    Group group = Group::so2;
    CutoffPolicy cutoff = CutoffPolicy::full;
    bool multiscale = false;
    bool standardize = false;
    int input_size = 28;
    int input_channels = 1;
    int classes = 10;
    std::uint64_t seed = 0;
    std::vector<int> filter_sizes;
    std::vector<int> base_widths;
    std::vector<Padding> paddings;
    std::vector<int> pool_after; ///< conv indices followed by a 2x2 average pool
    bool head = true;            ///< global pool + dense softmax head
};

inline int scaled_width(int base, double lambda) {
    return std::max(1, static_cast<int>(std::lround(base * lambda)));
}

/// The generic architecture: conv sizes (9, 7, 7, 7, 7, 7), widths
/// (8, 16, 24, 24, 32, 40) * lambda, pools after the 2nd and 4th conv.
inline ModelConfig mnist_config(const std::string& dataset) {
    static const char* known[] = {"mnist", "mnist-rot", "mnist-back", "mnist-rot-back"};
    if (std::find(std::begin(known), std::end(known), dataset) == std::end(known)) {
        throw validation_error("unknown dataset tag '" + dataset + "'");
    }
    ModelConfig c;
    c.dataset = dataset;
    c.filter_sizes = {9, 7, 7, 7, 7, 7};
    c.base_widths = {8, 16, 24, 24, 32, 40};
    c.paddings = {Padding::same, Padding::same, Padding::same, Padding::same, Padding::same, Padding::valid};
    c.pool_after = {1, 3};
    return c;
}

struct BConvBlock {
    BConvLayer layer;
};

struct PlainConv {
    int size = 0;
    int c_in = 0;
    int c_out = 0;
    Padding padding = Padding::same;
    Parameter w; ///< (size * size * c_in) x c_out, rows ordered (row, col, channel)
    Parameter b;
};

struct AvgPool2 {};
struct GlobalAvgPool {};

struct DenseLayer {
    int in = 0;
    int out = 0;
    Parameter w; ///< in x out
    Parameter b;
};

enum class ActivationKind : std::uint8_t { relu, softsign };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
};

struct Standardize {
    RunningStats stats;
};

using Layer = std::variant<BConvBlock, PlainConv, AvgPool2, GlobalAvgPool, DenseLayer, Activation, Standardize>;

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::vector<int> scales_for(int size, bool multiscale, Padding padding) {
    if (!multiscale || padding != Padding::same) return {size};
    return {size, size + 2, size + 4};
}

} // namespace detail

class Model {
public:
    Model() = default;

    explicit Model(ModelConfig config) : config_(std::move(config)) { build(); }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Records the forward pass; returns the logits node (or the last map when
    /// the config has no head).
    template <typename T>
    int forward(Graph<T>& g, int x, bool training = false) {
        for (auto& layer : layers_) {
            x = std::visit(
                [&](auto& l) -> int {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<L, BConvBlock>) {
                        return bconv(g, x, l.layer);
                    } else if constexpr (std::is_same_v<L, PlainConv>) {
                        const int w = weight(g, l.w, l.size * l.size * l.c_in, l.c_out);
                        const int z = conv(g, x, w, l.size, 1, padding_for(l.padding, l.size));
                        return bias(g, z, l.b);
                    } else if constexpr (std::is_same_v<L, AvgPool2>) {
                        return avg_pool2(g, x);
                    } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
                        return global_avg_pool(g, x);
                    } else if constexpr (std::is_same_v<L, DenseLayer>) {
                        return dense(g, x, l.w, l.b, l.in, l.out);
                    } else if constexpr (std::is_same_v<L, Activation>) {
                        return l.kind == ActivationKind::relu ? relu(g, x) : softsign(g, x);
                    } else {
                        return standardize(g, x, l.stats, training);
                    }
                },
                layer);
        }
        return x;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps;
        for (auto& layer : layers_) {
            std::visit(
                [&](auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<L, BConvBlock>) {
                        ps.push_back(&l.layer.bank.re);
                        ps.push_back(&l.layer.bank.im);
                    } else if constexpr (std::is_same_v<L, PlainConv> || std::is_same_v<L, DenseLayer>) {
                        ps.push_back(&l.w);
                        ps.push_back(&l.b);
                    }
                },
                layer);
        }
        return ps;
    }

    /// Number of trainable scalars (masked Bessel coefficients excluded).
    std::size_t parameter_count() {
        std::size_t n = 0;
        for (Parameter* p : parameters()) n += p->trainable_count();
        return n;
    }

    void zero_grad() {
        for (Parameter* p : parameters()) p->zero_grad();
    }

    /// One line per layer, used to validate checkpoints.
    std::vector<std::string> manifest() const {
        std::vector<std::string> out;
        for (const auto& layer : layers_) {
            out.push_back(std::visit(
                [](const auto& l) -> std::string {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<L, BConvBlock>) {
                        std::string s = "bconv " + std::string(to_string(l.layer.group)) + " " +
                                        std::to_string(l.layer.c_in) + "->" + std::to_string(l.layer.c_out) +
                                        " modes=" + std::to_string(l.layer.spec().size()) + " sizes=";
                        for (std::size_t i = 0; i < l.layer.scale_count(); ++i) {
                            s += (i ? "," : "") + std::to_string(l.layer.filter_size(i));
                        }
                        return s + " " + to_string(l.layer.padding);
                    } else if constexpr (std::is_same_v<L, PlainConv>) {
                        return "conv " + std::to_string(l.size) + " " + std::to_string(l.c_in) + "->" +
                               std::to_string(l.c_out) + " " + to_string(l.padding);
                    } else if constexpr (std::is_same_v<L, AvgPool2>) {
                        return "avgpool2";
                    } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
                        return "gap";
                    } else if constexpr (std::is_same_v<L, DenseLayer>) {
                        return "dense " + std::to_string(l.in) + "->" + std::to_string(l.out);
                    } else if constexpr (std::is_same_v<L, Activation>) {
                        return l.kind == ActivationKind::relu ? "relu" : "softsign";
                    } else {
                        return "standardize";
                    }
                },
                layer));
        }
        return out;
    }

    /// Spatial size of the map entering the head.
    int final_map_size() const { return final_size_; }

    std::vector<Standardize*> standardize_layers() {
        std::vector<Standardize*> out;
        for (auto& layer : layers_) {
            if (auto* s = std::get_if<Standardize>(&layer)) out.push_back(s);
        }
        return out;
    }

private:
    void build() {
        const ModelConfig& c = config_;
        const std::size_t depth = c.filter_sizes.size();
        if (depth == 0 || c.base_widths.size() != depth || c.paddings.size() != depth) {
            throw validation_error("model config needs matching filter sizes, widths and paddings");
        }
        if (!(c.lambda > 0.0)) throw validation_error("lambda must be positive");
        int channels = c.input_channels;
        int spatial = c.input_size;
        for (std::size_t i = 0; i < depth; ++i) {
            const int size = c.filter_sizes[i];
            const int width = scaled_width(c.base_widths[i], c.lambda);
            const std::uint64_t seed = detail::splitmix(c.seed * 1000003ULL + i);
            if (c.method == Method::bcnn) {
                BConvBlock block{init_layer(channels, width, detail::scales_for(size, c.multiscale, c.paddings[i]),
                                            c.group, c.cutoff, seed, 1, c.paddings[i])};
                layers_.emplace_back(std::move(block));
            } else {
                PlainConv pc;
                pc.size = size;
                pc.c_in = channels;
                pc.c_out = width;
                pc.padding = c.paddings[i];
                pc.w = Parameter("conv" + std::to_string(i) + "_w",
                                 static_cast<std::size_t>(size * size * channels * width));
                pc.b = Parameter("conv" + std::to_string(i) + "_b", static_cast<std::size_t>(width));
                std::mt19937_64 rng(seed);
                std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (size * size * channels)));
                for (auto& v : pc.w.value) v = normal(rng);
                layers_.emplace_back(std::move(pc));
            }
            if (c.standardize) layers_.emplace_back(Standardize{});
            layers_.emplace_back(Activation{c.method == Method::bcnn ? ActivationKind::softsign : ActivationKind::relu});
            spatial = c.paddings[i] == Padding::same ? spatial : spatial - size + 1;
            if (spatial < 1) throw validation_error("architecture shrinks the input below 1x1");
            channels = width;
            if (std::find(c.pool_after.begin(), c.pool_after.end(), static_cast<int>(i)) != c.pool_after.end()) {
                layers_.emplace_back(AvgPool2{});
                spatial /= 2;
            }
        }
        final_size_ = spatial;
        if (c.head) {
            layers_.emplace_back(GlobalAvgPool{});
            DenseLayer d;
            d.in = channels;
            d.out = c.classes;
            d.w = Parameter("dense_w", static_cast<std::size_t>(channels * c.classes));
            d.b = Parameter("dense_b", static_cast<std::size_t>(c.classes));
            std::mt19937_64 rng(detail::splitmix(c.seed * 1000003ULL + 999));
            std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / channels));
            for (auto& v : d.w.value) v = normal(rng);
            layers_.emplace_back(std::move(d));
        }
    }

    ModelConfig config_;
    std::vector<Layer> layers_;
    int final_size_ = 0;
};

/// Trainable parameter count of a config without allocating the model.
inline std::size_t count_parameters(const ModelConfig& c) {
    std::size_t n = 0;
    int channels = c.input_channels;
    for (std::size_t i = 0; i < c.filter_sizes.size(); ++i) {
        const int width = scaled_width(c.base_widths[i], c.lambda);
        const int size = c.filter_sizes[i];
        if (c.method == Method::bcnn) {
            n += 2 * make_basis(size, c.cutoff).size() * static_cast<std::size_t>(channels * width);
        } else {
            n += static_cast<std::size_t>(size * size * channels * width + width);
        }
        channels = width;
    }
    if (c.head) n += static_cast<std::size_t>(channels * c.classes + c.classes);
    return n;
}

/// Trainable parameters of the reference model: Bessel layers, full cutoff,
/// lambda = 1.
inline std::size_t reference_parameter_count(const std::string& dataset = "mnist") {
    ModelConfig ref = mnist_config(dataset);
    ref.method = Method::bcnn;
    ref.cutoff = CutoffPolicy::full;
    ref.lambda = 1.0;
    return count_parameters(ref);
}

/// Smallest-gap lambda on a 0.01 grid in [0.05, 4] for the target count.
inline double fit_lambda(ModelConfig c, std::size_t target) {
    double best = 1.0;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int step = 5; step <= 400; ++step) {
        c.lambda = step / 100.0;
        const double gap = std::abs(static_cast<double>(count_parameters(c)) - static_cast<double>(target));
        if (gap < best_gap) {
            best_gap = gap;
            best = c.lambda;
        }
    }
    return best;
}

/// Builds the generic architecture. Without an explicit lambda, the full-cutoff
/// Bessel model uses lambda = 1 and every other variant (half cutoff, plain
/// convolutions) gets the lambda whose parameter count is closest to it.
inline ModelConfig make_model_config(const std::string& dataset, Method method, std::optional<double> lambda,
                                     Group group, CutoffPolicy cutoff, bool multiscale, std::uint64_t seed = 0,
                                     bool standardize = false) {
    ModelConfig c = mnist_config(dataset);
    c.method = method;
    c.group = group;
    c.cutoff = cutoff;
    c.multiscale = multiscale;
    c.seed = seed;
    c.standardize = standardize;
    if (lambda) {
        c.lambda = *lambda;
    } else if (method == Method::bcnn && cutoff == CutoffPolicy::full) {
        c.lambda = 1.0;
    } else {
        c.lambda = fit_lambda(c, reference_parameter_count(dataset));
    }
    return c;
}

inline Model build_model(const std::string& dataset, Method method, std::optional<double> lambda, Group group,
                         CutoffPolicy cutoff, bool multiscale, std::uint64_t seed = 0, bool standardize = false) {
    return Model(make_model_config(dataset, method, lambda, group, cutoff, multiscale, seed, standardize));
}

/// Six valid-padding Bessel layers, sizes (9, 5, 5, 5, 5, 5), mapping a 29x29
/// input to a 1x1 map; no pooling and no head.
inline ModelConfig invariance_config(Group group, CutoffPolicy cutoff, std::uint64_t seed, int width = 4) {
    ModelConfig c;
    c.dataset = "invariance";
    c.method = Method::bcnn;
    c.group = group;
    c.cutoff = cutoff;
    c.seed = seed;
    c.input_size = 29;
    c.filter_sizes = {9, 5, 5, 5, 5, 5};
    c.base_widths = std::vector<int>(6, width);
    c.paddings = std::vector<Padding>(6, Padding::valid);
    c.head = false;
    return c;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json paddings = nlohmann::json::array();
    for (Padding p : c.paddings) paddings.push_back(to_string(p));
    return {{"dataset", c.dataset},
            {"method", to_string(c.method)},
            {"lambda", c.lambda},
            {"group", to_string(c.group)},
            {"cutoff", to_string(c.cutoff)},
            {"multiscale", c.multiscale},
            {"standardize", c.standardize},
            {"input_size", c.input_size},
            {"input_channels", c.input_channels},
            {"classes", c.classes},
            {"seed", c.seed},
            {"filter_sizes", c.filter_sizes},
            {"base_widths", c.base_widths},
            {"paddings", paddings},
            {"pool_after", c.pool_after},
            {"head", c.head}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig c;
        c.dataset = j.at("dataset").get<std::string>();
        c.method = parse_method(j.at("method").get<std::string>());
        c.lambda = j.at("lambda").get<double>();
        c.group = parse_group(j.at("group").get<std::string>());
        c.cutoff = parse_cutoff(j.at("cutoff").get<std::string>());
        c.multiscale = j.at("multiscale").get<bool>();
        c.standardize = j.at("standardize").get<bool>();
        c.input_size = j.at("input_size").get<int>();
        c.input_channels = j.at("input_channels").get<int>();
        c.classes = j.at("classes").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.filter_sizes = j.at("filter_sizes").get<std::vector<int>>();
        c.base_widths = j.at("base_widths").get<std::vector<int>>();
        for (const auto& p : j.at("paddings")) c.paddings.push_back(parse_padding(p.get<std::string>()));
        c.pool_after = j.at("pool_after").get<std::vector<int>>();
        c.head = j.at("head").get<bool>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed model config: ") + e.what());
    }
}

} // namespace bcnn::nn
