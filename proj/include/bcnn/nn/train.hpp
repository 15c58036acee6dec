#pragma once

// Adam, the warm-up cosine schedule, the training loop, evaluation, finite
// difference gradient checks and the checkpoint format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bcnn/binary_io.hpp"
#include "bcnn/data/dataset.hpp"
#include "bcnn/nn/model.hpp"

namespace bcnn::nn {

/// Linear ramp 0 -> peak over the warm-up, then a half cosine down to 0.
inline double warmup_cosine_lr(long step, long total_steps, long warmup_steps, double peak) {
    if (step < 0 || step > total_steps) throw validation_error("learning-rate step outside [0, total]");
    if (warmup_steps > 0 && step <= warmup_steps) return peak * static_cast<double>(step) / warmup_steps;
    const long rest = total_steps - warmup_steps;
    if (rest <= 0) return peak;
    const double t = static_cast<double>(step - warmup_steps) / rest;
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

    /// One update; frozen (masked) entries are neither read nor written.
    void step(const std::vector<Parameter*>& params, double lr) {
        if (m_.empty()) {
            for (const Parameter* p : params) {
                m_.emplace_back(p->size(), 0.0);
                v_.emplace_back(p->size(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw internal_error("optimizer state does not match the parameter list");
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Parameter& p = *params[k];
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!p.trainable(i)) continue;
                const double g = p.grad[i];
                m[i] = beta1_ * m[i] + (1 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
                p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon_);
            }
        }
    }

    long steps() const noexcept { return t_; }

private:
    double beta1_;
    double beta2_;
    double epsilon_;
    long t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct TrainConfig {
    int epochs = 50;
    int warmup_epochs = 10;
    int batch_size = 64;
    double peak_lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    data::Regime regime = data::Regime::high;
    data::AugmentPolicy augmentation = data::AugmentPolicy::none;
    Precision precision = Precision::double_;
    int eval_every = 1; ///< test-set evaluation period in epochs (the last epoch is always evaluated)
    bool verbose = false;

    void validate() const {
        if (epochs < 1) throw validation_error("epochs must be positive");
        if (warmup_epochs < 0 || warmup_epochs >= epochs) throw validation_error("warmup epochs must be in [0, epochs)");
        if (batch_size < 1) throw validation_error("batch size must be positive");
        if (!(peak_lr > 0.0)) throw validation_error("peak learning rate must be positive");
        if (eval_every < 1) throw validation_error("eval period must be positive");
        if (weight_decay < 0.0) throw validation_error("weight decay must be non-negative");
    }
};

/// 50 epochs with 10 warm-up, or 150 with 30 for the low regime.
inline TrainConfig train_config_for(data::Regime regime) {
    TrainConfig c;
    c.regime = regime;
    if (regime == data::Regime::low) {
        c.epochs = 150;
        c.warmup_epochs = 30;
    }
    return c;
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<double> per_class;
    std::vector<int> predictions;
};

struct HistoryRow {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
    double lr = 0.0;
};

struct History {
    std::vector<HistoryRow> rows;

    std::optional<HistoryRow> last(const std::string& split) const {
        for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
            if (it->split == split) return *it;
        }
        return std::nullopt;
    }

    friend bool operator==(const History& a, const History& b) {
        if (a.rows.size() != b.rows.size()) return false;
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            const auto& x = a.rows[i];
            const auto& y = b.rows[i];
            if (x.epoch != y.epoch || x.split != y.split || x.loss != y.loss || x.accuracy != y.accuracy ||
                x.lr != y.lr) {
                return false;
            }
        }
        return true;
    }
};

namespace detail {

template <typename T>
Tensor4<T> to_precision(const Tensor4<double>& x) {
    if constexpr (std::is_same_v<T, double>) {
        return x;
    } else {
        return x.template cast<T>();
    }
}

template <typename T>
EvalResult evaluate_impl(Model& model, const data::LabeledDataset& ds, int batch_size) {
    EvalResult r;
    const int k = model.config().classes;
    std::vector<int> correct(static_cast<std::size_t>(k), 0), seen(static_cast<std::size_t>(k), 0);
    double loss = 0.0;
    int total_correct = 0;
    for (int start = 0; start < ds.size(); start += batch_size) {
        const int stop = std::min(ds.size(), start + batch_size);
        std::vector<int> idx(static_cast<std::size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        const data::LabeledDataset part = ds.subset(idx);
        Graph<T> g;
        const int x = input(g, to_precision<T>(part.images));
        const int logits = model.forward(g, x, false);
        const int l = softmax_cross_entropy(g, logits, part.labels);
        loss += static_cast<double>(g.value(l).data[0]) * part.size();
        const Tensor4<T>& z = g.value(logits);
        for (int s = 0; s < z.n; ++s) {
            const T* zs = z.image(s);
            const int pred = static_cast<int>(std::max_element(zs, zs + k) - zs);
            const int y = part.labels[static_cast<std::size_t>(s)];
            r.predictions.push_back(pred);
            ++seen[static_cast<std::size_t>(y)];
            if (pred == y) {
                ++correct[static_cast<std::size_t>(y)];
                ++total_correct;
            }
        }
    }
    const int n = std::max(1, ds.size());
    r.loss = loss / n;
    r.accuracy = static_cast<double>(total_correct) / n;
    for (int c = 0; c < k; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        r.per_class.push_back(seen[cc] ? static_cast<double>(correct[cc]) / seen[cc] : 0.0);
    }
    return r;
}

} // namespace detail

/// Top-1 accuracy, per-class accuracy and mean cross-entropy.
inline EvalResult evaluate(Model& model, const data::LabeledDataset& ds, Precision precision = Precision::double_,
                           int batch_size = 64) {
    if (ds.height() != model.config().input_size || ds.width() != model.config().input_size) {
        throw validation_error("dataset images are " + std::to_string(ds.height()) + "x" +
                               std::to_string(ds.width()) + ", model expects " +
                               std::to_string(model.config().input_size));
    }
    return precision == Precision::double_ ? detail::evaluate_impl<double>(model, ds, batch_size)
                                           : detail::evaluate_impl<float>(model, ds, batch_size);
}

using EpochCallback = std::function<void(const HistoryRow&)>;

namespace detail {

template <typename T>
History train_impl(Model& model, const data::LabeledDataset& train, const data::LabeledDataset* test,
                   const TrainConfig& cfg, const EpochCallback& on_row) {
    History h;
    auto record = [&](HistoryRow row) {
        if (on_row) on_row(row);
        h.rows.push_back(std::move(row));
    };
    {
        const EvalResult e = evaluate(model, train, cfg.precision, cfg.batch_size);
        record({0, "train", e.loss, e.accuracy, 0.0});
        if (test) {
            const EvalResult t = evaluate(model, *test, cfg.precision, cfg.batch_size);
            record({0, "test", t.loss, t.accuracy, 0.0});
        }
    }
    const data::AugmentStream stream(train, cfg.augmentation, cfg.seed, cfg.batch_size, true);
    const int batches = stream.batch_count();
    const long total = static_cast<long>(cfg.epochs) * batches;
    const long warmup = static_cast<long>(cfg.warmup_epochs) * batches;
    Adam opt(cfg.beta1, cfg.beta2, cfg.epsilon);
    const std::vector<Parameter*> params = model.parameters();
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<int> order = stream.order(epoch);
        double loss_sum = 0.0;
        int correct = 0;
        double lr = 0.0;
        for (int b = 0; b < batches; ++b) {
            const data::Batch batch = stream.batch(epoch, b, order);
            model.zero_grad();
            Graph<T> g;
            const int x = input(g, to_precision<T>(batch.images));
            const int logits = model.forward(g, x, true);
            const int l = softmax_cross_entropy(g, logits, batch.labels);
            const double loss = static_cast<double>(g.value(l).data[0]);
            if (!std::isfinite(loss)) {
                throw nonfinite_loss_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(b),
                                           epoch, b);
            }
            const Tensor4<T>& z = g.value(logits);
            const int k = z.c;
            for (int s = 0; s < z.n; ++s) {
                const T* zs = z.image(s);
                if (static_cast<int>(std::max_element(zs, zs + k) - zs) == batch.labels[static_cast<std::size_t>(s)])
                    ++correct;
            }
            loss_sum += loss * batch.labels.size();
            g.backward(l);
            g.clear();
            for (Parameter* p : params) {
                if (cfg.weight_decay > 0.0) {
                    for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] += cfg.weight_decay * p->value[i];
                }
                p->apply_mask_to_grad();
            }
            ++step;
            lr = warmup_cosine_lr(step, total, warmup, cfg.peak_lr);
            opt.step(params, lr);
        }
        record({epoch, "train", loss_sum / train.size(), static_cast<double>(correct) / train.size(), lr});
        if (test && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
            const EvalResult t = evaluate(model, *test, cfg.precision, cfg.batch_size);
            record({epoch, "test", t.loss, t.accuracy, lr});
        }
    }
    return h;
}

} // namespace detail

/// Trains in place. Epoch 0 rows hold the evaluation before any update; later
/// train rows hold the running loss/accuracy over the epoch's batches.
inline History train(Model& model, const data::LabeledDataset& train_set, const data::LabeledDataset* test_set,
                     const TrainConfig& cfg, const EpochCallback& on_row = {}) {
    cfg.validate();
    train_set.validate();
    if (train_set.size() == 0) throw validation_error("empty training set");
    if (train_set.height() != model.config().input_size || train_set.width() != model.config().input_size) {
        throw validation_error("training images do not match the model input size");
    }
    if (!model.config().head) throw validation_error("training needs a model with a classification head");
    return cfg.precision == Precision::double_ ? detail::train_impl<double>(model, train_set, test_set, cfg, on_row)
                                               : detail::train_impl<float>(model, train_set, test_set, cfg, on_row);
}

/// Mean loss for a fixed batch in double precision (evaluation mode).
inline double batch_loss(Model& model, const Tensor4<double>& x, const std::vector<int>& labels) {
    Graph<double> g;
    const int in = input(g, x);
    const int out = model.forward(g, in, false);
    const int l = model.config().head ? softmax_cross_entropy(g, out, labels) : sum_of_squares(g, out);
    return g.value(l).data[0];
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    int checked = 0;
};

/// Finite differences on `count` randomly chosen trainable scalars: central
/// differences at `step` and `step / 2` combined by Richardson extrapolation
/// (fourth-order error). Models without a head use the sum of squared outputs
/// as the objective. Relative error uses max(|analytic|, |numeric|, 1e-8).
inline GradCheckResult grad_check(Model& model, const Tensor4<double>& x, const std::vector<int>& labels,
                                  double step = 1e-3, int count = 50, std::uint64_t seed = 0) {
    if (!(step > 0.0)) throw validation_error("gradient check step must be positive");
    if (x.n > 4) throw validation_error("gradient check takes at most 4 inputs");
    model.zero_grad();
    {
        Graph<double> g;
        const int in = input(g, x);
        const int out = model.forward(g, in, false);
        const int l = model.config().head ? softmax_cross_entropy(g, out, labels) : sum_of_squares(g, out);
        g.backward(l);
    }
    std::vector<std::pair<Parameter*, std::size_t>> pool;
    for (Parameter* p : model.parameters()) {
        p->apply_mask_to_grad();
        for (std::size_t i = 0; i < p->size(); ++i) {
            if (p->trainable(i)) pool.push_back({p, i});
        }
    }
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    if (static_cast<int>(pool.size()) > count) pool.resize(static_cast<std::size_t>(count));

    GradCheckResult r;
    for (auto [p, i] : pool) {
        const double saved = p->value[i];
        auto central = [&](double h) {
            p->value[i] = saved + h;
            const double up = batch_loss(model, x, labels);
            p->value[i] = saved - h;
            const double down = batch_loss(model, x, labels);
            p->value[i] = saved;
            return (up - down) / (2 * h);
        };
        const double coarse = central(step);
        const double numeric = (4.0 * central(step / 2) - coarse) / 3.0;
        const double analytic = p->grad[i];
        const double den = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic - numeric) / den);
        ++r.checked;
    }
    model.zero_grad();
    return r;
}

// Checkpoints: "BCKP", u32 version, model config JSON, layer manifest,
// parameter blobs (name, count, f64 values), running statistics.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(Model& model) {
    io::ByteWriter w;
    w.magic("BCKP");
    w.u32(kCheckpointVersion);
    w.str(config_to_json(model.config()).dump());
    const auto manifest = model.manifest();
    w.u32(static_cast<std::uint32_t>(manifest.size()));
    for (const auto& line : manifest) w.str(line);
    const auto params = model.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        w.str(p->name);
        w.u64(p->size());
        for (double v : p->value) w.f64(v);
    }
    const auto stats = model.standardize_layers();
    w.u32(static_cast<std::uint32_t>(stats.size()));
    for (const Standardize* s : stats) {
        w.u8(s->stats.initialized ? 1 : 0);
        w.u64(s->stats.mean.size());
        for (double v : s->stats.mean) w.f64(v);
        for (double v : s->stats.var) w.f64(v);
    }
    return std::move(w).take();
}

inline Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("BCKP");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw format_error("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    const std::size_t config_at = r.offset();
    nlohmann::json cj;
    try {
        cj = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception&) {
        throw format_error("checkpoint config is not valid JSON", config_at);
    }
    Model model(config_from_json(cj));
    const auto expected = model.manifest();
    const std::size_t manifest_at = r.offset();
    const std::uint32_t lines = r.u32();
    if (lines != expected.size()) throw format_error("checkpoint layer manifest does not match its config", manifest_at);
    for (const auto& want : expected) {
        const std::size_t at = r.offset();
        if (r.str() != want) throw format_error("checkpoint layer manifest mismatch: expected '" + want + "'", at);
    }
    auto params = model.parameters();
    const std::size_t count_at = r.offset();
    if (r.u32() != params.size()) throw format_error("checkpoint parameter count mismatch", count_at);
    for (Parameter* p : params) {
        const std::size_t at = r.offset();
        if (r.str() != p->name) throw format_error("checkpoint parameter name mismatch for " + p->name, at);
        const std::size_t size_at = r.offset();
        if (r.u64() != p->size()) throw format_error("checkpoint parameter size mismatch for " + p->name, size_at);
        for (auto& v : p->value) v = r.f64();
        if (!p->mask_respected()) throw format_error("checkpoint has nonzero masked coefficients in " + p->name, at);
    }
    auto stats = model.standardize_layers();
    const std::size_t stats_at = r.offset();
    if (r.u32() != stats.size()) throw format_error("checkpoint statistics count mismatch", stats_at);
    for (Standardize* s : stats) {
        s->stats.initialized = r.u8() != 0;
        const auto c = static_cast<std::size_t>(r.u64());
        s->stats.mean.resize(c);
        s->stats.var.resize(c);
        for (auto& v : s->stats.mean) v = r.f64();
        for (auto& v : s->stats.var) v = r.f64();
    }
    if (!r.at_end()) throw format_error("trailing bytes after checkpoint", r.offset());
    return model;
}

inline void save_checkpoint(Model& model, const std::string& path) { io::write_file(path, encode_checkpoint(model)); }

inline Model load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

/// CSV with '#' header lines (key: value) followed by epoch,split,loss,accuracy,lr.
inline std::string history_csv(const History& h, const std::vector<std::pair<std::string, std::string>>& header) {
    std::ostringstream os;
    for (const auto& [k, v] : header) os << "# " << k << ": " << v << "\n";
    os << "epoch,split,loss,accuracy,lr\n";
    os.precision(10);
    for (const auto& r : h.rows) os << r.epoch << "," << r.split << "," << r.loss << "," << r.accuracy << "," << r.lr << "\n";
    return os.str();
}

} // namespace bcnn::nn
