#pragma once

// Equivariance audit: single-window activations of randomly initialized
// Bessel layers compared between an image and its rotated/mirrored copies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcnn/basis_io.hpp"
#include "bcnn/bconv.hpp"
#include "bcnn/data/dataset.hpp"

namespace bcnn {

inline constexpr double kExactInvarianceTolerance = 1e-8;

struct AuditConfig {
    Group group = Group::so2;
    CutoffPolicy cutoff = CutoffPolicy::full;
    std::vector<int> filter_sizes{5, 9, 13};
    std::vector<double> angles_deg{15, 30, 45, 90};
    std::vector<std::uint64_t> seeds{0};
    int channels = 4;
    bool include_plain = true;
};

struct AuditEntry {
    int filter_size = 0;
    double angle_deg = 0.0;
    bool exact = false;
    double mean = 0.0;
    double max = 0.0;
    int samples = 0;
};

struct TrendEntry {
    double angle_deg = 0.0;
    std::vector<int> filter_sizes;
    std::vector<double> means;
    bool decreasing = false; ///< mean at the largest size below the mean at the smallest
};

struct AuditReport {
    Group group = Group::so2;
    CutoffPolicy cutoff = CutoffPolicy::full;
    std::vector<int> filter_sizes;
    std::vector<double> angles_deg;
    std::vector<std::uint64_t> seeds;
    int images = 0;
    std::vector<AuditEntry> entries;
    std::vector<AuditEntry> plain_entries;
    double exact_max = 0.0;
    bool exact_ok = true;
    double mirror_max = 0.0;           ///< relative mirror deviation of the activation
    double delta_mean_abs = 0.0;       ///< mean |analytic delta| (nonzero expected for SO2)
    double delta_formula_max = 0.0;    ///< max |analytic - empirical delta|
    bool mirror_expected_nonzero = true;
    std::vector<TrendEntry> trend;
    std::vector<std::string> basis_hashes;

    const AuditEntry* find(int filter_size, double angle_deg) const {
        for (const auto& e : entries) {
            if (e.filter_size == filter_size && std::abs(e.angle_deg - angle_deg) < 1e-9) return &e;
        }
        return nullptr;
    }
};

inline bool is_quarter_turn(double angle_deg) {
    const double q = angle_deg / 90.0;
    return std::abs(q - std::round(q)) < 1e-12;
}

inline double relative_deviation(double a, double b) { return std::abs(a - b) / (std::abs(a) + 1e-12); }

/// Renders each source image at the given odd size (footprint-averaged resampling).
inline std::vector<Image> render_at(const std::vector<Image>& sources, int size) {
    std::vector<Image> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back(data::resize_image(s, size));
    return out;
}

inline AuditReport audit_equivariance(const AuditConfig& cfg, const std::vector<Image>& sources) {
    if (cfg.filter_sizes.empty()) throw validation_error("audit needs at least one filter size");
    if (sources.empty()) throw validation_error("audit needs at least one image");
    if (cfg.seeds.empty()) throw validation_error("audit needs at least one seed");
    if (cfg.channels < 1) throw validation_error("audit needs at least one channel");
    const bool has_exact = std::any_of(cfg.angles_deg.begin(), cfg.angles_deg.end(), is_quarter_turn);
    const bool has_other = std::any_of(cfg.angles_deg.begin(), cfg.angles_deg.end(),
                                       [](double a) { return !is_quarter_turn(a); });
    if (!has_exact || !has_other) {
        throw validation_error("audit angles need a multiple of 90 degrees and at least one other angle");
    }

    AuditReport rep;
    rep.group = cfg.group;
    rep.cutoff = cfg.cutoff;
    rep.filter_sizes = cfg.filter_sizes;
    rep.angles_deg = cfg.angles_deg;
    rep.seeds = cfg.seeds;
    rep.images = static_cast<int>(sources.size());
    rep.mirror_expected_nonzero = cfg.group == Group::so2;

    double delta_sum = 0.0;
    int delta_count = 0;
    for (int size : cfg.filter_sizes) {
        require_odd_filter_size(size);
        const std::vector<Image> patches = render_at(sources, size);
        std::vector<AuditEntry> per_angle;
        std::vector<AuditEntry> plain_per_angle;
        for (double a : cfg.angles_deg) {
            per_angle.push_back({size, a, is_quarter_turn(a), 0.0, 0.0, 0});
            plain_per_angle.push_back({size, a, is_quarter_turn(a), 0.0, 0.0, 0});
        }
        for (std::uint64_t seed : cfg.seeds) {
            const BConvLayer layer = init_layer(1, cfg.channels, {size}, cfg.group, cfg.cutoff, seed, 1, Padding::valid);
            if (std::find(rep.basis_hashes.begin(), rep.basis_hashes.end(), basis_hash(layer.spec())) ==
                rep.basis_hashes.end()) {
                rep.basis_hashes.push_back(basis_hash(layer.spec()));
            }
            const FourierBessel fb(layer.bank.spec, size);
            std::mt19937_64 rng(seed ^ 0x91a1ULL);
            std::normal_distribution<double> normal(0.0, 1.0);
            std::vector<std::vector<double>> plain(static_cast<std::size_t>(cfg.channels),
                                                   std::vector<double>(static_cast<std::size_t>(size * size)));
            for (auto& f : plain)
                for (auto& v : f) v = normal(rng);
            auto plain_response = [&](const Image& p, int co) {
                double s = 0.0;
                for (std::size_t i = 0; i < p.pixels.size(); ++i) s += plain[static_cast<std::size_t>(co)][i] * p.pixels[i];
                return s;
            };

            for (const Image& patch : patches) {
                std::vector<double> base(static_cast<std::size_t>(cfg.channels));
                for (int co = 0; co < cfg.channels; ++co) base[static_cast<std::size_t>(co)] = window_activation(layer, patch, co);
                for (std::size_t k = 0; k < cfg.angles_deg.size(); ++k) {
                    const Image rotated = data::rotate_image(patch, cfg.angles_deg[k] * std::numbers::pi / 180.0);
                    for (int co = 0; co < cfg.channels; ++co) {
                        const double d = relative_deviation(base[static_cast<std::size_t>(co)], window_activation(layer, rotated, co));
                        AuditEntry& e = per_angle[k];
                        e.mean += d;
                        e.max = std::max(e.max, d);
                        ++e.samples;
                        if (cfg.include_plain) {
                            const double pd = relative_deviation(plain_response(patch, co), plain_response(rotated, co));
                            AuditEntry& pe = plain_per_angle[k];
                            pe.mean += pd;
                            pe.max = std::max(pe.max, pd);
                            ++pe.samples;
                        }
                    }
                }
                const Image mirrored = mirror_vertical(patch);
                for (int co = 0; co < cfg.channels; ++co) {
                    rep.mirror_max = std::max(
                        rep.mirror_max,
                        relative_deviation(base[static_cast<std::size_t>(co)], window_activation(layer, mirrored, co)));
                    const ReflectionDiscrepancy d = reflection_discrepancy(fb, patch, layer.bank.slice(0, co));
                    delta_sum += std::abs(d.analytic);
                    ++delta_count;
                    rep.delta_formula_max = std::max(rep.delta_formula_max, std::abs(d.analytic - d.empirical));
                }
            }
        }
        for (auto& e : per_angle) {
            e.mean /= std::max(1, e.samples);
            if (e.exact) rep.exact_max = std::max(rep.exact_max, e.max);
            rep.entries.push_back(e);
        }
        if (cfg.include_plain) {
            for (auto& e : plain_per_angle) {
                e.mean /= std::max(1, e.samples);
                rep.plain_entries.push_back(e);
            }
        }
    }
    rep.exact_ok = rep.exact_max <= kExactInvarianceTolerance;
    rep.delta_mean_abs = delta_count ? delta_sum / delta_count : 0.0;
    for (double a : cfg.angles_deg) {
        if (is_quarter_turn(a)) continue;
        TrendEntry t;
        t.angle_deg = a;
        for (int size : cfg.filter_sizes) {
            t.filter_sizes.push_back(size);
            t.means.push_back(rep.find(size, a)->mean);
        }
        const auto lo = std::min_element(t.filter_sizes.begin(), t.filter_sizes.end()) - t.filter_sizes.begin();
        const auto hi = std::max_element(t.filter_sizes.begin(), t.filter_sizes.end()) - t.filter_sizes.begin();
        t.decreasing = t.means[static_cast<std::size_t>(hi)] < t.means[static_cast<std::size_t>(lo)];
        rep.trend.push_back(std::move(t));
    }
    return rep;
}

inline nlohmann::json audit_to_json(const AuditReport& r) {
    auto entries = [](const std::vector<AuditEntry>& es) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& e : es) {
            out.push_back({{"filter_size", e.filter_size},
                           {"angle_deg", e.angle_deg},
                           {"exact", e.exact},
                           {"mean_relative_deviation", e.mean},
                           {"max_relative_deviation", e.max},
                           {"samples", e.samples}});
        }
        return out;
    };
    nlohmann::json trend = nlohmann::json::array();
    for (const auto& t : r.trend) {
        trend.push_back({{"angle_deg", t.angle_deg},
                         {"filter_sizes", t.filter_sizes},
                         {"mean_relative_deviation", t.means},
                         {"decreasing", t.decreasing}});
    }
    nlohmann::json reflection = {{"mirror_max_relative_deviation", r.mirror_max},
                                 {"analytic_delta_mean_abs", r.delta_mean_abs},
                                 {"analytic_vs_empirical_max", r.delta_formula_max},
                                 {"expected_nonzero", r.mirror_expected_nonzero}};
    if (!r.mirror_expected_nonzero) reflection["invariant"] = r.mirror_max <= kExactInvarianceTolerance;
    return {{"group", to_string(r.group)},
            {"cutoff", to_string(r.cutoff)},
            {"filter_sizes", r.filter_sizes},
            {"angles_deg", r.angles_deg},
            {"seeds", r.seeds},
            {"images", r.images},
            {"entries", entries(r.entries)},
            {"plain_conv", entries(r.plain_entries)},
            {"exact_rotation_max_deviation", r.exact_max},
            {"exact_rotation_invariant", r.exact_ok},
            {"reflection", reflection},
            {"trend", trend},
            {"basis_hashes", r.basis_hashes}};
}

} // namespace bcnn
