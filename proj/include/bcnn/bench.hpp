#pragma once

// Forward-pass timing of Bessel layers against filter size.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bcnn/bconv.hpp"

namespace bcnn {

struct BenchConfig {
    std::vector<int> filter_sizes{5, 9, 13, 17};
    int spatial = 32;
    int c_in = 8;
    int c_out = 8;
    int batch = 1;
    int repeats = 7;
    Group group = Group::so2;
    CutoffPolicy cutoff = CutoffPolicy::full;
    std::uint64_t seed = 0;
};

struct BenchRow {
    int filter_size = 0;
    int n = 0;
    int c_out = 0;
    double median_s = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    double exponent = 0.0; ///< least-squares slope of log(time) against log(n)
};

/// Slope of the least-squares line through (log x, log y).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw validation_error("slope fit needs two or more points");
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw validation_error("log-log fit needs positive values");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= x.size();
    my /= x.size();
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw validation_error("median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Median wall time of one same-padded forward (projection included).
inline BenchRow time_forward(int filter_size, const BenchConfig& cfg) {
    if (cfg.repeats < 5) throw validation_error("benchmarks need at least 5 repeats");
    const BConvLayer layer =
        init_layer(cfg.c_in, cfg.c_out, {filter_size}, cfg.group, cfg.cutoff, cfg.seed, 1, Padding::same);
    Tensor4<double> input(cfg.batch, cfg.spatial, cfg.spatial, cfg.c_in);
    std::mt19937_64 rng(cfg.seed + 17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : input.data) v = u(rng);
    volatile double sink = forward(input, layer).data[0]; // warm-up
    std::vector<double> times;
    for (int r = 0; r < cfg.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor4<double> out = forward(input, layer);
        const auto t1 = std::chrono::steady_clock::now();
        sink = out.data[0];
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    (void)sink;
    BenchRow row;
    row.filter_size = filter_size;
    row.n = (filter_size - 1) / 2;
    row.c_out = cfg.c_out;
    row.median_s = median(times);
    row.min_s = *std::min_element(times.begin(), times.end());
    row.max_s = *std::max_element(times.begin(), times.end());
    return row;
}

inline BenchResult bench_forward(const BenchConfig& cfg) {
    if (cfg.filter_sizes.size() < 2) throw validation_error("benchmark needs at least two filter sizes");
    BenchResult r;
    std::vector<double> ns;
    std::vector<double> ts;
    for (int s : cfg.filter_sizes) {
        r.rows.push_back(time_forward(s, cfg));
        ns.push_back(r.rows.back().n);
        ts.push_back(r.rows.back().median_s);
    }
    r.exponent = loglog_slope(ns, ts);
    return r;
}

inline std::string bench_csv(const BenchResult& r) {
    std::ostringstream os;
    os.precision(9);
    os << "filter_size,n,c_out,median_s,min_s,max_s\n";
    for (const auto& row : r.rows) {
        os << row.filter_size << "," << row.n << "," << row.c_out << "," << row.median_s << "," << row.min_s << ","
           << row.max_s << "\n";
    }
    return os.str();
}

} // namespace bcnn
