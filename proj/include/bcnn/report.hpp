#pragma once

// Reproducibility headers and a minimal SVG line-chart writer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bcnn/tensor.hpp"

#ifndef BCNN_BUILD_ID
#define BCNN_BUILD_ID "unknown"
#endif

namespace bcnn {

inline std::string build_id() { return BCNN_BUILD_ID; }

struct ReproHeader {
    std::uint64_t seed = 0;
    Precision precision = Precision::double_;
    std::vector<std::string> basis_hashes;

    nlohmann::json to_json() const {
        return {{"build_id", build_id()},
                {"seed", seed},
                {"precision", to_string(precision)},
                {"basis_hash", basis_hashes}};
    }

    std::vector<std::pair<std::string, std::string>> lines() const {
        std::string hashes;
        for (const auto& h : basis_hashes) hashes += (hashes.empty() ? "" : ",") + h;
        return {{"build_id", build_id()},
                {"seed", std::to_string(seed)},
                {"precision", to_string(precision)},
                {"basis_hash", hashes.empty() ? "none" : hashes}};
    }

    std::string csv_comment() const {
        std::string out;
        for (const auto& [k, v] : lines()) out += "# " + k + ": " + v + "\n";
        return out;
    }
};

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Line chart with linear axes; one polyline per series and a legend.
inline std::string svg_line_chart(const std::vector<Series>& series, const std::string& title,
                                  const std::string& x_label, const std::string& y_label, int width = 640,
                                  int height = 400) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    double x0 = std::numeric_limits<double>::infinity();
    double x1 = -x0;
    double y0 = x0;
    double y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) {
        x0 = 0;
        x1 = 1;
        y0 = 0;
        y1 = 1;
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double left = 60;
    const double right = width - 20.0;
    const double top = 40;
    const double bottom = height - 50.0;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (right - left); };
    auto py = [&](double y) { return bottom - (y - y0) / (y1 - y0) * (bottom - top); };

    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4;
        const double yv = y0 + (y1 - y0) * t / 4;
        os << "<text x=\"" << px(xv) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
    }
    os << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">" << x_label
       << "</text>\n";
    os << "<text x=\"14\" y=\"" << (top + bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << (top + bottom) / 2 << ")\">" << y_label << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % std::size(colors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << right - 4 << "\" y=\"" << top + 14 * (k + 1) << "\" text-anchor=\"end\" fill=\"" << color
           << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace bcnn
