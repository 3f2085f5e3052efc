#include "fmkt/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fmkt/common.hpp"

namespace fmkt::harness {

namespace {

constexpr double kW = 520, kH = 380, kPad = 56;

std::ofstream open_svg(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write plot: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n";
    return out;
}

void axes(std::ofstream& out, const std::string& xlabel, const std::string& ylabel) {
    out << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
        << kH - kPad << "' stroke='black'/>\n"
        << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='" << kH - kPad
        << "' stroke='black'/>\n"
        << "<text x='" << kW / 2 << "' y='" << kH - 12 << "' font-size='13' text-anchor='middle'>"
        << xlabel << "</text>\n"
        << "<text x='16' y='" << kH / 2 << "' font-size='13' text-anchor='middle' transform='rotate(-90 16 "
        << kH / 2 << ")'>" << ylabel << "</text>\n";
}

}  // namespace

void write_error_curve_svg(const std::string& path, const analysis::ErrorStudyReport& report) {
    std::ofstream out = open_svg(path);
    axes(out, "log10 K", "log10 endpoint error");
    std::vector<double> xs, ys;
    for (size_t i = 0; i < report.k_values.size(); ++i)
        if (report.endpoint_errors[i] > 0.0) {
            xs.push_back(std::log10(static_cast<double>(report.k_values[i])));
            ys.push_back(std::log10(report.endpoint_errors[i]));
        }
    if (!xs.empty()) {
        double x0 = *std::min_element(xs.begin(), xs.end());
        double x1 = *std::max_element(xs.begin(), xs.end());
        double y0 = *std::min_element(ys.begin(), ys.end());
        double y1 = *std::max_element(ys.begin(), ys.end());
        if (x1 - x0 < 1e-12) x1 = x0 + 1;
        if (y1 - y0 < 1e-12) y1 = y0 + 1;
        auto px = [&](double x) { return kPad + (x - x0) / (x1 - x0) * (kW - 2 * kPad); };
        auto py = [&](double y) { return kH - kPad - (y - y0) / (y1 - y0) * (kH - 2 * kPad); };
        std::ostringstream pts;
        for (size_t i = 0; i < xs.size(); ++i) pts << px(xs[i]) << "," << py(ys[i]) << " ";
        out << "<polyline points='" << pts.str()
            << "' fill='none' stroke='steelblue' stroke-width='2'/>\n";
        for (size_t i = 0; i < xs.size(); ++i)
            out << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i])
                << "' r='3.5' fill='steelblue'/>\n";
    }
    std::ostringstream title;
    title.precision(3);
    title << "Euler endpoint error vs K (fitted order " << report.fitted_order << ")";
    out << "<text x='" << kW / 2 << "' y='24' font-size='14' text-anchor='middle'>" << title.str()
        << "</text>\n</svg>\n";
}

void write_reliability_svg(const std::string& path, const analysis::ReliabilityHistogram& hist) {
    std::ofstream out = open_svg(path);
    axes(out, "confidence", "accuracy");
    auto px = [&](double x) { return kPad + x * (kW - 2 * kPad); };
    auto py = [&](double y) { return kH - kPad - y * (kH - 2 * kPad); };
    out << "<line x1='" << px(0) << "' y1='" << py(0) << "' x2='" << px(1) << "' y2='" << py(1)
        << "' stroke='gray' stroke-dasharray='5,4'/>\n";
    size_t bins = hist.bin_counts.size();
    for (size_t b = 0; b < bins; ++b) {
        if (hist.bin_counts[b] == 0) continue;
        double x0 = hist.bin_edges[b], x1 = hist.bin_edges[b + 1];
        double acc = hist.bin_accuracy[b];
        out << "<rect x='" << px(x0) << "' y='" << py(acc) << "' width='" << px(x1) - px(x0)
            << "' height='" << py(0) - py(acc)
            << "' fill='steelblue' fill-opacity='0.7' stroke='black' stroke-width='0.5'/>\n";
        out << "<circle cx='" << px((x0 + x1) / 2) << "' cy='" << py(hist.bin_confidence[b])
            << "' r='3' fill='firebrick'/>\n";
    }
    std::ostringstream title;
    title.precision(4);
    title << "Reliability diagram, step " << hist.step_index << " (ECE " << hist.ece << ")";
    out << "<text x='" << kW / 2 << "' y='24' font-size='14' text-anchor='middle'>" << title.str()
        << "</text>\n</svg>\n";
}

}  // namespace fmkt::harness
