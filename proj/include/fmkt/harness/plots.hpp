#pragma once

#include <string>

#include "fmkt/analysis.hpp"

namespace fmkt::harness {

// Minimal self-contained SVG emitters for the analysis artifacts.
void write_error_curve_svg(const std::string& path, const analysis::ErrorStudyReport& report);
void write_reliability_svg(const std::string& path, const analysis::ReliabilityHistogram& hist);

}  // namespace fmkt::harness
