#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mfdal {

struct CurveSource {
  std::string label;
  std::filesystem::path metrics;  // a metrics.csv
};

/// One parsed curve: cumulative cost against highest-level nRMSE.
struct Curve {
  std::string label;
  std::vector<double> cost;
  std::vector<double> nrmse;
};

/// Reads a metrics.csv. Throws ParseError naming the file and row for a
/// missing header column, a short row or a non-numeric field.
Curve read_curve(const std::string& label, const std::filesystem::path& metrics);

/// Writes an SVG line chart to `svg` and the plotted points to the sibling
/// file with extension .csv (columns label,cumulative_cost,nrmse).
void plot_curves(const std::vector<CurveSource>& sources,
                 const std::filesystem::path& svg, bool log_y = true);

}  // namespace mfdal
