#include "mfdal/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mfdal/errors.hpp"
#include "mfdal/io.hpp"

namespace mfdal {
namespace {

namespace fs = std::filesystem;

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_number(const std::string& s, const fs::path& path, int row) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0')
    throw ParseError(path.string() + ": row " + std::to_string(row) +
                     ": not a number: '" + s + "'");
  return v;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                         "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

Curve read_curve(const std::string& label, const fs::path& metrics) {
  std::ifstream in(metrics);
  if (!in) throw ParseError("cannot open " + metrics.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(metrics.string() + ": empty file");
  const auto header = split(line);
  int cost_col = -1, nrmse_col = -1;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) {
    if (header[i] == "cumulative_cost") cost_col = i;
    if (header[i].rfind("nrmse_level_", 0) == 0) nrmse_col = i;  // last one wins
  }
  if (cost_col < 0 || nrmse_col < 0)
    throw ParseError(metrics.string() +
                     ": header needs cumulative_cost and nrmse_level_<k> columns");

  Curve c;
  c.label = label;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size())
      throw ParseError(metrics.string() + ": row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(f.size()));
    for (const auto& s : f) to_number(s, metrics, row);
    c.cost.push_back(to_number(f[cost_col], metrics, row));
    c.nrmse.push_back(to_number(f[nrmse_col], metrics, row));
  }
  if (c.cost.empty()) throw ParseError(metrics.string() + ": no data rows");
  return c;
}

void plot_curves(const std::vector<CurveSource>& sources, const fs::path& svg,
                 bool log_y) {
  if (sources.empty()) throw DomainError("plot needs at least one metrics file");
  std::vector<Curve> curves;
  for (const auto& s : sources) curves.push_back(read_curve(s.label, s.metrics));

  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.cost.size(); ++i) {
      if (!std::isfinite(c.nrmse[i]) || (log_y && c.nrmse[i] <= 0.0)) continue;
      x0 = std::min(x0, c.cost[i]);
      x1 = std::max(x1, c.cost[i]);
      y0 = std::min(y0, ty(c.nrmse[i]));
      y1 = std::max(y1, ty(c.nrmse[i]));
    }
  if (!std::isfinite(x0)) throw DomainError("no plottable points in the metrics files");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }

  const double W = 640, H = 420, L = 70, R = 170, T = 20, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };

  if (svg.has_parent_path()) fs::create_directories(svg.parent_path());
  std::ofstream out(svg, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + svg.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double ylab = log_y ? std::pow(10.0, yv) : yv;
    const double yp = H - B - (yv - y0) / (y1 - y0) * (H - T - B);
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16
        << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n"
        << "<text x=\"" << L - 6 << "\" y=\"" << yp + 4 << "\" text-anchor=\"end\">"
        << fmt(ylab) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\">cumulative cost</text>\n"
      << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\" text-anchor=\"middle\">nRMSE"
      << (log_y ? " (log)" : "") << "</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curves[c].cost.size(); ++i) {
      const double v = curves[c].nrmse[i];
      if (!std::isfinite(v) || (log_y && v <= 0.0)) continue;
      out << px(curves[c].cost[i]) << ',' << py(v) << ' ';
    }
    out << "\"/>\n";
    const double ly = T + 16 + 18.0 * static_cast<double>(c);
    out << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 32
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - R + 38 << "\" y=\"" << ly << "\">"
        << escape_xml(curves[c].label) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("failed writing " + svg.string());

  fs::path csv = svg;
  csv.replace_extension(".csv");
  std::ofstream pts(csv, std::ios::trunc);
  pts << "label,cumulative_cost,nrmse\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.cost.size(); ++i)
      pts << c.label << ',' << format_double(c.cost[i]) << ',' << format_double(c.nrmse[i])
          << '\n';
}

}  // namespace mfdal
