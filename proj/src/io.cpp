#include "mfdal/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfdal/errors.hpp"

namespace mfdal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path level_dir(const fs::path& dir, int k) {
  return dir / ("level_" + std::to_string(k + 1));
}

double parse_field(const std::string& field, const fs::path& path, int line) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0'))
    throw ParseError(path.string() + ":" + std::to_string(line) +
                     ": not a number: '" + field + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::string line;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) line += ',';
      line += format_double(m(r, c));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Eigen::MatrixXd read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(parse_field(field, path, line_no));
    if (line.back() == ',')
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": trailing comma");
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(rows.front().size()) + " columns, found " +
                       std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  return m;
}

void write_dataset(const fs::path& dir, const MultiFidelityDataset& data) {
  data.validate();
  fs::create_directories(dir);
  json levels = json::array();
  for (int k = 0; k < data.task.num_levels(); ++k) {
    const auto& lv = data.levels[k];
    fs::create_directories(level_dir(dir, k));
    write_csv_matrix(level_dir(dir, k) / "inputs.csv", lv.inputs);
    write_csv_matrix(level_dir(dir, k) / "outputs.csv", lv.outputs);
    levels.push_back({{"resolution", data.task.levels[k]},
                      {"output_dim", data.task.output_dim(k)},
                      {"cost", data.task.costs[k]},
                      {"count", lv.size()},
                      {"scenario_ids", lv.scenario_ids}});
  }
  json manifest = {{"task", to_string(data.task.name)},
                   {"num_levels", data.task.num_levels()},
                   {"d_x", data.task.input_dim()},
                   {"seed", data.seed},
                   {"reference_ids", data.reference_ids},
                   {"next_scenario_id", data.next_scenario_id},
                   {"levels", levels}};
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

MultiFidelityDataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("cannot open " + (dir / "manifest.json").string());
  MultiFidelityDataset ds;
  try {
    const json j = json::parse(in);
    const int K = j.at("num_levels").get<int>();
    ds.task = TaskSpec::make(task_name_from_string(j.at("task").get<std::string>()), K);
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.reference_ids = j.at("reference_ids").get<std::vector<std::int64_t>>();
    ds.next_scenario_id = j.at("next_scenario_id").get<std::int64_t>();
    const auto& levels = j.at("levels");
    if (static_cast<int>(levels.size()) != K)
      throw ParseError("manifest.json: levels has " + std::to_string(levels.size()) +
                       " entries, num_levels is " + std::to_string(K));
    if (j.at("d_x").get<int>() != ds.task.input_dim())
      throw ParseError("manifest.json: d_x does not match the task");
    ds.levels.resize(K);
    for (int k = 0; k < K; ++k) {
      ds.task.costs[k] = levels[k].at("cost").get<double>();
      if (levels[k].at("resolution").get<int>() != ds.task.levels[k])
        throw ParseError("manifest.json: level " + std::to_string(k + 1) +
                         " resolution does not match the task");
      auto& lv = ds.levels[k];
      lv.scenario_ids = levels[k].at("scenario_ids").get<std::vector<std::int64_t>>();
      const auto n = static_cast<Eigen::Index>(lv.scenario_ids.size());
      lv.inputs = read_csv_matrix(level_dir(dir, k) / "inputs.csv");
      lv.outputs = read_csv_matrix(level_dir(dir, k) / "outputs.csv");
      if (n == 0) {
        lv.inputs.resize(0, ds.task.input_dim());
        lv.outputs.resize(0, ds.task.output_dim(k));
      }
      if (lv.inputs.rows() != n || lv.outputs.rows() != n)
        throw ParseError("level " + std::to_string(k + 1) + ": manifest lists " +
                         std::to_string(n) + " scenarios but the CSV files have " +
                         std::to_string(lv.inputs.rows()) + " and " +
                         std::to_string(lv.outputs.rows()) + " rows");
    }
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  } catch (const DomainError& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  try {
    ds.task.validate();
    ds.validate();
  } catch (const std::exception& e) {
    throw ParseError("dataset " + dir.string() + " is inconsistent: " + e.what());
  }
  return ds;
}

}  // namespace mfdal
