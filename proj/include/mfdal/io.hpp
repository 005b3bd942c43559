#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "mfdal/pde.hpp"

namespace mfdal {

/// Shortest text that is 17 significant digits ("%.17g"); nan/inf spelled
/// "nan", "inf", "-inf".
std::string format_double(double v);

/// Headerless comma-separated matrix, one row per line.
void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);

/// Throws ParseError naming the file and line of the first malformed row
/// (wrong column count, non-numeric field).
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path);

/// Dataset directory: manifest.json plus level_<k>/inputs.csv and
/// level_<k>/outputs.csv for k = 1..K.
void write_dataset(const std::filesystem::path& dir, const MultiFidelityDataset& data);
MultiFidelityDataset read_dataset(const std::filesystem::path& dir);

}  // namespace mfdal
