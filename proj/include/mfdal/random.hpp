#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace mfdal {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent seed from a root seed and a path of integer keys.
/// Every random draw in the library goes through a substream so that results
/// depend only on (seed, keys), never on evaluation order.
inline std::uint64_t substream_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng substream(std::uint64_t seed,
                     std::initializer_list<std::uint64_t> keys) {
  return Rng(substream_seed(seed, keys));
}

/// Uniform double in [0, 1) from a 64-bit hash.
inline double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols,
                                       Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

// Stream tags; keep values stable, they are part of the reproducibility contract.
namespace stream {
inline constexpr std::uint64_t scenario = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t epoch = 3;
inline constexpr std::uint64_t predict = 4;
inline constexpr std::uint64_t acquisition = 5;
inline constexpr std::uint64_t pool = 6;
inline constexpr std::uint64_t test_set = 7;
inline constexpr std::uint64_t random_score = 8;
inline constexpr std::uint64_t dataset = 9;
}  // namespace stream

}  // namespace mfdal
