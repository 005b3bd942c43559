// Test-only helpers: finite-difference oracles and small fixtures.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "mfdal/dmfnp.hpp"
#include "mfdal/random.hpp"

namespace mfdal::testing {

/// |a - b| / max(|a|, |b|, floor). The floor keeps parameters whose true
/// gradient is ~0 from turning round-off into a huge relative error.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences of f at x with step h.
inline std::vector<double> central_differences(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// The micro model: d_x = 1, d_y = (2, 2), d_z = 2, 3 points per level.
/// Levels share scenarios 0 and 1 (the reference set).
struct MicroProblem {
  SurrogateModel model;
  std::vector<LevelSamples> levels;
  std::vector<std::int64_t> reference_ids{0, 1};

  static MicroProblem make(int hidden_width = 6, double reg_weight = 1.0,
                           std::uint64_t seed = 11) {
    SurrogateConfig cfg;
    cfg.latent_dim = 2;
    cfg.hidden_width = hidden_width;
    cfg.hidden_layers = 2;
    cfg.mc_samples = 1;
    cfg.reg_weight = reg_weight;
    cfg.seed = seed;
    MicroProblem p{SurrogateModel(1, {2, 2}, cfg, FeatureScaling::identity(1)),
                   {},
                   {0, 1}};
    Rng rng(seed + 100);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::vector<std::vector<std::int64_t>> ids = {{0, 1, 2}, {0, 1, 3}};
    const double xs[4] = {0.1, 0.5, 0.8, 0.3};
    for (int k = 0; k < 2; ++k) {
      LevelSamples lv;
      for (auto id : ids[k]) {
        Eigen::VectorXd x(1);
        x << xs[id];
        Eigen::VectorXd y(2);
        y << std::sin(3.0 * x(0)) + 0.1 * k + 0.05 * u(rng),
            std::cos(2.0 * x(0)) - 0.2 * k;
        lv.append(x, y, id);
      }
      p.levels.push_back(std::move(lv));
    }
    return p;
  }
};

}  // namespace mfdal::testing
