#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "mfdal/errors.hpp"
#include "mfdal/pde.hpp"

using namespace mfdal;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

MatrixXd as_grid(const VectorXd& v, int n) {
  MatrixXd g(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) g(r, c) = v(r * n + c);
  return g;
}

VectorXd heat_input(double alpha, double a1, double a2) {
  return Eigen::Vector3d(alpha, a1, a2);
}

// Dense 5-point Laplacian on an m x m interior grid, row-major unknowns,
// zero boundary; returns -lap.
MatrixXd dense_neg_laplacian(int m, double h) {
  MatrixXd a = MatrixXd::Zero(m * m, m * m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      const int i = r * m + c;
      a(i, i) = 4.0 / (h * h);
      if (r > 0) a(i, i - m) = -1.0 / (h * h);
      if (r < m - 1) a(i, i + m) = -1.0 / (h * h);
      if (c > 0) a(i, i - 1) = -1.0 / (h * h);
      if (c < m - 1) a(i, i + 1) = -1.0 / (h * h);
    }
  return a;
}

// Bilinear upsampling of an interior heat field (zero boundary) from an
// n x n to an m x m interior grid.
MatrixXd upsample_interior(const MatrixXd& coarse, int m) {
  const int n = static_cast<int>(coarse.rows());
  MatrixXd padded = MatrixXd::Zero(n + 2, n + 2);
  padded.block(1, 1, n, n) = coarse;
  MatrixXd out(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      // Position in coarse index units, boundary node 0 at s = 0.
      const double p1 = (c + 1.0) / (m + 1) * (n + 1);
      const double p2 = (r + 1.0) / (m + 1) * (n + 1);
      const int i = std::min(n, static_cast<int>(p1));
      const int j = std::min(n, static_cast<int>(p2));
      const double a = p1 - i, b = p2 - j;
      out(r, c) = (1 - a) * (1 - b) * padded(j, i) +
                  a * (1 - b) * padded(j, i + 1) +
                  (1 - a) * b * padded(j + 1, i) + a * b * padded(j + 1, i + 1);
    }
  return out;
}

}  // namespace

TEST_CASE("task specs") {
  const auto h2 = TaskSpec::heat(2);
  CHECK(h2.levels == std::vector<int>{16, 32});
  CHECK(h2.costs == std::vector<double>{1.0, 4.0});
  CHECK(h2.input_dim() == 3);
  CHECK(h2.output_dim(1) == 1024);
  const auto p3 = TaskSpec::poisson(3);
  CHECK(p3.input_dim() == 5);
  CHECK(p3.costs == std::vector<double>{1.0, 4.0, 16.0});
  CHECK_THROWS_AS(TaskSpec::heat(4), DomainError);
  CHECK(task_name_from_string("poisson") == TaskName::poisson);
  CHECK_THROWS_AS(task_name_from_string("wave"), DomainError);

  auto bad = h2;
  bad.costs = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = h2;
  bad.levels = {32, 16};
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("scenario ranges are enforced") {
  const auto heat = TaskSpec::heat();
  CHECK_NOTHROW(ScenarioInput(heat, heat_input(0.01, -1, 1)));
  CHECK_THROWS_AS(ScenarioInput(heat, heat_input(0.2, 0, 0)), DomainError);
  CHECK_THROWS_AS(ScenarioInput(heat, heat_input(0.05, 1.5, 0)), DomainError);
  CHECK_THROWS_AS(ScenarioInput(heat, heat_input(NAN, 0, 0)), DomainError);
  CHECK_THROWS_AS(ScenarioInput(heat, VectorXd::Zero(5)), DomainError);
}

TEST_CASE("heat eigenmode decay at 64x64") {
  const auto task = TaskSpec::heat(3);
  for (double alpha : {0.01, 0.05, 0.1}) {
    const VectorXd u = solve_heat(ScenarioInput(task, heat_input(alpha, 1, 0)), 64);
    REQUIRE(u.size() == 64 * 64);
    const double h = 1.0 / 65;
    const double decay = std::exp(-2.0 * alpha * kPi * kPi);
    VectorXd exact(u.size());
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        exact(r * 64 + c) =
            decay * std::sin(kPi * (c + 1) * h) * std::sin(kPi * (r + 1) * h);
    CAPTURE(alpha);
    CHECK((u - exact).norm() / exact.norm() < 0.02);
    CHECK((u - exact).cwiseAbs().maxCoeff() / decay < 0.02);
  }
  // The grid has no node at the center for even n; 0.3727 is the peak.
  const VectorXd u = solve_heat(ScenarioInput(task, heat_input(0.05, 1, 0)), 64);
  CHECK(std::abs(u.maxCoeff() - 0.3727) / 0.3727 < 0.02);
}

TEST_CASE("heat solver matches repeated dense implicit steps") {
  const int n = 6, steps = 8 * n;
  const double alpha = 0.07, h = 1.0 / (n + 1), dt = 1.0 / steps;
  const auto task = TaskSpec::heat();
  const VectorXd x = heat_input(alpha, 0.3, -0.8);
  VectorXd u(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double s1 = (c + 1) * h, s2 = (r + 1) * h;
      u(r * n + c) = 0.3 * std::sin(kPi * s1) * std::sin(kPi * s2) -
                     0.8 * std::sin(2 * kPi * s1) * std::sin(kPi * s2);
    }
  const MatrixXd system = MatrixXd::Identity(n * n, n * n) +
                          dt * alpha * dense_neg_laplacian(n, h);
  const Eigen::PartialPivLU<MatrixXd> lu(system);
  for (int s = 0; s < steps; ++s) u = lu.solve(u);
  const VectorXd got = solve_heat(ScenarioInput(task, x), n);
  CHECK((got - u).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("heat zero field and linearity") {
  const auto task = TaskSpec::heat(3);
  for (int res : task.levels) {
    const VectorXd z = solve_heat(ScenarioInput(task, heat_input(0.03, 0, 0)), res);
    CHECK(z.size() == res * res);
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> al(0.01, 0.1), amp(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const double alpha = al(rng), a1 = amp(rng), a2 = amp(rng);
    for (int res : {16, 32}) {
      const VectorXd u = solve_heat(ScenarioInput(task, heat_input(alpha, a1, a2)), res);
      const VectorXd e1 = solve_heat(ScenarioInput(task, heat_input(alpha, 1, 0)), res);
      const VectorXd e2 = solve_heat(ScenarioInput(task, heat_input(alpha, 0, 1)), res);
      CHECK((u - (a1 * e1 + a2 * e2)).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("heat coarse-to-fine consistency over the input box") {
  const auto task = TaskSpec::heat();
  double worst = 0.0;
  auto check = [&](double alpha, double a1, double a2) {
    if (a1 == 0.0 && a2 == 0.0) return;
    const ScenarioInput x(task, heat_input(alpha, a1, a2));
    const MatrixXd coarse = as_grid(simulate(task, x, 0), 16);
    const MatrixXd fine = as_grid(simulate(task, x, 1), 32);
    const double err = (upsample_interior(coarse, 32) - fine).norm() / fine.norm();
    worst = std::max(worst, err);
    CAPTURE(alpha);
    CAPTURE(a1);
    CAPTURE(a2);
    CHECK(err < 0.10);
  };
  for (double alpha : {0.01, 0.04, 0.07, 0.1})
    for (double a1 : {-1.0, -0.5, 0.0, 0.5, 1.0})
      for (double a2 : {-1.0, -0.5, 0.0, 0.5, 1.0}) check(alpha, a1, a2);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> al(0.01, 0.1), amp(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) check(al(rng), amp(rng), amp(rng));
  MESSAGE("worst coarse-to-fine error " << worst);
}

TEST_CASE("poisson constant boundary") {
  const auto task = TaskSpec::poisson(3);
  VectorXd x(5);
  x << 0.7, 0.7, 0.7, 0.7, 0.0;
  for (int res : task.levels) {
    const VectorXd u = solve_poisson(ScenarioInput(task, x), res);
    CHECK(u.size() == res * res);
    CHECK((u.array() - 0.7).abs().maxCoeff() < 1e-12);
  }
  x.setZero();
  CHECK(solve_poisson(ScenarioInput(task, x), 16).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("poisson manufactured solution converges at second order") {
  std::vector<double> errors;
  for (int n : {16, 32, 64}) {
    const MatrixXd u = detail::poisson_fd(
        n, [](double, double) { return 0.0; },
        [](double s1, double s2) {
          return 2 * kPi * kPi * std::sin(kPi * s1) * std::sin(kPi * s2);
        });
    const double h = 1.0 / (n - 1);
    double sq = 0.0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const double e = u(r, c) - std::sin(kPi * c * h) * std::sin(kPi * r * h);
        sq += e * e * h * h;
      }
    errors.push_back(std::sqrt(sq));
  }
  for (int i = 0; i + 1 < 3; ++i) {
    const double ratio = errors[i] / errors[i + 1];
    CAPTURE(ratio);
    CHECK(ratio >= 3.4);
    CHECK(ratio <= 4.6);
  }
}

TEST_CASE("poisson solver matches a dense direct solve") {
  const int n = 7, m = n - 2;
  const double h = 1.0 / (n - 1);
  const auto task = TaskSpec::poisson();
  VectorXd x(5);
  x << 0.1, 0.9, 0.4, 0.6, 0.8;
  const MatrixXd got = as_grid(solve_poisson(ScenarioInput(task, x), n), n);

  // Boundary values by edge; interior unknowns by dense LU.
  auto bval = [&](int r, int c) {
    if (r == 0) return x(0);
    if (c == n - 1) return x(1);
    if (r == n - 1) return x(2);
    return x(3);
  };
  VectorXd rhs(m * m);
  for (int r = 1; r <= m; ++r)
    for (int c = 1; c <= m; ++c) {
      const double s1 = c * h, s2 = r * h;
      double v = x(4) * std::exp(-25 * ((s1 - 0.5) * (s1 - 0.5) +
                                        (s2 - 0.5) * (s2 - 0.5)));
      if (r == 1) v += bval(0, c) / (h * h);
      if (r == m) v += bval(n - 1, c) / (h * h);
      if (c == 1) v += bval(r, 0) / (h * h);
      if (c == m) v += bval(r, n - 1) / (h * h);
      rhs((r - 1) * m + (c - 1)) = v;
    }
  const VectorXd inner = dense_neg_laplacian(m, h).partialPivLu().solve(rhs);
  for (int r = 1; r <= m; ++r)
    for (int c = 1; c <= m; ++c)
      CHECK(got(r, c) == doctest::Approx(inner((r - 1) * m + c - 1)).epsilon(1e-12));
  CHECK(got(0, 3) == x(0));
  CHECK(got(3, n - 1) == x(1));
  CHECK(got(n - 1, 3) == x(2));
  CHECK(got(3, 0) == x(3));
  CHECK(got(0, 0) == doctest::Approx(0.5 * (x(0) + x(3))));
}

TEST_CASE("poisson discrete maximum principle") {
  const auto task = TaskSpec::poisson(3);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    VectorXd x(5);
    for (int i = 0; i < 4; ++i) x(i) = u01(rng);
    x(4) = 0.0;
    const double lo = x.head(4).minCoeff(), hi = x.head(4).maxCoeff();
    for (int res : task.levels) {
      const VectorXd u = solve_poisson(ScenarioInput(task, x), res);
      CHECK(u.minCoeff() >= lo - 1e-12);
      CHECK(u.maxCoeff() <= hi + 1e-12);
    }
  }
}

TEST_CASE("query") {
  const auto h2 = TaskSpec::heat(2);
  const ScenarioInput x(h2, heat_input(0.05, 0.2, 0.4));
  const auto r0 = query(h2, x, 0);
  CHECK(r0.cost == 1.0);
  CHECK(r0.output == solve_heat(x, 16));
  const auto h3 = TaskSpec::heat(3);
  const auto r2 = query(h3, ScenarioInput(h3, x.values()), 2);
  CHECK(r2.cost == 16.0);
  CHECK(r2.output.size() == 64 * 64);
  CHECK_THROWS_AS(query(h2, x, 2), DomainError);
  CHECK_THROWS_AS(query(h2, x, -1), DomainError);
}

TEST_CASE("generate_dataset") {
  const auto task = TaskSpec::heat(2);
  SUBCASE("reference-only") {
    const auto d = generate_dataset(task, {8, 8}, 8, 3);
    CHECK_NOTHROW(d.validate());
    for (const auto& lv : d.levels) {
      CHECK(lv.size() == 8);
      CHECK(std::set<std::int64_t>(lv.scenario_ids.begin(), lv.scenario_ids.end()) ==
            std::set<std::int64_t>(d.reference_ids.begin(), d.reference_ids.end()));
    }
    CHECK(d.levels[0].inputs == d.levels[1].inputs);
  }
  SUBCASE("no references, disjoint levels") {
    const auto d = generate_dataset(task, {5, 3}, 0, 3);
    CHECK(d.levels[0].size() == 5);
    CHECK(d.levels[1].size() == 3);
    CHECK(d.reference_ids.empty());
    std::set<std::int64_t> ids(d.levels[0].scenario_ids.begin(),
                               d.levels[0].scenario_ids.end());
    for (auto id : d.levels[1].scenario_ids) CHECK(ids.count(id) == 0);
    CHECK(d.levels[1].outputs.cols() == 1024);
  }
  SUBCASE("determinism") {
    const auto a = generate_dataset(task, {6, 4}, 2, 42);
    const auto b = generate_dataset(task, {6, 4}, 2, 42);
    const auto c = generate_dataset(task, {6, 4}, 2, 43);
    for (int k = 0; k < 2; ++k) {
      CHECK(a.levels[k].inputs == b.levels[k].inputs);
      CHECK(a.levels[k].outputs == b.levels[k].outputs);
      CHECK(a.levels[k].scenario_ids == b.levels[k].scenario_ids);
    }
    CHECK(a.levels[0].inputs != c.levels[0].inputs);
    // Samples lie inside the task box.
    for (int k = 0; k < 2; ++k)
      for (Eigen::Index i = 0; i < a.levels[k].size(); ++i) {
        CHECK((a.levels[k].inputs.row(i).transpose().array() >= task.lower.array()).all());
        CHECK((a.levels[k].inputs.row(i).transpose().array() <= task.upper.array()).all());
      }
  }
  SUBCASE("invalid counts") {
    CHECK_THROWS_AS(generate_dataset(task, {4, 2}, 3, 0), DomainError);
    CHECK_THROWS_AS(generate_dataset(task, {4}, 0, 0), DomainError);
    CHECK_THROWS_AS(generate_dataset(task, {4, -1}, 0, 0), DomainError);
  }
  SUBCASE("validate catches a mismatched reference") {
    auto d = generate_dataset(task, {3, 3}, 2, 1);
    d.levels[1].inputs(0, 1) += 0.01;
    CHECK_THROWS_AS(d.validate(), ContractError);
  }
}

TEST_CASE("normalize_inputs") {
  const auto task = TaskSpec::heat();
  MatrixXd x(2, 3);
  x << 0.01, -1, 1, 0.1, 0, -1;
  const MatrixXd n = normalize_inputs(task, x);
  CHECK(n(0, 0) == doctest::Approx(0.0));
  CHECK(n(1, 0) == doctest::Approx(1.0));
  CHECK(n(1, 1) == doctest::Approx(0.5));
  CHECK(n(0, 2) == doctest::Approx(1.0));
}
