#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mfdal/acquisition.hpp"
#include "mfdal/errors.hpp"
#include "support.hpp"

using namespace mfdal;
using mfdal::testing::MicroProblem;

namespace {

ContextEncoding hand_encoding(double lm, double lv, double gm, double gv,
                              int level) {
  return {DiagGaussian(Eigen::VectorXd::Constant(1, lm),
                       Eigen::VectorXd::Constant(1, lv)),
          DiagGaussian(Eigen::VectorXd::Constant(1, gm),
                       Eigen::VectorXd::Constant(1, gv)),
          level, -1};
}

// KL(N(m1, v1) || N(m0, v0)) in one dimension.
double kl_1d(double m1, double v1, double m0, double v0) {
  return 0.5 * (v1 / v0 + (m1 - m0) * (m1 - m0) / v0 - 1.0 + std::log(v0 / v1));
}

MicroProblem trained_micro() {
  auto p = MicroProblem::make(8);
  train(p.model, p.levels, p.reference_ids, 60);
  return p;
}

std::vector<QueryCandidate> micro_pool(int n, double cost_low = 1.0,
                                       double cost_high = 3.0) {
  std::vector<QueryCandidate> pool;
  for (int i = 0; i < n; ++i)
    pool.push_back({Eigen::VectorXd::Constant(1, 0.1 * i), i % 2,
                    i % 2 ? cost_high : cost_low});
  return pool;
}

}  // namespace

TEST_CASE("MF-LIG against a hand-computed fuse and KL") {
  SurrogateConfig cfg;
  cfg.latent_dim = 1;
  cfg.hidden_width = 4;
  SurrogateModel m(1, {1, 1}, cfg, FeatureScaling::identity(1));
  const std::vector<ContextEncoding> ctx = {hand_encoding(0.5, 2.0, -0.3, 1.5, 0),
                                            hand_encoding(1.0, 0.5, 0.8, 3.0, 1)};
  const PosteriorState state(m, ctx);

  // Current z_K: prior N(0,1), top-level local, both globals.
  const double p0 = 1.0 + 1.0 / 0.5 + 1.0 / 1.5 + 1.0 / 3.0;
  const double s0 = 1.0 / 0.5 + -0.3 / 1.5 + 0.8 / 3.0;
  const double m0 = s0 / p0, v0 = 1.0 / p0;

  SUBCASE("low-level candidate adds its global only") {
    const auto e = hand_encoding(7.0, 0.2, 0.4, 0.7, 0);
    const double p1 = p0 + 1.0 / 0.7, s1 = s0 + 0.4 / 0.7;
    const double want = kl_1d(s1 / p1, 1.0 / p1, m0, v0);
    CHECK(mf_lig_from_encodings(m, state, std::span(&e, 1), 1.0) ==
          doctest::Approx(want).epsilon(1e-12));
    CHECK(mf_lig_from_encodings(m, state, std::span(&e, 1), 4.0) ==
          doctest::Approx(want / 4.0).epsilon(1e-12));
  }
  SUBCASE("top-level candidate adds local and global") {
    const auto e = hand_encoding(-0.6, 0.9, 0.4, 0.7, 1);
    const double p1 = p0 + 1.0 / 0.9 + 1.0 / 0.7, s1 = s0 - 0.6 / 0.9 + 0.4 / 0.7;
    CHECK(mf_lig_from_encodings(m, state, std::span(&e, 1), 1.0) ==
          doctest::Approx(kl_1d(s1 / p1, 1.0 / p1, m0, v0)).epsilon(1e-12));
    // Same as the KL of hypothetical_posterior against the current posterior.
    CHECK(mf_lig_from_encodings(m, state, std::span(&e, 1), 1.0) ==
          doctest::Approx(kl(hypothetical_posterior(m, ctx, e), state.posterior(1)))
              .epsilon(1e-12));
  }
  SUBCASE("uninformative candidate scores zero") {
    const auto e = hand_encoding(3.0, 1.0, 5.0, 1e12, 0);
    CHECK(mf_lig_from_encodings(m, state, std::span(&e, 1), 1.0) <= 1e-8);
  }
  SUBCASE("averages over draws") {
    const std::vector<ContextEncoding> draws = {hand_encoding(0, 1, 0.4, 0.7, 0),
                                                hand_encoding(0, 1, -2.0, 0.3, 0)};
    const double a = mf_lig_from_encodings(m, state, std::span(&draws[0], 1), 2.0);
    const double b = mf_lig_from_encodings(m, state, std::span(&draws[1], 1), 2.0);
    CHECK(mf_lig_from_encodings(m, state, draws, 2.0) ==
          doctest::Approx(0.5 * (a + b)).epsilon(1e-14));
  }
}

TEST_CASE("mf_lig_score") {
  auto p = trained_micro();
  const PosteriorState state(p.model, encode_all(p.model, p.levels));
  const QueryCandidate c{Eigen::VectorXd::Constant(1, 0.65), 0, 1.0};

  const double s = mf_lig_score(p.model, state, c, 8, 3, 5);
  CHECK(s >= 0.0);
  CHECK(mf_lig_score(p.model, state, c, 8, 3, 5) == s);
  CHECK(mf_lig_score(p.model, state, c, 8, 4, 5) != s);

  QueryCandidate twice = c;
  twice.cost = 2.0;
  CHECK(mf_lig_score(p.model, state, twice, 8, 3, 5) == s / 2.0);

  // Batched scorer agrees with single scoring at the same pool index.
  const auto pool = micro_pool(6);
  const std::vector<std::size_t> which = {4, 1, 3};
  const auto batched = mf_lig_scorer(p.model, 8, 3)(state, pool, which);
  for (std::size_t j = 0; j < which.size(); ++j)
    CHECK(batched[j] == doctest::Approx(
                            mf_lig_score(p.model, state, pool[which[j]], 8, 3, which[j]))
                            .epsilon(1e-12));

  // Context order does not matter.
  auto enc = encode_all(p.model, p.levels);
  std::reverse(enc.begin(), enc.end());
  const PosteriorState reversed(p.model, enc);
  CHECK(std::abs(mf_lig_score(p.model, reversed, c, 8, 3, 5) - s) <= 1e-10);

  CHECK_THROWS_AS(mf_lig_score(p.model, state, c, 0, 3), DomainError);
  auto untrained = MicroProblem::make(8);
  CHECK_THROWS_AS(
      mf_lig_score(untrained.model, PosteriorState(untrained.model), c), DomainError);
  CHECK_THROWS_AS(mf_lig_score(p.model, state, {c.x, 2, 1.0}), DomainError);
}

TEST_CASE("random_score") {
  for (std::size_t i = 0; i < 1000; ++i) {
    const double r = random_score(9, i);
    CHECK(r >= 0.0);
    CHECK(r < 1.0);
  }
  CHECK(random_score(9, 4) == random_score(9, 4));
  auto ranking = [](std::uint64_t seed) {
    std::vector<std::size_t> idx(20);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return random_score(seed, a) < random_score(seed, b);
    });
    return idx;
  };
  CHECK(ranking(1) == ranking(1));
  CHECK(ranking(1) != ranking(2));
}

TEST_CASE("variance_score") {
  auto p = trained_micro();
  const PosteriorState state(p.model, encode_all(p.model, p.levels));
  QueryCandidate c{Eigen::VectorXd::Constant(1, 0.3), 1, 1.0};
  const double one = variance_score(p.model, state, c);
  CHECK(variance_score(p.model, state, c) == one);
  c.cost = 2.0;
  CHECK(one == 2.0 * variance_score(p.model, state, c));
  const auto plug = predict(p.model, state, 1, c.x.transpose());
  CHECK(one == doctest::Approx(plug.var.array().log().mean()).epsilon(1e-14));
  auto untrained = MicroProblem::make(8);
  CHECK_THROWS_AS(variance_score(untrained.model, PosteriorState(untrained.model), c),
                  DomainError);
}

TEST_CASE("greedy_batch") {
  auto p = trained_micro();
  const PosteriorState state(p.model, encode_all(p.model, p.levels));
  const Scorer constant = [](const PosteriorState&, std::span<const QueryCandidate>,
                             std::span<const std::size_t> which) {
    return std::vector<double>(which.size(), 1.0);
  };

  SUBCASE("zero budget selects exactly one") {
    const auto pool = micro_pool(5);
    const auto b = greedy_batch(p.model, state, pool, 0.0, mf_lig_scorer(p.model, 4, 1));
    CHECK(b.entries.size() == 1);
    CHECK(b.total_cost == b.entries[0].candidate.cost);
  }
  SUBCASE("single candidate is never repeated") {
    const std::vector<QueryCandidate> pool = {{Eigen::VectorXd::Constant(1, 0.2), 0, 1.0}};
    const auto b = greedy_batch(p.model, state, pool, 10.0, constant);
    CHECK(b.entries.size() == 1);
  }
  SUBCASE("unit costs with budget 5 give six picks in pool order") {
    const auto pool = micro_pool(10, 1.0, 1.0);
    const auto b = greedy_batch(p.model, state, pool, 5.0, constant);
    REQUIRE(b.entries.size() == 6);
    CHECK(b.total_cost == 6.0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(b.entries[i].pool_index == i);
  }
  SUBCASE("strict budget never overshoots") {
    const auto pool = micro_pool(10, 1.0, 1.0);
    CHECK(greedy_batch(p.model, state, pool, 5.0, constant, {true}).entries.size() == 5);
    CHECK(greedy_batch(p.model, state, pool, 0.0, constant, {true}).entries.empty());
  }
  SUBCASE("MF-LIG batch invariants") {
    const auto pool = micro_pool(12);
    const auto scorer = mf_lig_scorer(p.model, 4, 2);
    const auto b = greedy_batch(p.model, state, pool, 7.0, scorer);
    double total = 0.0;
    std::set<std::size_t> seen;
    PosteriorState replay = state;
    for (const auto& e : b.entries) {
      CHECK(seen.insert(e.pool_index).second);
      total += e.candidate.cost;
      // The pseudo-label is the plug-in mean under the state at selection.
      const auto pred = predict(p.model, replay, e.candidate.level, e.candidate.x.transpose());
      CHECK(e.pseudo_label == pred.mean.row(0).transpose());
      const std::size_t which[] = {e.pool_index};
      CHECK(scorer(replay, pool, which)[0] == doctest::Approx(e.score).epsilon(1e-12));
      replay.add(encode(p.model, e.candidate.level, e.candidate.x, e.pseudo_label));
      // Its information is partly spent once fused.
      CHECK(scorer(replay, pool, which)[0] < e.score);
    }
    CHECK(b.total_cost == total);
    CHECK(b.total_cost <= 7.0 + 3.0);
    CHECK(greedy_batch(p.model, state, pool, 7.0, scorer).entries.size() == b.entries.size());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(greedy_batch(p.model, state, {}, 1.0, constant), DomainError);
    CHECK_THROWS_AS(greedy_batch(p.model, state, micro_pool(2), -1.0, constant),
                    DomainError);
  }
}
