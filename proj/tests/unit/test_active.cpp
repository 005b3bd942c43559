#include <doctest.h>

#include <cmath>
#include <set>

#include "mfdal/active.hpp"
#include "mfdal/errors.hpp"

using namespace mfdal;

namespace {

std::set<std::int64_t> ids_of(const LevelSamples& lv) {
  return {lv.scenario_ids.begin(), lv.scenario_ids.end()};
}

SurrogateConfig tiny_model() {
  SurrogateConfig c;
  c.latent_dim = 4;
  c.hidden_width = 16;
  c.epochs = 30;
  return c;
}

ActiveConfig tiny_active(const std::string& acquisition = "mf_lig") {
  ActiveConfig a;
  a.iterations = 2;
  a.budget_per_iteration = 4.0;
  a.pool_size = 6;
  a.acquisition = acquisition;
  a.retrain_epochs = 10;
  a.n_reference = 3;
  a.test_size = 16;
  a.n_y_samples = 2;
  return a;
}

}  // namespace

TEST_CASE("passive settings") {
  const auto task = TaskSpec::heat(2);
  SUBCASE("full") {
    const auto d = build_passive_setting(task, PassiveSetting::full, {64, 64}, 8, 0);
    CHECK(d.levels[0].inputs == d.levels[1].inputs);
    CHECK(d.levels[1].size() == 64);
    CHECK(d.reference_ids.size() == 8);
    CHECK_NOTHROW(d.validate());
  }
  SUBCASE("nested") {
    const auto d = build_passive_setting(task, PassiveSetting::nested, {64, 8}, 8, 0);
    const auto low = ids_of(d.levels[0]);
    for (auto id : d.levels[1].scenario_ids) CHECK(low.count(id) == 1);
    CHECK(d.levels[1].inputs == d.levels[0].inputs.topRows(8));
  }
  SUBCASE("non-nested") {
    const auto d = build_passive_setting(task, PassiveSetting::non_nested, {64, 8}, 8, 0);
    const auto low = ids_of(d.levels[0]), high = ids_of(d.levels[1]);
    std::set<std::int64_t> both;
    for (auto id : high)
      if (low.count(id)) both.insert(id);
    CHECK(both == std::set<std::int64_t>(d.reference_ids.begin(), d.reference_ids.end()));
  }
  SUBCASE("settings share the reference scenarios") {
    const auto a = build_passive_setting(task, PassiveSetting::full, {16, 16}, 8, 5);
    const auto b = build_passive_setting(task, PassiveSetting::non_nested, {16, 16}, 8, 5);
    CHECK(a.levels[1].inputs.topRows(8) == b.levels[1].inputs.topRows(8));
  }
  SUBCASE("inconsistent sizes") {
    CHECK_THROWS_AS(build_passive_setting(task, PassiveSetting::nested, {8, 64}, 8, 0),
                    DomainError);
    CHECK_THROWS_AS(build_passive_setting(task, PassiveSetting::full, {64, 8}, 8, 0),
                    DomainError);
    CHECK_THROWS_AS(build_passive_setting(task, PassiveSetting::full, {4, 4}, 8, 0),
                    DomainError);
    CHECK_THROWS_AS(build_passive_setting(task, PassiveSetting::full, {4}, 0, 0),
                    DomainError);
  }
  CHECK(passive_setting_from_string("non-nested") == PassiveSetting::non_nested);
  CHECK_THROWS_AS(passive_setting_from_string("partial"), DomainError);
}

TEST_CASE("test set and pools") {
  const auto task = TaskSpec::heat(2);
  const auto t1 = make_test_set(task, 20, 3);
  const auto t2 = make_test_set(task, 20, 3);
  CHECK(t1.inputs == t2.inputs);
  CHECK(t1.outputs[1] == t2.outputs[1]);
  CHECK(t1.outputs[1].cols() == 1024);

  const auto pool = make_pool(task, 5, 3, 1);
  CHECK(pool.size() == 10);
  CHECK(pool[7].level == 1);
  CHECK(pool[7].cost == 4.0);
  const auto train = generate_dataset(task, {8, 8}, 8, 3);
  std::set<std::vector<double>> seen;
  auto key = [](const Eigen::VectorXd& x) {
    return std::vector<double>(x.data(), x.data() + x.size());
  };
  for (Eigen::Index i = 0; i < t1.inputs.rows(); ++i)
    seen.insert(key(t1.inputs.row(i).transpose()));
  for (const auto& c : pool) CHECK(seen.count(key(c.x)) == 0);
  for (Eigen::Index i = 0; i < train.levels[0].size(); ++i)
    CHECK(seen.count(key(train.levels[0].inputs.row(i).transpose())) == 0);
  CHECK(make_pool(task, 5, 3, 2)[0].x != pool[0].x);
}

TEST_CASE("run_active") {
  const auto task = TaskSpec::heat(2);
  SUBCASE("zero iterations gives the baseline record only") {
    auto cfg = tiny_active();
    cfg.iterations = 0;
    const auto h = run_active(task, tiny_model(), cfg, 1);
    REQUIRE(h.records.size() == 1);
    CHECK(h.records[0].cumulative_cost == 0.0);
    CHECK(h.records[0].nrmse.size() == 2);
  }
  SUBCASE("bookkeeping, true labels and determinism") {
    const auto cfg = tiny_active();
    std::vector<std::int64_t> sizes;
    const auto h = run_active(task, tiny_model(), cfg, 7,
                              [&](const IterationRecord& r, const MultiFidelityDataset& d,
                                  const SurrogateModel&) {
                                sizes.push_back(d.total_points());
                                // Every stored output is the simulator's.
                                for (int k = 0; k < 2; ++k)
                                  for (Eigen::Index i = 0; i < d.levels[k].size(); ++i) {
                                    const ScenarioInput x(task, d.levels[k].inputs.row(i).transpose());
                                    CHECK(d.levels[k].outputs.row(i).transpose() ==
                                          simulate(task, x, k));
                                  }
                                CHECK(r.nrmse.size() == 2);
                              });
    REQUIRE(h.records.size() == 3);
    REQUIRE(h.batches.size() == 2);
    double max_cost = 4.0;
    for (int t = 1; t <= 2; ++t) {
      const auto& r = h.records[t];
      CHECK(r.cumulative_cost >= h.records[t - 1].cumulative_cost);
      CHECK(r.cumulative_cost <= t * (cfg.budget_per_iteration + max_cost));
      CHECK(sizes[t] == sizes[t - 1] + static_cast<std::int64_t>(h.batches[t - 1].entries.size()));
      CHECK(r.n_queried[0] + r.n_queried[1] ==
            static_cast<int>(h.batches[0].entries.size() +
                             (t == 2 ? h.batches[1].entries.size() : 0)));
      for (double v : r.nrmse) CHECK(std::isfinite(v));
    }
    const auto again = run_active(task, tiny_model(), cfg, 7);
    for (int t = 0; t <= 2; ++t) {
      CHECK(again.records[t].nrmse == h.records[t].nrmse);
      CHECK(again.records[t].cumulative_cost == h.records[t].cumulative_cost);
      CHECK(again.records[t].n_queried == h.records[t].n_queried);
    }
  }
  SUBCASE("reference acquisitions and cold start run") {
    for (const char* acq : {"random", "variance"}) {
      auto cfg = tiny_active(acq);
      cfg.iterations = 1;
      cfg.cold_start = std::string(acq) == "random";
      const auto h = run_active(task, tiny_model(), cfg, 2);
      CHECK(h.records.size() == 2);
    }
  }
  SUBCASE("invalid config") {
    auto cfg = tiny_active("bald");
    CHECK_THROWS_AS(run_active(task, tiny_model(), cfg, 0), DomainError);
  }
}
