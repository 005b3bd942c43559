#include "mfdal/acquisition.hpp"

#include <cmath>
#include <limits>

#include "mfdal/errors.hpp"

namespace mfdal {
namespace {

using Eigen::MatrixXd;

void require_trained(const SurrogateModel& model, const char* who) {
  if (!model.trained())
    throw DomainError(std::string(who) + ": model is untrained");
}

void check_candidate(const SurrogateModel& model, const QueryCandidate& c) {
  if (c.level < 0 || c.level >= model.levels())
    throw DomainError("candidate has unknown level " + std::to_string(c.level));
  detail::require(c.cost > 0.0, "candidate cost must be positive");
  detail::require(c.x.size() == model.input_dim(),
                  "candidate input width mismatch");
}

// MF-LIG for pool[which[i]], all at one level, noise keyed by which[i].
void score_level(const SurrogateModel& model, const PosteriorState& state,
                 std::span<const QueryCandidate> pool,
                 std::span<const std::size_t> which, int level, int n_y,
                 std::uint64_t seed, std::vector<double>& out,
                 std::span<const std::size_t> out_slots) {
  const int dz = model.latent_dim();
  const int dy = model.output_dim(level);
  const auto m = static_cast<Eigen::Index>(which.size());
  const DiagGaussian q = state.posterior(level);

  MatrixXd x(m, model.input_dim());
  for (Eigen::Index i = 0; i < m; ++i) x.row(i) = pool[which[i]].x.transpose();
  const MatrixXd f = model.feature_scaling().apply(x);

  // Row i * n_y + s is draw s of candidate i.
  MatrixXd feats(m * n_y, f.cols()), latents(m * n_y, dz), eps_y(m * n_y, dy);
  for (Eigen::Index i = 0; i < m; ++i) {
    Rng rng = substream(seed, {stream::acquisition, which[i]});
    const MatrixXd ez = standard_normal(n_y, dz, rng);
    const MatrixXd ey = standard_normal(n_y, dy, rng);
    for (int s = 0; s < n_y; ++s) {
      const Eigen::Index r = i * n_y + s;
      feats.row(r) = f.row(i);
      latents.row(r) = (q.mean().array() +
                        q.var().array().sqrt() * ez.row(s).transpose().array())
                           .transpose();
      eps_y.row(r) = ey.row(s);
    }
  }
  const auto dec = decode_batch(model, level, feats, latents);
  const MatrixXd y = dec.mean + (dec.var.array().sqrt() * eps_y.array()).matrix();
  const auto enc = encode_batch(model, level, feats, y);

  const int top = model.top_level();
  const NaturalParams base = state.natural(top);
  const DiagGaussian current = base.to_gaussian();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double cost = pool[which[i]].cost;
    double sum = 0.0;
    for (int s = 0; s < n_y; ++s) {
      const Eigen::Index r = i * n_y + s;
      NaturalParams n = base;
      if (level == top)
        n.add(enc.local_mean.row(r).transpose(), enc.local_var.row(r).transpose());
      n.add(enc.global_mean.row(r).transpose(), enc.global_var.row(r).transpose());
      sum += kl(n.to_gaussian(), current);
    }
    out[out_slots[i]] = sum / n_y / cost;
  }
}

std::vector<double> mf_lig_pool(const SurrogateModel& model,
                                const PosteriorState& state,
                                std::span<const QueryCandidate> pool,
                                std::span<const std::size_t> which, int n_y,
                                std::uint64_t seed) {
  require_trained(model, "mf_lig_score");
  if (n_y < 1) throw DomainError("mf_lig_score: n_y must be >= 1");
  std::vector<double> out(which.size());
  for (int k = 0; k < model.levels(); ++k) {
    std::vector<std::size_t> idx, slots;
    for (std::size_t i = 0; i < which.size(); ++i) {
      check_candidate(model, pool[which[i]]);
      if (pool[which[i]].level == k) {
        idx.push_back(which[i]);
        slots.push_back(i);
      }
    }
    if (!idx.empty()) score_level(model, state, pool, idx, k, n_y, seed, out, slots);
  }
  return out;
}

std::vector<double> variance_pool(const SurrogateModel& model,
                                  const PosteriorState& state,
                                  std::span<const QueryCandidate> pool,
                                  std::span<const std::size_t> which) {
  require_trained(model, "variance_score");
  std::vector<double> out(which.size());
  for (int k = 0; k < model.levels(); ++k) {
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < which.size(); ++i) {
      check_candidate(model, pool[which[i]]);
      if (pool[which[i]].level == k) slots.push_back(i);
    }
    if (slots.empty()) continue;
    MatrixXd x(static_cast<Eigen::Index>(slots.size()), model.input_dim());
    for (std::size_t i = 0; i < slots.size(); ++i)
      x.row(i) = pool[which[slots[i]]].x.transpose();
    const Prediction p = predict(model, state, k, x);
    for (std::size_t i = 0; i < slots.size(); ++i)
      out[slots[i]] = p.var.row(i).array().log().mean() / pool[which[slots[i]]].cost;
  }
  return out;
}

}  // namespace

double mf_lig_from_encodings(const SurrogateModel& model,
                             const PosteriorState& state,
                             std::span<const ContextEncoding> encodings,
                             double cost) {
  detail::require(!encodings.empty(), "mf_lig: no encodings");
  detail::require(cost > 0.0, "mf_lig: cost must be positive");
  const int top = model.top_level();
  const DiagGaussian current = state.posterior(top);
  double sum = 0.0;
  for (const auto& e : encodings) {
    NaturalParams n = state.natural(top);
    if (e.level == top) n.add(e.local.mean().array(), e.local.var().array());
    n.add(e.global.mean().array(), e.global.var().array());
    sum += kl(n.to_gaussian(), current);
  }
  return sum / static_cast<double>(encodings.size()) / cost;
}

double mf_lig_score(const SurrogateModel& model, const PosteriorState& state,
                    const QueryCandidate& candidate, int n_y,
                    std::uint64_t seed, std::size_t index) {
  // A one-element view whose noise key is `index`.
  std::vector<QueryCandidate> pool(index + 1);
  pool[index] = candidate;
  const std::size_t which[] = {index};
  return mf_lig_pool(model, state, pool, which, n_y, seed)[0];
}

Scorer mf_lig_scorer(const SurrogateModel& model, int n_y, std::uint64_t seed) {
  return [&model, n_y, seed](const PosteriorState& state,
                             std::span<const QueryCandidate> pool,
                             std::span<const std::size_t> which) {
    return mf_lig_pool(model, state, pool, which, n_y, seed);
  };
}

double random_score(std::uint64_t seed, std::size_t index) {
  return unit_interval(substream_seed(seed, {stream::random_score, index}));
}

Scorer random_scorer(std::uint64_t seed) {
  return [seed](const PosteriorState&, std::span<const QueryCandidate>,
                std::span<const std::size_t> which) {
    std::vector<double> out;
    for (auto i : which) out.push_back(random_score(seed, i));
    return out;
  };
}

double variance_score(const SurrogateModel& model, const PosteriorState& state,
                      const QueryCandidate& candidate) {
  const std::size_t which[] = {0};
  return variance_pool(model, state, std::span(&candidate, 1), which)[0];
}

Scorer variance_scorer(const SurrogateModel& model) {
  return [&model](const PosteriorState& state,
                  std::span<const QueryCandidate> pool,
                  std::span<const std::size_t> which) {
    return variance_pool(model, state, pool, which);
  };
}

Scorer make_scorer(const std::string& name, const SurrogateModel& model,
                   std::uint64_t seed, int n_y) {
  if (name == "mf_lig") return mf_lig_scorer(model, n_y, seed);
  if (name == "random") return random_scorer(seed);
  if (name == "variance") return variance_scorer(model);
  throw DomainError("unknown acquisition '" + name +
                    "' (expected mf_lig, random or variance)");
}

QueryBatch greedy_batch(const SurrogateModel& model, const PosteriorState& state,
                        std::span<const QueryCandidate> pool, double budget,
                        const Scorer& scorer, GreedyOptions options) {
  if (pool.empty()) throw DomainError("greedy_batch: empty candidate pool");
  if (!(budget >= 0.0)) throw DomainError("greedy_batch: budget must be >= 0");
  for (const auto& c : pool) check_candidate(model, c);

  PosteriorState conditioned = state;
  std::vector<bool> taken(pool.size(), false);
  QueryBatch batch;
  while (batch.total_cost <= budget) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!taken[i] &&
          (!options.strict_budget || batch.total_cost + pool[i].cost <= budget))
        open.push_back(i);
    if (open.empty()) break;

    const std::vector<double> scores = scorer(conditioned, pool, open);
    detail::require(scores.size() == open.size(),
                    "scorer returned the wrong number of scores");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < open.size(); ++j) {
      if (!std::isfinite(scores[j]))
        throw DomainError("acquisition score for candidate " +
                          std::to_string(open[j]) + " is not finite");
      if (scores[j] > best_score) {  // strict: ties keep the lower index
        best_score = scores[j];
        best = j;
      }
    }
    const std::size_t pick = open[best];
    const QueryCandidate& c = pool[pick];
    const Prediction p = predict(model, conditioned, c.level, c.x.transpose());
    const Eigen::VectorXd label = p.mean.row(0).transpose();
    conditioned.add(encode(model, c.level, c.x, label));
    taken[pick] = true;
    batch.entries.push_back({c, label, best_score, pick});
    batch.total_cost += c.cost;
  }
  return batch;
}

}  // namespace mfdal
