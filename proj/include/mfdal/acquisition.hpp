#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mfdal/dmfnp.hpp"

namespace mfdal {

struct QueryCandidate {
  Eigen::VectorXd x;  // physical scenario parameters
  int level = 0;
  double cost = 1.0;
};

struct QuerySelection {
  QueryCandidate candidate;
  Eigen::VectorXd pseudo_label;  // plug-in predictive mean used to condition
  double score = 0.0;            // score at selection time
  std::size_t pool_index = 0;
};

struct QueryBatch {
  std::vector<QuerySelection> entries;  // in selection order
  double total_cost = 0.0;
};

/// Scores pool[i] for every i in `which`, conditioning on `state`.
using Scorer = std::function<std::vector<double>(
    const PosteriorState& state, std::span<const QueryCandidate> pool,
    std::span<const std::size_t> which)>;

// ---- MF-LIG -----------------------------------------------------------------

/// Mean over `encodings` of KL(q(z_K | state + e) || q(z_K | state)), divided
/// by `cost`. All encodings belong to one candidate at `level`; only their
/// global part moves z_K unless `level` is the top level.
double mf_lig_from_encodings(const SurrogateModel& model,
                             const PosteriorState& state,
                             std::span<const ContextEncoding> encodings,
                             double cost);

/// MF-LIG of one candidate: n_y outputs are drawn at (x, level) by sampling
/// z_level from the current posterior and then y from the decoder; each is
/// encoded and scored by mf_lig_from_encodings. `index` keys the noise, so a
/// candidate keeps the same draws when re-scored under a new state.
double mf_lig_score(const SurrogateModel& model, const PosteriorState& state,
                    const QueryCandidate& candidate, int n_y = 8,
                    std::uint64_t seed = 0, std::size_t index = 0);

/// Batched MF-LIG over a pool with noise keyed by (seed, pool index, draw).
Scorer mf_lig_scorer(const SurrogateModel& model, int n_y = 8,
                     std::uint64_t seed = 0);

// ---- Reference acquisitions -------------------------------------------------

/// Uniform in [0, 1), a pure function of (seed, index).
double random_score(std::uint64_t seed, std::size_t index);
Scorer random_scorer(std::uint64_t seed);

/// (1 / cost) * mean over components of the log plug-in predictive variance.
double variance_score(const SurrogateModel& model, const PosteriorState& state,
                      const QueryCandidate& candidate);
Scorer variance_scorer(const SurrogateModel& model);

/// mf_lig | random | variance.
Scorer make_scorer(const std::string& name, const SurrogateModel& model,
                   std::uint64_t seed, int n_y = 8);

// ---- Greedy batch selection -------------------------------------------------

struct GreedyOptions {
  // Only select candidates whose cost still fits in the budget. Off by
  // default: the plain loop runs while the spent cost is <= budget and may
  // overshoot by at most one candidate's cost.
  bool strict_budget = false;
};

/// Greedy budget-constrained selection. Each pick is the argmax score among
/// unselected candidates (ties to the lowest index); its plug-in predictive
/// mean is encoded and fused into a copy of `state` before the next pick.
QueryBatch greedy_batch(const SurrogateModel& model, const PosteriorState& state,
                        std::span<const QueryCandidate> pool, double budget,
                        const Scorer& scorer, GreedyOptions options = {});

}  // namespace mfdal
