#pragma once

#include <stdexcept>
#include <string>

namespace mfdal {

/// Caller broke an operation's preconditions (dimension mismatch, bad shape).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inputs are well-formed but outside the operation's domain
/// (out-of-range scenario, unknown fidelity, untrained model, empty data).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Optimization produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint on disk does not match what the caller expects.
class IncompatibleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV, JSON).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

inline void require_domain(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace mfdal
