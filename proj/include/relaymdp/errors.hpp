#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace relaymdp {

/// Invalid or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function (e.g. zero distance).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two members of a reward family are not stochastically comparable.
class OrderError : public std::runtime_error {
 public:
  OrderError(std::size_t first, std::size_t second)
      : std::runtime_error("reward family is not totally stochastically ordered: members " +
                           std::to_string(first) + " and " + std::to_string(second) +
                           " have crossing CDFs"),
        first_(first),
        second_(second) {}

  std::size_t first() const noexcept { return first_; }
  std::size_t second() const noexcept { return second_; }

 private:
  std::size_t first_;
  std::size_t second_;
};

/// A stopping set extracted from the cost tables is not an up-set of the reward grid.
class NonThresholdError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A policy produced an action that is not available in the current state.
class IllegalActionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The complete-class solver would exceed its state budget.
class BudgetExceededError : public std::runtime_error {
 public:
  BudgetExceededError(std::uint64_t projected, std::uint64_t budget)
      : std::runtime_error("complete-class state space needs " + std::to_string(projected) +
                           " entries, budget is " + std::to_string(budget) +
                           "; reduce n_locations, n_reward_bins or n_relays"),
        projected_(projected),
        budget_(budget) {}

  std::uint64_t projected() const noexcept { return projected_; }
  std::uint64_t budget() const noexcept { return budget_; }

 private:
  std::uint64_t projected_;
  std::uint64_t budget_;
};

/// Requested effective reward is above what any multiplier on the grid achieves.
class InfeasibleGammaError : public std::runtime_error {
 public:
  InfeasibleGammaError(double gamma, double supremum)
      : std::runtime_error("effective reward target " + std::to_string(gamma) +
                           " is infeasible; best achievable on the multiplier grid is " +
                           std::to_string(supremum)),
        gamma_(gamma),
        supremum_(supremum) {}

  double gamma() const noexcept { return gamma_; }
  double supremum() const noexcept { return supremum_; }

 private:
  double gamma_;
  double supremum_;
};

/// Unknown state passed to a table lookup.
class UnknownStateError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace relaymdp
