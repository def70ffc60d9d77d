#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "relaymdp/errors.hpp"

namespace relaymdp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Equal-cost window inside which actions are tie-broken (STOP > PROBE > CONTINUE).
inline constexpr double kTieTolerance = 1e-12;

/// Tolerance for structural inequalities that accumulate expectation round-off.
inline constexpr double kStructureTolerance = 1e-9;

/// Best reward among probed relays: a reward-grid bin, or none before the first probe.
class BestReward {
 public:
  constexpr BestReward() = default;
  static constexpr BestReward none() { return BestReward(); }
  static constexpr BestReward at(std::size_t bin) { return BestReward(static_cast<long>(bin)); }

  constexpr bool is_none() const noexcept { return bin_ < 0; }
  constexpr std::size_t bin() const {
    if (is_none()) throw IllegalActionError("BestReward::bin on an empty best reward");
    return static_cast<std::size_t>(bin_);
  }
  /// Index on a b-axis of length n_bins + 1 whose last slot stands for "none".
  constexpr std::size_t slot(std::size_t n_bins) const noexcept {
    return is_none() ? n_bins : static_cast<std::size_t>(bin_);
  }
  static constexpr BestReward from_slot(std::size_t slot, std::size_t n_bins) {
    return slot >= n_bins ? none() : at(slot);
  }
  /// max{b, R} after a probe revealed bin r.
  constexpr BestReward with_probe(std::size_t r) const noexcept {
    if (is_none() || static_cast<long>(r) > bin_) return at(r);
    return *this;
  }

  constexpr bool operator==(const BestReward&) const = default;

  std::string to_string() const { return is_none() ? "NONE" : std::to_string(bin_); }

 private:
  constexpr explicit BestReward(long bin) : bin_(bin) {}
  long bin_ = -1;
};

enum class ActionKind : unsigned char { stop, probe, cont, none };

inline std::string to_string(ActionKind k) {
  switch (k) {
    case ActionKind::stop: return "STOP";
    case ActionKind::probe: return "PROBE";
    case ActionKind::cont: return "CONTINUE";
    case ActionKind::none: return "NONE";
  }
  return "?";
}

/// Picks the cheapest of the available actions (+inf marks unavailable),
/// preferring STOP, then PROBE, then CONTINUE within kTieTolerance.
inline ActionKind choose_action(double stop, double probe, double cont) {
  if (std::isfinite(stop) && stop <= probe + kTieTolerance && stop <= cont + kTieTolerance)
    return ActionKind::stop;
  if (std::isfinite(probe) && probe <= cont + kTieTolerance) return ActionKind::probe;
  if (std::isfinite(cont)) return ActionKind::cont;
  return ActionKind::none;
}

/// Expected components of the Lagrangian cost under a fixed policy. `delay`
/// excludes the first inter-wake-up time; `probes` counts probes.
struct CostComponents {
  double delay = 0.0;
  double reward = 0.0;
  double probes = 0.0;

  CostComponents& operator+=(const CostComponents& o) {
    delay += o.delay;
    reward += o.reward;
    probes += o.probes;
    return *this;
  }
  CostComponents& operator*=(double s) {
    delay *= s;
    reward *= s;
    probes *= s;
    return *this;
  }
  double cost(double eta, double delta) const {
    return delay - eta * reward + eta * delta * probes;
  }
  double effective_reward(double delta) const { return reward - delta * probes; }
};

}  // namespace relaymdp
