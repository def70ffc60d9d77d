#pragma once

// Exhaustive expectimin over the full history tree of a small instance.
// Shares no code with the solvers: it works on raw location indices,
// enumerates every action at every history and takes exact expectations
// over wake-up locations and probe outcomes.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

namespace oracle {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kNone = -1;

struct Instance {
  std::vector<std::vector<double>> pmf;  // [location][bin]
  std::vector<double> values;            // reward value of each bin
  int n_stages = 1;
  double eta = 1.0;
  double delta = 0.1;
  double tau = 0.2;

  int locations() const { return static_cast<int>(pmf.size()); }
  int bins() const { return static_cast<int>(values.size()); }
};

/// Costs of the three actions at one state (+inf when unavailable).
struct ActionCosts {
  double stop = kInf;
  double probe = kInf;
  double cont = kInf;

  double best() const { return std::min({stop, probe, cont}); }
};

/// Restricted class: besides the best probed relay at most one unprobed
/// relay is awake. When a relay wakes up while one is retained, the chooser
/// keeps either of them or neither.
class Restricted {
 public:
  explicit Restricted(Instance inst) : in_(std::move(inst)) {}

  ActionCosts costs(int k, int b, int retained) {
    ActionCosts c;
    if (b != kNone) c.stop = -in_.eta * in_.values[b];
    if (retained != kNone) {
      double e = 0.0;
      for (int r = 0; r < in_.bins(); ++r) {
        const double p = in_.pmf[retained][r];
        if (p > 0.0) e += p * value(k, b == kNone ? r : std::max(b, r), kNone);
      }
      c.probe = in_.eta * in_.delta + e;
    }
    if (k < in_.n_stages) {
      double e = 0.0;
      for (int u = 0; u < in_.locations(); ++u) {
        double best = std::min(value(k + 1, b, u), value(k + 1, b, kNone));
        if (retained != kNone) best = std::min(best, value(k + 1, b, retained));
        e += best;
      }
      c.cont = in_.tau + e / in_.locations();
    }
    return c;
  }

  double value(int k, int b, int retained) {
    const auto key = std::make_tuple(k, b, retained);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double v = costs(k, b, retained).best();
    memo_[key] = v;
    return v;
  }

  double initial_value() {
    double v = 0.0;
    for (int l = 0; l < in_.locations(); ++l) v += value(1, kNone, l);
    return v / in_.locations();
  }

 private:
  Instance in_;
  std::map<std::tuple<int, int, int>, double> memo_;
};

/// Complete class: every woken relay stays awake until probed.
class Complete {
 public:
  explicit Complete(Instance inst) : in_(std::move(inst)) {}

  ActionCosts costs(int k, int b, const std::vector<int>& awake) {
    ActionCosts c;
    if (b != kNone) c.stop = -in_.eta * in_.values[b];
    for (std::size_t i = 0; i < awake.size(); ++i) {
      std::vector<int> rest = awake;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
      double e = 0.0;
      for (int r = 0; r < in_.bins(); ++r) {
        const double p = in_.pmf[awake[i]][r];
        if (p > 0.0) e += p * value(k, b == kNone ? r : std::max(b, r), rest);
      }
      c.probe = std::min(c.probe, in_.eta * in_.delta + e);
    }
    if (k < in_.n_stages) {
      double e = 0.0;
      for (int u = 0; u < in_.locations(); ++u) {
        std::vector<int> more = awake;
        more.push_back(u);
        e += value(k + 1, b, more);
      }
      c.cont = in_.tau + e / in_.locations();
    }
    return c;
  }

  /// Cost of probing one particular awake relay.
  double probe_cost(int k, int b, const std::vector<int>& awake, std::size_t which) {
    std::vector<int> rest = awake;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(which));
    double e = 0.0;
    for (int r = 0; r < in_.bins(); ++r) {
      const double p = in_.pmf[awake[which]][r];
      if (p > 0.0) e += p * value(k, b == kNone ? r : std::max(b, r), rest);
    }
    return in_.eta * in_.delta + e;
  }

  double value(int k, int b, std::vector<int> awake) {
    std::sort(awake.begin(), awake.end());
    auto key = std::make_tuple(k, b, awake);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double v = costs(k, b, awake).best();
    memo_[key] = v;
    return v;
  }

  double initial_value() {
    double v = 0.0;
    for (int l = 0; l < in_.locations(); ++l) v += value(1, kNone, {l});
    return v / in_.locations();
  }

 private:
  Instance in_;
  std::map<std::tuple<int, int, std::vector<int>>, double> memo_;
};

}  // namespace oracle
