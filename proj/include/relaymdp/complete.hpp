#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relaymdp/common.hpp"
#include "relaymdp/config.hpp"
#include "relaymdp/model.hpp"
#include "relaymdp/parallel.hpp"
#include "relaymdp/restricted.hpp"

namespace relaymdp {

/// Canonical multiset of relay types. A type is the rank of a location's
/// reward law in the family's stochastic order (0 = minimal), so a sorted
/// vector lists members from stochastically smallest to largest.
using TypeMultiset = std::vector<std::uint16_t>;

/// Bijection between size-s multisets over n types and [0, C(n+s-1, s)),
/// via the combinatorial number system on a_i + i.
class MultisetIndexer {
 public:
  MultisetIndexer() = default;
  MultisetIndexer(std::size_t n_types, std::size_t max_size)
      : n_types_(n_types), max_size_(max_size) {
    const std::size_t rows = n_types + max_size + 1;
    binom_.assign(rows * (max_size + 2), 0);
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t k = 0; k <= max_size + 1; ++k) {
        if (k == 0) binom_[n * (max_size + 2)] = 1;
        else if (n == 0) binom_[k] = 0;
        else binom_[n * (max_size + 2) + k] = choose(n - 1, k - 1) + choose(n - 1, k);
      }
    }
  }

  std::size_t n_types() const noexcept { return n_types_; }
  std::size_t max_size() const noexcept { return max_size_; }

  std::uint64_t choose(std::size_t n, std::size_t k) const {
    if (k > max_size_ + 1) return 0;
    return binom_[n * (max_size_ + 2) + k];
  }

  /// Number of multisets of the given size.
  std::uint64_t count(std::size_t size) const {
    if (size == 0) return 1;
    return choose(n_types_ + size - 1, size);
  }

  std::uint64_t rank(const TypeMultiset& sorted) const {
    std::uint64_t r = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) r += choose(sorted[i] + i, i + 1);
    return r;
  }

  void unrank(std::uint64_t r, std::size_t size, TypeMultiset& out) const {
    out.resize(size);
    std::size_t c = n_types_ + size - 1;  // exclusive upper bound on c_i
    for (std::size_t i = size; i-- > 0;) {
      std::size_t ci = c - 1;
      while (choose(ci, i + 1) > r) --ci;
      r -= choose(ci, i + 1);
      out[i] = static_cast<std::uint16_t>(ci - i);
      c = ci;
    }
  }

 private:
  std::size_t n_types_ = 0;
  std::size_t max_size_ = 0;
  std::vector<std::uint64_t> binom_;
};

/// Evaluated states of one (stage, multiset size) shell. Each multiset rank
/// owns `width` consecutive b-slots starting at `slot_begin`.
struct CompleteShell {
  std::size_t size = 0;
  std::uint64_t count = 0;
  std::size_t slot_begin = 0;
  std::size_t width = 0;
  std::vector<double> value;
  std::vector<double> delay;
  std::vector<double> reward;
  std::vector<double> probes;
  std::vector<ActionKind> action;
  std::vector<std::uint16_t> target;  ///< type probed when action == probe

  bool has_slot(std::size_t slot) const noexcept {
    return slot >= slot_begin && slot < slot_begin + width;
  }
  std::size_t at(std::uint64_t rank, std::size_t slot) const noexcept {
    return static_cast<std::size_t>(rank) * width + (slot - slot_begin);
  }
};

struct CompleteSolveOptions {
  std::uint64_t state_budget = 50'000'000;
  /// Evaluate only states reachable from (NONE, {F}) at stage 1: at stage k a
  /// multiset of size k goes with NONE, smaller multisets with a probed b.
  bool prune_unreachable = true;
  std::size_t threads = 1;
};

/// Cost-to-go of the complete class over states (k, b, multiset of unprobed types).
struct CompleteTables {
  std::size_t n_stages = 0;
  std::size_t n_bins = 0;
  std::size_t n_types = 0;
  double eta = 0.0;
  double delta = 0.0;
  double tau = 0.0;
  bool pruned = true;
  RewardGrid grid;
  MultisetIndexer index;
  std::vector<std::vector<CompleteShell>> shells;  // [k-1][size]

  std::size_t slots() const noexcept { return n_bins + 1; }
  std::size_t none_slot() const noexcept { return n_bins; }
  double stop_cost(std::size_t slot) const noexcept {
    return slot >= n_bins ? kInf : -eta * grid.value(slot);
  }

  const CompleteShell& shell(std::size_t k, std::size_t size) const {
    if (k < 1 || k > n_stages || size > k)
      throw UnknownStateError("no shell for stage " + std::to_string(k) + ", size " +
                              std::to_string(size));
    return shells[k - 1][size];
  }

  /// Flat position of a state, or throws UnknownStateError.
  std::size_t locate(std::size_t k, std::size_t slot, const TypeMultiset& sorted) const {
    const auto& sh = shell(k, sorted.size());
    if (!sh.has_slot(slot))
      throw UnknownStateError("state (stage " + std::to_string(k) + ", slot " +
                              std::to_string(slot) + ", size " + std::to_string(sorted.size()) +
                              ") was not evaluated");
    for (auto t : sorted)
      if (t >= n_types) throw UnknownStateError("type index out of range");
    return sh.at(index.rank(sorted), slot);
  }

  double value(std::size_t k, BestReward best, TypeMultiset g) const {
    std::sort(g.begin(), g.end());
    return shell(k, g.size()).value[locate(k, best.slot(n_bins), g)];
  }

  double initial_value() const {
    double v = 0.0;
    for (std::size_t t = 0; t < n_types; ++t)
      v += value(1, BestReward::none(), {static_cast<std::uint16_t>(t)});
    return v / static_cast<double>(n_types);
  }

  CostComponents initial_components() const {
    CostComponents c;
    const auto& sh = shell(1, 1);
    for (std::size_t t = 0; t < n_types; ++t) {
      const auto i = locate(1, none_slot(), {static_cast<std::uint16_t>(t)});
      c += CostComponents{sh.delay[i], sh.reward[i], sh.probes[i]};
    }
    c *= 1.0 / static_cast<double>(n_types);
    return c;
  }

  std::uint64_t evaluated_states(std::size_t k) const {
    std::uint64_t n = 0;
    for (const auto& sh : shells.at(k - 1)) n += sh.count * sh.width;
    return n;
  }
  std::uint64_t evaluated_states() const {
    std::uint64_t n = 0;
    for (std::size_t k = 1; k <= n_stages; ++k) n += evaluated_states(k);
    return n;
  }
};

namespace detail {

inline void shell_slots(std::size_t k, std::size_t size, std::size_t n_bins, bool prune,
                        std::size_t& begin, std::size_t& width) {
  if (!prune) {
    begin = 0;
    width = n_bins + 1;
  } else if (size == k) {
    begin = n_bins;  // nothing probed yet
    width = 1;
  } else {
    begin = 0;
    width = n_bins;
  }
}

inline long double projected_states(std::size_t n_types, std::size_t n_bins, std::size_t n_stages,
                                    bool prune) {
  long double total = 0.0L;
  for (std::size_t k = 1; k <= n_stages; ++k) {
    long double m = 1.0L;  // C(n+s-1, s), updated incrementally
    for (std::size_t s = 0; s <= k; ++s) {
      if (s > 0) m = m * static_cast<long double>(n_types + s - 1) / static_cast<long double>(s);
      std::size_t begin = 0, width = 0;
      shell_slots(k, s, n_bins, prune, begin, width);
      total += m * static_cast<long double>(width);
    }
  }
  return total;
}

}  // namespace detail

/// Exact backward induction for the complete class.
///
/// Shells are processed stage-descending and, within a stage, in increasing
/// multiset size, so probe transitions (same stage, one member fewer) and
/// continue transitions (next stage, newcomer added) are always resolved.
/// Throws BudgetExceededError before allocating if the state count is too large.
inline CompleteTables solve_complete(const OrderedFamily& family, const ModelConfig& config,
                                     const CompleteSolveOptions& options = {}) {
  validate_decision_params(config);
  if (family.size() > 65535) throw ConfigError("too many reward types for the complete solver");
  const long double projected = detail::projected_states(family.size(), family.n_bins(),
                                                         config.n_relays, options.prune_unreachable);
  if (projected > static_cast<long double>(options.state_budget))
    throw BudgetExceededError(projected > 1.8e19L ? UINT64_MAX
                                                  : static_cast<std::uint64_t>(projected),
                              options.state_budget);

  CompleteTables t;
  t.n_stages = config.n_relays;
  t.n_bins = family.n_bins();
  t.n_types = family.size();
  t.eta = config.eta;
  t.delta = config.delta;
  t.tau = config.tau;
  t.pruned = options.prune_unreachable;
  t.grid = family.grid;
  t.index = MultisetIndexer(t.n_types, t.n_stages);

  const std::size_t N = t.n_stages;
  const std::size_t B = t.n_bins;
  const std::size_t T = t.n_types;
  const double inv_t = 1.0 / static_cast<double>(T);

  // pmf of each type, in stochastic order.
  std::vector<const std::vector<double>*> pmf(T);
  for (std::size_t i = 0; i < T; ++i) pmf[i] = &family[family.order[i]].pmf;

  t.shells.resize(N);
  for (std::size_t k = 1; k <= N; ++k) {
    t.shells[k - 1].resize(k + 1);
    for (std::size_t s = 0; s <= k; ++s) {
      auto& sh = t.shells[k - 1][s];
      sh.size = s;
      sh.count = t.index.count(s);
      detail::shell_slots(k, s, B, options.prune_unreachable, sh.slot_begin, sh.width);
      const std::size_t n = static_cast<std::size_t>(sh.count) * sh.width;
      sh.value.assign(n, kNaN);
      sh.delay.assign(n, kNaN);
      sh.reward.assign(n, kNaN);
      sh.probes.assign(n, kNaN);
      sh.action.assign(n, ActionKind::none);
      sh.target.assign(n, 0);
    }
  }

  for (std::size_t k = N; k >= 1; --k) {
    const bool last = (k == N);
    for (std::size_t s = 0; s <= k; ++s) {
      auto& sh = t.shells[k - 1][s];
      const CompleteShell* smaller = s > 0 ? &t.shells[k - 1][s - 1] : nullptr;
      const CompleteShell* next = last ? nullptr : &t.shells[k][s + 1];

      parallel_for(static_cast<std::size_t>(sh.count), options.threads,
                   [&](std::size_t begin, std::size_t end) {
        TypeMultiset g, reduced, grown;
        std::vector<double> row_v(B), row_d(B), row_r(B), row_m(B);
        std::vector<std::uint16_t> probe_types;
        std::vector<std::vector<double>> pe_v, pe_d, pe_r, pe_m;
        std::vector<std::size_t> next_base;

        for (std::size_t rank = begin; rank < end; ++rank) {
          t.index.unrank(rank, s, g);

          // Probe expectations for each distinct member, over all b at once.
          probe_types.clear();
          pe_v.clear();
          pe_d.clear();
          pe_r.clear();
          pe_m.clear();
          for (std::size_t i = 0; i < s; ++i) {
            if (i + 1 < s && g[i] == g[i + 1]) continue;
            reduced = g;
            reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(i));
            const std::size_t base = smaller->at(t.index.rank(reduced), 0);
            for (std::size_t b = 0; b < B; ++b) {
              row_v[b] = smaller->value[base + b];
              row_d[b] = smaller->delay[base + b];
              row_r[b] = smaller->reward[base + b];
              row_m[b] = smaller->probes[base + b];
            }
            const auto& p = *pmf[g[i]];
            probe_types.push_back(g[i]);
            pe_v.push_back(expectation_of_max(p, row_v));
            pe_d.push_back(expectation_of_max(p, row_d));
            pe_r.push_back(expectation_of_max(p, row_r));
            pe_m.push_back(expectation_of_max(p, row_m));
          }

          // Successor multisets for a continue.
          next_base.clear();
          if (next) {
            for (std::size_t u = 0; u < T; ++u) {
              grown = g;
              grown.insert(std::upper_bound(grown.begin(), grown.end(), u),
                           static_cast<std::uint16_t>(u));
              next_base.push_back(static_cast<std::size_t>(t.index.rank(grown)));
            }
          }

          for (std::size_t slot = sh.slot_begin; slot < sh.slot_begin + sh.width; ++slot) {
            const std::size_t at = sh.at(rank, slot);
            const double stop = t.stop_cost(slot);

            // Largest type first so that ties go to the stochastically largest member.
            double probe = kInf;
            std::size_t best_p = 0;
            for (std::size_t j = probe_types.size(); j-- > 0;) {
              const double c = t.eta * t.delta + pe_v[j][slot];
              if (c < probe - kTieTolerance) {
                probe = c;
                best_p = j;
              }
            }
            if (std::isfinite(probe)) {
              // Keep the exact minimum as the value.
              for (std::size_t j = 0; j < probe_types.size(); ++j)
                probe = std::min(probe, t.eta * t.delta + pe_v[j][slot]);
            }

            double cont = kInf;
            CostComponents cont_comp{};
            if (next) {
              double acc = 0.0;
              for (std::size_t u = 0; u < T; ++u) {
                const std::size_t i = next->at(next_base[u], slot);
                acc += next->value[i];
                cont_comp += CostComponents{next->delay[i], next->reward[i], next->probes[i]};
              }
              cont = t.tau + acc * inv_t;
              cont_comp *= inv_t;
              cont_comp.delay += t.tau;
            }

            sh.value[at] = std::min({stop, probe, cont});
            const ActionKind a = choose_action(stop, probe, cont);
            sh.action[at] = a;
            switch (a) {
              case ActionKind::stop:
                sh.delay[at] = 0.0;
                sh.reward[at] = t.grid.value(slot);
                sh.probes[at] = 0.0;
                break;
              case ActionKind::probe:
                sh.target[at] = probe_types[best_p];
                sh.delay[at] = pe_d[best_p][slot];
                sh.reward[at] = pe_r[best_p][slot];
                sh.probes[at] = pe_m[best_p][slot] + 1.0;
                break;
              case ActionKind::cont:
                sh.delay[at] = cont_comp.delay;
                sh.reward[at] = cont_comp.reward;
                sh.probes[at] = cont_comp.probes;
                break;
              case ActionKind::none: break;
            }
          }
        }
      });
    }
    if (k == 1) break;
  }
  return t;
}

/// Decision state of a complete-class policy.
struct CompleteState {
  std::size_t stage = 1;
  BestReward best;
  TypeMultiset unprobed;  ///< any order; canonicalized on lookup
};

struct CompleteAction {
  ActionKind kind = ActionKind::none;
  std::uint16_t target = 0;  ///< type to probe
  bool operator==(const CompleteAction&) const = default;
};

/// Stored optimal action. Ties: STOP > PROBE > CONTINUE, and among probe
/// targets the stochastically largest member.
inline CompleteAction act_complete(const CompleteState& state, const CompleteTables& t) {
  TypeMultiset g = state.unprobed;
  std::sort(g.begin(), g.end());
  const auto& sh = t.shell(state.stage, g.size());
  const std::size_t i = t.locate(state.stage, state.best.slot(t.n_bins), g);
  CompleteAction a{sh.action[i], sh.target[i]};
  if (a.kind == ActionKind::none)
    throw IllegalActionError("no action available at stage " + std::to_string(state.stage) +
                             " with nothing probed and no unprobed relay");
  return a;
}

/// Per-stage state counts of both classes.
struct StageCensus {
  std::size_t stage = 0;
  std::uint64_t restricted = 0;          ///< (bins+1) * (|F|+1)
  std::uint64_t complete = 0;            ///< (bins+1) * sum_{s<=k} multisets(|F|, s)
  std::uint64_t complete_reachable = 0;  ///< multisets(|F|, k) + bins * sum_{s<k} multisets(|F|, s)
  std::uint64_t largest_shell = 0;       ///< multisets(|F|, k)
};

inline std::vector<StageCensus> state_space_census(std::size_t n_types, std::size_t n_bins,
                                                   std::size_t n_stages) {
  const MultisetIndexer idx(n_types, n_stages);
  std::vector<StageCensus> out;
  for (std::size_t k = 1; k <= n_stages; ++k) {
    StageCensus c;
    c.stage = k;
    c.restricted = static_cast<std::uint64_t>((n_bins + 1) * (n_types + 1));
    std::uint64_t below = 0;
    for (std::size_t s = 0; s < k; ++s) below += idx.count(s);
    c.largest_shell = idx.count(k);
    c.complete = (below + c.largest_shell) * (n_bins + 1);
    c.complete_reachable = c.largest_shell + below * n_bins;
    out.push_back(c);
  }
  return out;
}

inline std::vector<StageCensus> state_space_census(const ModelConfig& config) {
  return state_space_census(config.n_locations, config.n_reward_bins, config.n_relays);
}

/// Measures the complete-class conjectures; nothing here is asserted.
inline std::vector<ConjectureResult> verify_complete_conjectures(const CompleteTables& t,
                                                                 const OrderedFamily& family) {
  const std::size_t N = t.n_stages;
  const std::size_t B = t.n_bins;
  const double tol = kStructureTolerance;
  TypeMultiset g, grown;

  ConjectureResult largest{"probe the stochastically largest unprobed relay (all stages)", true, 0, {}};
  ConjectureResult stage_indep{"stopping sets over (b, multiset) are stage independent", true, 0, {}};
  ConjectureResult mono_b{"cost-to-go non-increasing in b", true, 0, {}};
  ConjectureResult mono_g{"adding an unprobed relay never increases cost-to-go", true, 0, {}};
  ConjectureResult osla{"last-stage stopping rule equals one-step look-ahead", true, 0, {}};
  std::size_t probing_states = 0;

  for (std::size_t k = 1; k <= N; ++k) {
    for (std::size_t s = 0; s <= k; ++s) {
      const auto& sh = t.shells[k - 1][s];
      for (std::uint64_t rank = 0; rank < sh.count; ++rank) {
        t.index.unrank(rank, s, g);
        for (std::size_t slot = sh.slot_begin; slot < sh.slot_begin + sh.width; ++slot) {
          const std::size_t i = sh.at(rank, slot);
          if (sh.action[i] == ActionKind::probe) {
            ++probing_states;
            if (sh.target[i] != g.back()) {
              // Equal laws at different ranks are interchangeable.
              const auto& a = family[family.order[sh.target[i]]];
              const auto& b = family[family.order[g.back()]];
              if (stochastic_order_cmp(a, b) != StochasticOrder::equal) ++largest.counterexamples;
            }
          }
          if (slot >= B) continue;
          if (slot + 1 < B && sh.value[sh.at(rank, slot + 1)] > sh.value[i] + tol)
            ++mono_b.counterexamples;
          if (s + 1 <= k && t.shells[k - 1][s + 1].has_slot(slot)) {
            const auto& bigger = t.shells[k - 1][s + 1];
            for (std::size_t u = 0; u < t.n_types; ++u) {
              grown = g;
              grown.insert(std::upper_bound(grown.begin(), grown.end(), u),
                           static_cast<std::uint16_t>(u));
              if (bigger.value[bigger.at(t.index.rank(grown), slot)] > sh.value[i] + tol)
                ++mono_g.counterexamples;
            }
          }
          if (k + 1 < N && t.shells[k][s].has_slot(slot)) {
            const auto& later = t.shells[k][s];
            const bool stop_now = sh.action[i] == ActionKind::stop;
            const bool stop_later = later.action[later.at(rank, slot)] == ActionKind::stop;
            if (stop_now != stop_later) ++stage_indep.counterexamples;
          }
          if (k == N && s > 0) {
            double best_probe = kInf;
            for (auto type : g) {
              const auto& p = family[family.order[type]].pmf;
              double e = 0.0;
              for (std::size_t r = 0; r < B; ++r) e += p[r] * t.grid.value(std::max(r, slot));
              best_probe = std::min(best_probe, t.eta * t.delta - t.eta * e);
            }
            const bool osla_stop = t.stop_cost(slot) <= best_probe + kTieTolerance;
            if (osla_stop != (sh.action[i] == ActionKind::stop)) ++osla.counterexamples;
          }
        }
      }
    }
  }

  std::vector<ConjectureResult> out{largest, stage_indep, mono_b, mono_g, osla};
  for (auto& c : out) {
    c.holds = c.counterexamples == 0;
    c.detail = std::to_string(c.counterexamples) + " counterexamples";
  }
  out[0].detail += " over " + std::to_string(probing_states) + " probing states";
  return out;
}

/// Policy export; values are included only on request to bound the size.
inline nlohmann::json to_json(const CompleteTables& t, bool include_values = false) {
  using nlohmann::json;
  json shells = json::array();
  for (std::size_t k = 1; k <= t.n_stages; ++k)
    for (const auto& sh : t.shells[k - 1]) {
      json actions = json::array();
      json targets = json::array();
      for (std::size_t i = 0; i < sh.action.size(); ++i) {
        actions.push_back(static_cast<int>(sh.action[i]));
        targets.push_back(sh.target[i]);
      }
      json entry{{"stage", k},
                 {"size", sh.size},
                 {"multisets", sh.count},
                 {"slot_begin", sh.slot_begin},
                 {"width", sh.width},
                 {"action", actions},
                 {"target", targets}};
      if (include_values) entry["value"] = sh.value;
      shells.push_back(entry);
    }
  return json{{"n_stages", t.n_stages},
              {"n_bins", t.n_bins},
              {"n_types", t.n_types},
              {"eta", t.eta},
              {"delta", t.delta},
              {"tau", t.tau},
              {"pruned", t.pruned},
              {"initial_value", t.initial_value()},
              {"action_codes", {{"0", "STOP"}, {"1", "PROBE"}, {"2", "CONTINUE"}, {"3", "NONE"}}},
              {"layout", "per shell: entries rank-major, width slots per multiset rank "
                         "(combinatorial number system over sorted type ranks); "
                         "slot n_bins is NONE"},
              {"evaluated_states", t.evaluated_states()},
              {"shells", shells}};
}

inline nlohmann::json to_json(const std::vector<StageCensus>& census) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : census)
    out.push_back({{"stage", c.stage},
                   {"restricted", c.restricted},
                   {"complete", c.complete},
                   {"complete_reachable", c.complete_reachable},
                   {"largest_multiset_shell", c.largest_shell}});
  return out;
}

}  // namespace relaymdp
