#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relaymdp/common.hpp"
#include "relaymdp/config.hpp"
#include "relaymdp/model.hpp"

namespace relaymdp {

/// Cost-to-go tables of the restricted class, where at most one unprobed
/// relay is kept awake besides the best probed one.
///
/// States are (b) after a probe and (b, F_l) with a retained unprobed relay
/// at location l. The b-axis has n_bins + 1 slots; the last is "nothing
/// probed yet" (NONE), where stopping is unavailable (+inf). Stages run
/// 1..N. Continuation costs are undefined (NaN) at stage N.
struct RestrictedTables {
  std::size_t n_stages = 0;
  std::size_t n_bins = 0;
  std::size_t n_locations = 0;
  double eta = 0.0;
  double delta = 0.0;
  double tau = 0.0;
  RewardGrid grid;

  std::vector<double> j_b;    // [k][slot]
  std::vector<double> cc_b;   // [k][slot]
  std::vector<double> j_bf;   // [k][slot][l]
  std::vector<double> cc_bf;  // [k][slot][l]
  std::vector<double> cp_bf;  // [k][slot][l]
  std::vector<CostComponents> comp_b;
  std::vector<CostComponents> comp_bf;

  std::size_t slots() const noexcept { return n_bins + 1; }
  std::size_t none_slot() const noexcept { return n_bins; }

  std::size_t ib(std::size_t k, std::size_t slot) const noexcept {
    return (k - 1) * slots() + slot;
  }
  std::size_t ibf(std::size_t k, std::size_t slot, std::size_t l) const noexcept {
    return ((k - 1) * slots() + slot) * n_locations + l;
  }

  double stop_cost(std::size_t slot) const noexcept {
    return slot >= n_bins ? kInf : -eta * grid.value(slot);
  }

  double J(std::size_t k, std::size_t slot) const { return j_b.at(ib(k, slot)); }
  double J(std::size_t k, std::size_t slot, std::size_t l) const { return j_bf.at(ibf(k, slot, l)); }
  double cc(std::size_t k, std::size_t slot) const { return cc_b.at(ib(k, slot)); }
  double cc(std::size_t k, std::size_t slot, std::size_t l) const { return cc_bf.at(ibf(k, slot, l)); }
  double cp(std::size_t k, std::size_t slot, std::size_t l) const { return cp_bf.at(ibf(k, slot, l)); }

  /// Optimal value before the first relay is seen: E_A[J_1(NONE, F_L1)].
  double initial_value() const {
    double v = 0.0;
    for (std::size_t l = 0; l < n_locations; ++l) v += J(1, none_slot(), l);
    return v / static_cast<double>(n_locations);
  }

  /// Expected delay (excluding U_1), reward and probe count under the optimal policy.
  CostComponents initial_components() const {
    CostComponents c;
    for (std::size_t l = 0; l < n_locations; ++l) c += comp_bf.at(ibf(1, none_slot(), l));
    c *= 1.0 / static_cast<double>(n_locations);
    return c;
  }
};

/// Which relay stays awake when a new relay wakes up while one is retained.
enum class Keep { current, newcomer };

/// Retention rule: keep the retained relay iff its cost-to-go from the next
/// stage is no larger than the newcomer's.
inline Keep retain_choice(const RestrictedTables& t, std::size_t stage, std::size_t slot,
                          std::size_t current, std::size_t newcomer) {
  return t.J(stage, slot, current) <= t.J(stage, slot, newcomer) ? Keep::current : Keep::newcomer;
}

/// Backward induction over stages N..1.
///
/// Within a stage, J_k(b) is filled before the (b, F_l) states because
/// probing keeps the process at the same stage.
inline RestrictedTables backward_induction(const OrderedFamily& family, const ModelConfig& config) {
  validate_decision_params(config);
  RestrictedTables t;
  t.n_stages = config.n_relays;
  t.n_bins = family.n_bins();
  t.n_locations = family.size();
  t.eta = config.eta;
  t.delta = config.delta;
  t.tau = config.tau;
  t.grid = family.grid;

  const std::size_t N = t.n_stages;
  const std::size_t B = t.n_bins;
  const std::size_t L = t.n_locations;
  const std::size_t S = t.slots();
  const double inv_l = 1.0 / static_cast<double>(L);

  t.j_b.assign(N * S, kNaN);
  t.cc_b.assign(N * S, kNaN);
  t.j_bf.assign(N * S * L, kNaN);
  t.cc_bf.assign(N * S * L, kNaN);
  t.cp_bf.assign(N * S * L, kNaN);
  t.comp_b.assign(N * S, CostComponents{kNaN, kNaN, kNaN});
  t.comp_bf.assign(N * S * L, CostComponents{kNaN, kNaN, kNaN});

  const CostComponents wait{t.tau, 0.0, 0.0};
  std::vector<double> row(B);

  for (std::size_t k = N; k >= 1; --k) {
    const bool last = (k == N);

    // States (b): stop or continue.
    for (std::size_t s = 0; s < S; ++s) {
      const double stop = t.stop_cost(s);
      double cont = kInf;
      CostComponents cont_comp{};
      if (!last) {
        double acc = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
          acc += t.j_bf[t.ibf(k + 1, s, l)];
          cont_comp += t.comp_bf[t.ibf(k + 1, s, l)];
        }
        cont = t.tau + acc * inv_l;
        cont_comp *= inv_l;
        cont_comp += wait;
        t.cc_b[t.ib(k, s)] = cont;
      }
      t.j_b[t.ib(k, s)] = std::min(stop, cont);
      switch (choose_action(stop, kInf, cont)) {
        case ActionKind::stop: t.comp_b[t.ib(k, s)] = {0.0, t.grid.value(s), 0.0}; break;
        case ActionKind::cont: t.comp_b[t.ib(k, s)] = cont_comp; break;
        default: break;  // (NONE) at stage N: no action, J = +inf
      }
    }

    // Probing costs use the stage-k values just computed.
    for (std::size_t s = 0; s < B; ++s) row[s] = t.j_b[t.ib(k, s)];
    for (std::size_t l = 0; l < L; ++l) {
      const auto pe = expectation_of_max(family[l].pmf, row);
      for (std::size_t s = 0; s < S; ++s) t.cp_bf[t.ibf(k, s, l)] = t.eta * t.delta + pe[s];
    }

    // States (b, F_l): stop, probe or continue.
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t l = 0; l < L; ++l) {
        const double stop = t.stop_cost(s);
        const double probe = t.cp_bf[t.ibf(k, s, l)];
        double cont = kInf;
        if (!last) {
          const double keep_value = t.j_bf[t.ibf(k + 1, s, l)];
          double acc = 0.0;
          for (std::size_t u = 0; u < L; ++u) acc += std::min(keep_value, t.j_bf[t.ibf(k + 1, s, u)]);
          cont = t.tau + acc * inv_l;
          t.cc_bf[t.ibf(k, s, l)] = cont;
        }
        t.j_bf[t.ibf(k, s, l)] = std::min({stop, probe, cont});

        CostComponents comp{};
        switch (choose_action(stop, probe, cont)) {
          case ActionKind::stop: comp = {0.0, t.grid.value(s), 0.0}; break;
          case ActionKind::probe: {
            const auto& pmf = family[l].pmf;
            const BestReward best = BestReward::from_slot(s, B);
            for (std::size_t r = 0; r < B; ++r) {
              if (pmf[r] == 0.0) continue;
              CostComponents next = t.comp_b[t.ib(k, best.with_probe(r).slot(B))];
              next *= pmf[r];
              comp += next;
            }
            comp.probes += 1.0;
            break;
          }
          case ActionKind::cont: {
            for (std::size_t u = 0; u < L; ++u) {
              const std::size_t kept =
                  retain_choice(t, k + 1, s, l, u) == Keep::current ? l : u;
              comp += t.comp_bf[t.ibf(k + 1, s, kept)];
            }
            comp *= inv_l;
            comp += wait;
            break;
          }
          case ActionKind::none: comp = {kNaN, kNaN, kNaN}; break;
        }
        t.comp_bf[t.ibf(k, s, l)] = comp;
      }
    }
    if (k == 1) break;
  }
  return t;
}

/// Decision state of a restricted-class policy.
struct RestrictedState {
  std::size_t stage = 1;
  BestReward best;
  std::optional<std::size_t> retained;  ///< location of the retained unprobed relay
};

struct RestrictedAction {
  ActionKind kind = ActionKind::none;
  bool operator==(const RestrictedAction&) const = default;
};

/// Throws IllegalActionError when `action` is unavailable in `state`.
inline void check_restricted_action(const RestrictedState& state, RestrictedAction action,
                                    std::size_t n_stages) {
  auto fail = [&](const std::string& why) {
    throw IllegalActionError(why + " at stage " + std::to_string(state.stage) +
                             ", best=" + state.best.to_string() + ", retained=" +
                             (state.retained ? std::to_string(*state.retained) : "none"));
  };
  switch (action.kind) {
    case ActionKind::stop:
      if (state.best.is_none()) fail("STOP with no probed relay");
      break;
    case ActionKind::probe:
      if (!state.retained) fail("PROBE with no unprobed relay");
      break;
    case ActionKind::cont:
      if (state.stage >= n_stages) fail("CONTINUE at the last stage");
      break;
    case ActionKind::none: fail("no action");
  }
}

/// Optimal action at a restricted-class state (argmin of the Bellman terms).
inline RestrictedAction act(const RestrictedState& state, const RestrictedTables& t) {
  if (state.stage < 1 || state.stage > t.n_stages)
    throw UnknownStateError("stage " + std::to_string(state.stage) + " out of range");
  if (!state.best.is_none() && state.best.bin() >= t.n_bins)
    throw UnknownStateError("best reward bin out of range");
  if (state.retained && *state.retained >= t.n_locations)
    throw UnknownStateError("retained location out of range");

  const std::size_t k = state.stage;
  const std::size_t s = state.best.slot(t.n_bins);
  const double stop = t.stop_cost(s);
  const double cont = k < t.n_stages ? (state.retained ? t.cc(k, s, *state.retained) : t.cc(k, s))
                                     : kInf;
  const double probe = state.retained ? t.cp(k, s, *state.retained) : kInf;
  const RestrictedAction a{choose_action(stop, probe, cont)};
  check_restricted_action(state, a, t.n_stages);
  return a;
}

/// Stopping and stopping/probing sets with their thresholds, for k = 1..N-1.
///
/// Sets are indexed [k-1][b] (and [k-1][l][b]) on the reward grid; NONE is
/// excluded. Thresholds are the smallest member of each up-set.
struct ThresholdSummary {
  std::size_t n_stages = 0;
  std::size_t n_bins = 0;
  std::size_t n_locations = 0;

  std::vector<std::vector<std::uint8_t>> stop_set;                 // S_k
  std::vector<std::vector<std::vector<std::uint8_t>>> stop_set_l;  // S_k^l
  std::vector<std::vector<std::vector<std::uint8_t>>> q_flags;     // Q_k^l
  std::vector<std::vector<std::vector<std::uint8_t>>> probe_set;   // P_k^l = Q \ S

  std::vector<std::optional<std::size_t>> x;
  std::vector<std::vector<std::optional<std::size_t>>> x_l;
  std::vector<std::vector<std::optional<std::size_t>>> y_l;
};

namespace detail {

inline bool is_up_set(const std::vector<std::uint8_t>& member) {
  bool seen = false;
  for (auto m : member) {
    if (m) seen = true;
    else if (seen) return false;
  }
  return true;
}

inline std::optional<std::size_t> first_member(const std::vector<std::uint8_t>& member) {
  for (std::size_t i = 0; i < member.size(); ++i)
    if (member[i]) return i;
  return std::nullopt;
}

inline std::optional<std::size_t> last_member(const std::vector<std::uint8_t>& member) {
  for (std::size_t i = member.size(); i-- > 0;)
    if (member[i]) return i;
  return std::nullopt;
}

}  // namespace detail

/// Evaluates the set definitions on the tables. Ties within kTieTolerance
/// count toward stopping. Throws NonThresholdError if a stopping set is not
/// an up-set.
inline ThresholdSummary extract_thresholds(const RestrictedTables& t) {
  ThresholdSummary ts;
  ts.n_stages = t.n_stages;
  ts.n_bins = t.n_bins;
  ts.n_locations = t.n_locations;
  const std::size_t B = t.n_bins;
  const std::size_t L = t.n_locations;
  const std::size_t K = t.n_stages > 0 ? t.n_stages - 1 : 0;

  ts.stop_set.assign(K, std::vector<std::uint8_t>(B, 0));
  ts.stop_set_l.assign(K, std::vector<std::vector<std::uint8_t>>(L, std::vector<std::uint8_t>(B, 0)));
  ts.q_flags = ts.stop_set_l;
  ts.probe_set = ts.stop_set_l;
  ts.x.assign(K, std::nullopt);
  ts.x_l.assign(K, std::vector<std::optional<std::size_t>>(L));
  ts.y_l = ts.x_l;

  for (std::size_t k = 1; k <= K; ++k) {
    for (std::size_t b = 0; b < B; ++b) {
      const double stop = t.stop_cost(b);
      ts.stop_set[k - 1][b] = stop <= t.cc(k, b) + kTieTolerance;
      for (std::size_t l = 0; l < L; ++l) {
        const double cp = t.cp(k, b, l);
        const double cc = t.cc(k, b, l);
        const bool s = stop <= std::min(cp, cc) + kTieTolerance;
        const bool q = std::min(stop, cp) <= cc + kTieTolerance;
        ts.stop_set_l[k - 1][l][b] = s;
        ts.q_flags[k - 1][l][b] = q;
        ts.probe_set[k - 1][l][b] = q && !s;
      }
    }
    if (!detail::is_up_set(ts.stop_set[k - 1]))
      throw NonThresholdError("stopping set S_" + std::to_string(k) + " is not an up-set");
    ts.x[k - 1] = detail::first_member(ts.stop_set[k - 1]);
    for (std::size_t l = 0; l < L; ++l) {
      if (!detail::is_up_set(ts.stop_set_l[k - 1][l]))
        throw NonThresholdError("stopping set S_" + std::to_string(k) + "^" + std::to_string(l) +
                                " is not an up-set");
      ts.x_l[k - 1][l] = detail::first_member(ts.stop_set_l[k - 1][l]);
      ts.y_l[k - 1][l] = detail::last_member(ts.probe_set[k - 1][l]);
    }
  }
  return ts;
}

/// Outcome of one structural check over all stages, bins and locations.
struct CheckResult {
  std::string id;
  std::string name;
  bool passed = true;
  std::size_t evaluated = 0;
  std::size_t violations = 0;
  double worst = 0.0;  ///< largest violation magnitude (0 when none)

  void record(double excess) {
    ++evaluated;
    if (excess > 0.0) {
      passed = false;
      ++violations;
      worst = std::max(worst, excess);
    }
  }
  void record(bool ok) { record(ok ? 0.0 : 1.0); }
};

/// Measured, never asserted.
struct ConjectureResult {
  std::string name;
  bool holds = true;
  std::size_t counterexamples = 0;
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckResult> checks;
  std::vector<ConjectureResult> conjectures;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const CheckResult& check(const std::string& id) const {
    for (const auto& c : checks)
      if (c.id == id) return c;
    throw std::out_of_range("no check " + id);
  }
};

/// Checks the ordering and threshold properties (a)-(h) at tolerance
/// kStructureTolerance and reports the probing-set conjecture (i).
inline VerificationReport verify_structure(const RestrictedTables& t, const ThresholdSummary& ts,
                                           const OrderedFamily& family) {
  const std::size_t N = t.n_stages;
  const std::size_t B = t.n_bins;
  const std::size_t S = t.slots();
  const std::size_t L = t.n_locations;
  const double tol = kStructureTolerance;
  auto excess = [&](double lhs, double rhs) {  // violation of lhs <= rhs + tol
    const double d = lhs - rhs;
    return d > tol ? d : 0.0;
  };

  CheckResult a{"a", "cost-to-go non-increasing in b"};
  for (std::size_t k = 1; k <= N; ++k)
    for (std::size_t b = 0; b + 1 < B; ++b) {
      a.record(excess(t.J(k, b + 1), t.J(k, b)));
      for (std::size_t l = 0; l < L; ++l) a.record(excess(t.J(k, b + 1, l), t.J(k, b, l)));
    }

  CheckResult b_check{"b", "cost-to-go non-decreasing in stage"};
  for (std::size_t k = 1; k < N; ++k)
    for (std::size_t s = 0; s < S; ++s) {
      if (std::isfinite(t.J(k + 1, s))) b_check.record(excess(t.J(k, s), t.J(k + 1, s)));
      for (std::size_t l = 0; l < L; ++l) b_check.record(excess(t.J(k, s, l), t.J(k + 1, s, l)));
    }

  CheckResult c{"c", "stochastically larger retained law has lower cost-to-go"};
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t u = 0; u < L; ++u) {
      if (l == u || !family.dominates(l, u)) continue;
      for (std::size_t k = 1; k <= N; ++k)
        for (std::size_t s = 0; s < S; ++s) c.record(excess(t.J(k, s, l), t.J(k, s, u)));
    }

  CheckResult d{"d", "continuing with a retained relay is no worse: cc(b,F) <= cc(b)"};
  for (std::size_t k = 1; k < N; ++k)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t l = 0; l < L; ++l) d.record(excess(t.cc(k, s, l), t.cc(k, s)));

  CheckResult e{"e", "set inclusions S^l in Q^l, S^l in S, S in Q^l, S^l in S^u for F_l >=st F_u"};
  for (std::size_t k = 1; k < N; ++k)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t b = 0; b < B; ++b) {
        const bool s = ts.stop_set[k - 1][b];
        const bool sl = ts.stop_set_l[k - 1][l][b];
        const bool q = ts.q_flags[k - 1][l][b];
        e.record(!sl || q);
        e.record(!sl || s);
        e.record(!s || q);
        for (std::size_t u = 0; u < L; ++u)
          if (u != l && family.dominates(l, u)) e.record(!sl || ts.stop_set_l[k - 1][u][b]);
      }

  CheckResult f{"f", "continuation and probing costs are eta-Lipschitz from below in b"};
  for (std::size_t k = 1; k < N; ++k)
    for (std::size_t b1 = 0; b1 < B; ++b1)
      for (std::size_t b2 = b1 + 1; b2 < B; ++b2) {
        const double bound = t.eta * (t.grid.value(b2) - t.grid.value(b1));
        f.record(excess(t.cc(k, b1) - t.cc(k, b2), bound));
        for (std::size_t l = 0; l < L; ++l) {
          f.record(excess(t.cp(k, b1, l) - t.cp(k, b2, l), bound));
          f.record(excess(t.cc(k, b1, l) - t.cc(k, b2, l), bound));
        }
      }

  CheckResult g{"g", "inside S_k the cost-to-go J_k(b,F) equals the last-stage J_N(b,F)"};
  for (std::size_t k = 1; k < N; ++k)
    for (std::size_t b = 0; b < B; ++b) {
      if (!ts.stop_set[k - 1][b]) continue;
      for (std::size_t l = 0; l < L; ++l)
        g.record(std::abs(t.J(k, b, l) - t.J(N, b, l)) > tol ? std::abs(t.J(k, b, l) - t.J(N, b, l))
                                                             : 0.0);
    }

  CheckResult h{"h", "stopping sets S_k and S_k^l are stage independent"};
  for (std::size_t k = 1; k + 1 < N; ++k) {
    h.record(ts.stop_set[k - 1] == ts.stop_set[k]);
    for (std::size_t l = 0; l < L; ++l) h.record(ts.stop_set_l[k - 1][l] == ts.stop_set_l[k][l]);
  }

  VerificationReport report;
  report.checks = {a, b_check, c, d, e, f, g, h};

  ConjectureResult down{"probing sets P_k^l are down-sets", true, 0, {}};
  ConjectureResult increasing{"probing thresholds y_k^l non-decreasing in k", true, 0, {}};
  for (std::size_t k = 1; k < N; ++k)
    for (std::size_t l = 0; l < L; ++l) {
      const auto& p = ts.probe_set[k - 1][l];
      if (const auto y = ts.y_l[k - 1][l]) {
        for (std::size_t b = 0; b <= *y; ++b)
          if (!p[b]) {
            ++down.counterexamples;
            break;
          }
      }
      if (k + 1 < N) {
        const long cur = ts.y_l[k - 1][l] ? static_cast<long>(*ts.y_l[k - 1][l]) : -1;
        const long nxt = ts.y_l[k][l] ? static_cast<long>(*ts.y_l[k][l]) : -1;
        if (nxt < cur) ++increasing.counterexamples;
      }
    }
  down.holds = down.counterexamples == 0;
  increasing.holds = increasing.counterexamples == 0;
  down.detail = std::to_string(down.counterexamples) + " (stage, location) pairs with a gap";
  increasing.detail = std::to_string(increasing.counterexamples) + " decreases between stages";
  report.conjectures = {down, increasing};
  return report;
}

inline nlohmann::json to_json(const RestrictedTables& t) {
  using nlohmann::json;
  auto stage_b = [&](const std::vector<double>& v) {
    json out = json::array();
    for (std::size_t k = 1; k <= t.n_stages; ++k) {
      json row = json::array();
      for (std::size_t s = 0; s < t.slots(); ++s) row.push_back(v[t.ib(k, s)]);
      out.push_back(row);
    }
    return out;
  };
  auto stage_bf = [&](const std::vector<double>& v) {
    json out = json::array();
    for (std::size_t k = 1; k <= t.n_stages; ++k) {
      json plane = json::array();
      for (std::size_t s = 0; s < t.slots(); ++s) {
        json row = json::array();
        for (std::size_t l = 0; l < t.n_locations; ++l) row.push_back(v[t.ibf(k, s, l)]);
        plane.push_back(row);
      }
      out.push_back(plane);
    }
    return out;
  };
  return json{{"n_stages", t.n_stages},
              {"n_bins", t.n_bins},
              {"n_locations", t.n_locations},
              {"eta", t.eta},
              {"delta", t.delta},
              {"tau", t.tau},
              {"b_axis", "grid bins 0..n_bins-1, then NONE"},
              {"initial_value", t.initial_value()},
              {"J_b", stage_b(t.j_b)},
              {"cc_b", stage_b(t.cc_b)},
              {"J_bF", stage_bf(t.j_bf)},
              {"cc_bF", stage_bf(t.cc_bf)},
              {"cp_bF", stage_bf(t.cp_bf)}};
}

inline nlohmann::json to_json(const ThresholdSummary& ts) {
  using nlohmann::json;
  auto opt = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
  json x = json::array(), xl = json::array(), yl = json::array(), q = json::array();
  for (std::size_t k = 0; k + 1 < ts.n_stages; ++k) {
    x.push_back(opt(ts.x[k]));
    json xr = json::array(), yr = json::array(), qr = json::array();
    for (std::size_t l = 0; l < ts.n_locations; ++l) {
      xr.push_back(opt(ts.x_l[k][l]));
      yr.push_back(opt(ts.y_l[k][l]));
      qr.push_back(ts.q_flags[k][l]);
    }
    xl.push_back(xr);
    yl.push_back(yr);
    q.push_back(qr);
  }
  return json{{"stages", "1..N-1"}, {"x", x}, {"x_l", xl}, {"y_l", yl}, {"q_flags", q}};
}

inline nlohmann::json to_json(const VerificationReport& r) {
  using nlohmann::json;
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"id", c.id},
                      {"name", c.name},
                      {"passed", c.passed},
                      {"evaluated", c.evaluated},
                      {"violations", c.violations},
                      {"worst_violation", c.worst}});
  json conj = json::array();
  for (const auto& c : r.conjectures)
    conj.push_back({{"name", c.name},
                    {"holds", c.holds},
                    {"counterexamples", c.counterexamples},
                    {"detail", c.detail}});
  return json{{"all_passed", r.all_passed()}, {"checks", checks}, {"conjectures", conj}};
}

}  // namespace relaymdp
