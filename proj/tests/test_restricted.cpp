#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "relaymdp.hpp"
#include "support/brute_force.hpp"
#include "support/generators.hpp"

using namespace relaymdp;

namespace {

struct Solved {
  ModelConfig config;
  OrderedFamily family;
  RestrictedTables tables;
};

Solved solve_default(ModelConfig c = {}) {
  auto fam = build_ordered_family(build_forwarding_region(c), c);
  auto t = backward_induction(fam, c);
  return {c, std::move(fam), std::move(t)};
}

const Solved& default_solved() {
  static const Solved s = solve_default();
  return s;
}

int oracle_bin(std::size_t slot, std::size_t bins) {
  return slot >= bins ? oracle::kNone : static_cast<int>(slot);
}

}  // namespace

TEST(BackwardInduction, LastStageValueIsMinusEtaB) {
  const auto& s = default_solved();
  const auto& t = s.tables;
  for (std::size_t b = 0; b < t.n_bins; ++b) EXPECT_EQ(t.J(t.n_stages, b), -t.eta * t.grid.value(b));
  EXPECT_EQ(t.J(t.n_stages, t.none_slot()), kInf);
}

TEST(BackwardInduction, TopBinStopsAtLastStage) {
  const auto& s = default_solved();
  const auto& t = s.tables;
  const std::size_t top = t.n_bins - 1;
  for (std::size_t l = 0; l < t.n_locations; ++l) {
    EXPECT_NEAR(t.cp(t.n_stages, top, l), t.eta * t.delta - t.eta, 1e-12);
    EXPECT_EQ(act({t.n_stages, BestReward::at(top), l}, t).kind, ActionKind::stop);
  }
}

TEST(BackwardInduction, BellmanReevaluation) {
  const auto& s = default_solved();
  const auto& t = s.tables;
  const double eps = 1e-12;
  for (std::size_t k = 1; k <= t.n_stages; ++k) {
    for (std::size_t slot = 0; slot < t.slots(); ++slot) {
      double cont = kInf;
      if (k < t.n_stages) {
        double acc = 0.0;
        for (std::size_t u = 0; u < t.n_locations; ++u) acc += t.J(k + 1, slot, u);
        cont = t.tau + acc / static_cast<double>(t.n_locations);
        EXPECT_NEAR(t.cc(k, slot), cont, eps);
      }
      const double expect = std::min(t.stop_cost(slot), cont);
      if (std::isinf(expect)) {
        EXPECT_EQ(t.J(k, slot), expect);
      } else {
        EXPECT_NEAR(t.J(k, slot), expect, eps);
      }
      for (std::size_t l = 0; l < t.n_locations; ++l) {
        const auto& pmf = s.family[l].pmf;
        double probe = t.eta * t.delta;
        for (std::size_t r = 0; r < t.n_bins; ++r)
          if (pmf[r] > 0.0) probe += pmf[r] * t.J(k, slot == t.none_slot() ? r : std::max(slot, r));
        EXPECT_NEAR(t.cp(k, slot, l), probe, eps);
        double c = kInf;
        if (k < t.n_stages) {
          double acc = 0.0;
          for (std::size_t u = 0; u < t.n_locations; ++u)
            acc += std::min(t.J(k + 1, slot, l), t.J(k + 1, slot, u));
          c = t.tau + acc / static_cast<double>(t.n_locations);
          EXPECT_NEAR(t.cc(k, slot, l), c, eps);
        }
        EXPECT_NEAR(t.J(k, slot, l), std::min({t.stop_cost(slot), probe, c}), eps);
      }
    }
  }
}

TEST(BackwardInduction, MatchesBruteForceOnToyInstances) {
  gen::Gen g(101);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t L = g.index(1, 3), B = g.index(2, 3), N = g.index(1, 3);
    const auto fam = gen::family_from_pmfs(gen::ordered_pmfs(g, L, B));
    const auto c = gen::toy_config(g, N);
    const auto t = backward_induction(fam, c);
    oracle::Restricted bf(gen::oracle_instance(fam, c));
    for (std::size_t k = 1; k <= N; ++k)
      for (std::size_t slot = 0; slot <= B; ++slot) {
        const int b = oracle_bin(slot, B);
        const double jb = bf.value(static_cast<int>(k), b, oracle::kNone);
        if (std::isfinite(jb)) EXPECT_NEAR(t.J(k, slot), jb, 1e-12);
        else EXPECT_EQ(t.J(k, slot), kInf);
        for (std::size_t l = 0; l < L; ++l)
          EXPECT_NEAR(t.J(k, slot, l), bf.value(static_cast<int>(k), b, static_cast<int>(l)), 1e-12)
              << "trial " << trial << " k " << k << " slot " << slot << " l " << l;
      }
    EXPECT_NEAR(t.initial_value(), bf.initial_value(), 1e-12);
  }
}

TEST(BackwardInduction, ComponentsReproduceValue) {
  gen::Gen g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = gen::fuzz_config(g);
    const auto fam = build_ordered_family(build_forwarding_region(c), c);
    const auto t = backward_induction(fam, c);
    const auto comp = t.initial_components();
    EXPECT_NEAR(comp.cost(c.eta, c.delta), t.initial_value(), 1e-9 * std::max(1.0, c.eta));
    EXPECT_GE(comp.probes, 1.0 - 1e-12);
    EXPECT_LE(comp.probes, static_cast<double>(c.n_relays) + 1e-12);
  }
}

TEST(Thresholds, StageIndependentAndOrderedOnDefault) {
  const auto& s = default_solved();
  const auto ts = extract_thresholds(s.tables);
  const std::size_t L = s.tables.n_locations;
  for (std::size_t k = 1; k + 1 < s.tables.n_stages; ++k) {
    EXPECT_EQ(ts.x[k - 1], ts.x[k]);
    for (std::size_t l = 0; l < L; ++l) EXPECT_EQ(ts.x_l[k - 1][l], ts.x_l[k][l]);
  }
  for (std::size_t k = 1; k < s.tables.n_stages; ++k)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t u = 0; u < L; ++u) {
        if (!s.family.dominates(l, u)) continue;
        ASSERT_TRUE(ts.x[k - 1] && ts.x_l[k - 1][u] && ts.x_l[k - 1][l]);
        EXPECT_LE(*ts.x[k - 1], *ts.x_l[k - 1][u]);
        EXPECT_LE(*ts.x_l[k - 1][u], *ts.x_l[k - 1][l]);
      }
}

TEST(Thresholds, DefinitionsHoldWithZeroMultiplier) {
  ModelConfig c;
  c.eta = 0.0;
  const auto s = solve_default(c);
  const auto ts = extract_thresholds(s.tables);
  for (std::size_t k = 1; k < c.n_relays; ++k)
    for (std::size_t b = 0; b < s.tables.n_bins; ++b) {
      // Stopping costs 0 while continuing costs at least tau > 0.
      EXPECT_TRUE(ts.stop_set[k - 1][b]);
      EXPECT_EQ(ts.stop_set[k - 1][b], s.tables.stop_cost(b) <= s.tables.cc(k, b) + kTieTolerance);
    }
}

TEST(Thresholds, ZeroProbingCostMakesQCoverGrid) {
  ModelConfig c;
  c.delta = 0.0;
  const auto s = solve_default(c);
  const auto ts = extract_thresholds(s.tables);
  for (const auto& stage : ts.q_flags)
    for (const auto& row : stage)
      for (auto f : row) EXPECT_TRUE(f);
}

TEST(Thresholds, MatchBruteForceSets) {
  gen::Gen g(55);
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t L = g.index(1, 3), B = g.index(2, 3), N = g.index(2, 3);
    const auto fam = gen::family_from_pmfs(gen::ordered_pmfs(g, L, B));
    const auto c = gen::toy_config(g, N);
    const auto t = backward_induction(fam, c);
    const auto ts = extract_thresholds(t);
    oracle::Restricted bf(gen::oracle_instance(fam, c));
    for (std::size_t k = 1; k < N; ++k)
      for (std::size_t b = 0; b < B; ++b) {
        const auto cb = bf.costs(static_cast<int>(k), static_cast<int>(b), oracle::kNone);
        EXPECT_EQ(ts.stop_set[k - 1][b] != 0, cb.stop <= cb.cont + kTieTolerance);
        for (std::size_t l = 0; l < L; ++l) {
          const auto cl = bf.costs(static_cast<int>(k), static_cast<int>(b), static_cast<int>(l));
          const bool s = cl.stop <= std::min(cl.probe, cl.cont) + kTieTolerance;
          const bool q = std::min(cl.stop, cl.probe) <= cl.cont + kTieTolerance;
          EXPECT_EQ(ts.stop_set_l[k - 1][l][b] != 0, s);
          EXPECT_EQ(ts.q_flags[k - 1][l][b] != 0, q);
          EXPECT_EQ(ts.probe_set[k - 1][l][b] != 0, q && !s);
        }
      }
  }
}

TEST(Thresholds, NonUpSetIsReported) {
  auto t = default_solved().tables;
  // Make stopping at b = 1 look unattractive while b = 0 stays in S_1.
  t.cc_b[t.ib(1, 0)] = 1e9;
  t.cc_b[t.ib(1, 1)] = -1e9;
  EXPECT_THROW(extract_thresholds(t), NonThresholdError);
}

TEST(Act, LastStageWithNothingProbedProbes) {
  const auto& t = default_solved().tables;
  for (std::size_t l = 0; l < t.n_locations; ++l)
    EXPECT_EQ(act({t.n_stages, BestReward::none(), l}, t).kind, ActionKind::probe);
}

TEST(Act, ProbingSetMembersProbe) {
  const auto& t = default_solved().tables;
  const auto ts = extract_thresholds(t);
  std::size_t seen = 0;
  for (std::size_t k = 1; k < t.n_stages; ++k)
    for (std::size_t l = 0; l < t.n_locations; ++l)
      for (std::size_t b = 0; b < t.n_bins; ++b) {
        const auto a = act({k, BestReward::at(b), l}, t).kind;
        if (ts.probe_set[k - 1][l][b]) {
          ++seen;
          EXPECT_EQ(a, ActionKind::probe);
          if (ts.x_l[k - 1][l]) {
            EXPECT_LT(b, *ts.x_l[k - 1][l]);
          }
        }
        if (ts.stop_set_l[k - 1][l][b]) {
          EXPECT_EQ(a, ActionKind::stop);
        }
      }
  EXPECT_GT(seen, 0u);
}

TEST(Act, IllegalActionsRejected) {
  EXPECT_THROW(check_restricted_action({1, BestReward::none(), 0}, {ActionKind::stop}, 3),
               IllegalActionError);
  EXPECT_THROW(check_restricted_action({3, BestReward::at(1), 0}, {ActionKind::cont}, 3),
               IllegalActionError);
  EXPECT_THROW(check_restricted_action({2, BestReward::at(1), std::nullopt}, {ActionKind::probe}, 3),
               IllegalActionError);
  const auto& t = default_solved().tables;
  EXPECT_THROW(act({t.n_stages + 1, BestReward::at(0), 0}, t), UnknownStateError);
}

TEST(Act, RetentionAgreesWithStochasticOrder) {
  const auto& s = default_solved();
  const auto& t = s.tables;
  for (std::size_t k = 2; k <= t.n_stages; ++k)
    for (std::size_t slot = 0; slot < t.slots(); ++slot)
      for (std::size_t l = 0; l < t.n_locations; ++l)
        for (std::size_t u = 0; u < t.n_locations; ++u) {
          if (!s.family.dominates(l, u)) continue;
          // The dominating relay is never worse to keep.
          EXPECT_LE(t.J(k, slot, l), t.J(k, slot, u) + kStructureTolerance);
          if (stochastic_order_cmp(s.family[l], s.family[u]) == StochasticOrder::first_dominates &&
              t.J(k, slot, l) < t.J(k, slot, u)) {
            EXPECT_EQ(retain_choice(t, k, slot, l, u), Keep::current);
          }
        }
}

TEST(VerifyStructure, DefaultPassesAllChecks) {
  const auto& s = default_solved();
  const auto ts = extract_thresholds(s.tables);
  const auto report = verify_structure(s.tables, ts, s.family);
  for (const auto& c : report.checks) {
    EXPECT_TRUE(c.passed) << c.id << " " << c.name << " worst " << c.worst;
    EXPECT_GT(c.evaluated, 0u) << c.id;
  }
  for (const auto& c : report.conjectures) EXPECT_TRUE(c.holds) << c.name << ": " << c.detail;
}

TEST(VerifyStructure, FuzzedConfigsPassAllChecks) {
  gen::Gen g(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const auto c = gen::fuzz_config(g);
    const auto fam = build_ordered_family(build_forwarding_region(c), c);
    const auto t = backward_induction(fam, c);
    const auto report = verify_structure(t, extract_thresholds(t), fam);
    for (const auto& chk : report.checks)
      EXPECT_TRUE(chk.passed) << "trial " << trial << " check " << chk.id << " worst " << chk.worst;
  }
}

TEST(VerifyStructure, ToyInstancesPassAllChecks) {
  gen::Gen g(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = g.index(1, 4), B = g.index(2, 6), N = g.index(1, 4);
    const auto fam = gen::family_from_pmfs(gen::ordered_pmfs(g, L, B));
    const auto c = gen::toy_config(g, N);
    const auto t = backward_induction(fam, c);
    const auto report = verify_structure(t, extract_thresholds(t), fam);
    for (const auto& chk : report.checks)
      EXPECT_TRUE(chk.passed) << "trial " << trial << " check " << chk.id << " worst " << chk.worst;
  }
}

TEST(Export, TablesAndThresholdsSerialize) {
  const auto& t = default_solved().tables;
  const auto j = to_json(t);
  EXPECT_EQ(j.at("J_b").size(), t.n_stages);
  EXPECT_EQ(j.at("J_b")[0].size(), t.slots());
  EXPECT_EQ(j.at("J_bF")[0][0].size(), t.n_locations);
  const auto ts = to_json(extract_thresholds(t));
  EXPECT_EQ(ts.at("x").size(), t.n_stages - 1);
  const auto rep = to_json(verify_structure(t, extract_thresholds(t), default_solved().family));
  EXPECT_TRUE(rep.at("all_passed").get<bool>());
  EXPECT_EQ(rep.at("checks").size(), 8u);
}
