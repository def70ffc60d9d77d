#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "relaymdp.hpp"
#include "support/generators.hpp"

using namespace relaymdp;

namespace {

OrderedFamily default_family(const ModelConfig& c = {}) {
  return build_ordered_family(build_forwarding_region(c), c);
}

}  // namespace

TEST(ForwardingRegion, DefaultHasTwentyPointsInsideRegion) {
  const ModelConfig c;
  const auto grid = build_forwarding_region(c);
  ASSERT_EQ(grid.size(), 20u);
  for (const auto& p : grid.points) {
    EXPECT_GE(p.progress, 0.0);
    EXPECT_LE(p.progress, 1.0);
    EXPECT_GT(p.distance, 0.0);
    EXPECT_LE(p.distance, 1.0);
    const double to_sink = std::hypot(c.v0 - p.x, p.y);
    EXPECT_NEAR(p.progress, c.v0 - to_sink, 1e-12);
  }
}

TEST(ForwardingRegion, AxisPointAtRangeHasUnitProgress) {
  const auto p = detail::make_location(1.0, 0.0, 10.0);
  EXPECT_DOUBLE_EQ(p.progress, 1.0);
  EXPECT_DOUBLE_EQ(p.distance, 1.0);
}

TEST(ForwardingRegion, SingleLocationIsDegenerateLaw) {
  ModelConfig c;
  c.n_locations = 1;
  const auto grid = build_forwarding_region(c);
  ASSERT_EQ(grid.size(), 1u);
  EXPECT_DOUBLE_EQ(grid.probability(0), 1.0);
}

TEST(ForwardingRegion, Deterministic) {
  ModelConfig c;
  c.n_locations = 37;
  const auto g1 = build_forwarding_region(c);
  const auto g2 = build_forwarding_region(c);
  ASSERT_EQ(g1.size(), g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    EXPECT_EQ(g1.points[i].x, g2.points[i].x);
    EXPECT_EQ(g1.points[i].y, g2.points[i].y);
  }
}

TEST(ForwardingRegion, EmptyRegionRejected) {
  ModelConfig c;
  c.comm_radius = 0.0;
  EXPECT_THROW(build_forwarding_region(c), ConfigError);
  c = {};
  c.v0 = 0.0;
  EXPECT_THROW(build_forwarding_region(c), ConfigError);
}

TEST(ForwardingRegion, PointsStayInsideForRandomGeometries) {
  gen::Gen g(11);
  for (int trial = 0; trial < 40; ++trial) {
    ModelConfig c;
    c.comm_radius = g.uniform(0.2, 5.0);
    c.v0 = c.comm_radius * g.uniform(1.1, 30.0);
    c.n_locations = g.index(1, 60);
    const auto grid = build_forwarding_region(c);
    ASSERT_EQ(grid.size(), c.n_locations);
    for (const auto& p : grid.points) {
      EXPECT_LE(p.distance, c.comm_radius);
      EXPECT_GE(p.progress, 0.0);
    }
  }
}

TEST(RewardScale, Examples) {
  ModelConfig c;
  EXPECT_DOUBLE_EQ(reward_scale(1.0, 1.0, c), 1.0);
  EXPECT_EQ(reward_scale(0.0, 0.7, c), 0.0);
  // Independent evaluation in extended precision: sqrt(0.5) / (1 * 1^2)^(1/2).
  const long double expected = std::sqrt(0.5L);
  EXPECT_NEAR(reward_scale(0.5, 1.0, c), static_cast<double>(expected), 1e-15);
  EXPECT_NEAR(reward_scale(0.5, 1.0, c), 0.70711, 5e-6);
}

TEST(RewardScale, ZeroDistanceIsDomainError) {
  EXPECT_THROW(reward_scale(0.5, 0.0, ModelConfig{}), DomainError);
  EXPECT_THROW(reward_scale(-0.1, 0.5, ModelConfig{}), DomainError);
}

TEST(RewardScale, MatchesFormulaOnRandomInputs) {
  gen::Gen g(3);
  for (int i = 0; i < 200; ++i) {
    ModelConfig c;
    c.a = g.uniform(0.0, 1.0);
    c.beta = g.uniform(0.0, 4.0);
    c.gamma_n0 = g.log_uniform(0.01, 100.0);
    const double z = g.uniform(0.0, 2.0);
    const double d = g.uniform(0.01, 2.0);
    const long double expect =
        std::pow(static_cast<long double>(z), static_cast<long double>(c.a)) /
        std::pow(static_cast<long double>(c.gamma_n0) *
                     std::pow(static_cast<long double>(d), static_cast<long double>(c.beta)),
                 1.0L - static_cast<long double>(c.a));
    EXPECT_NEAR(reward_scale(z, d, c), static_cast<double>(expect),
                1e-13 * std::max(1.0, static_cast<double>(expect)));
  }
}

TEST(Quantization, ZeroScaleIsPointMassAtBottom) {
  ModelConfig c;
  Location p = detail::make_location(0.0, 0.5, c.v0);  // Z < 0 is outside; use Z = 0 explicitly
  p.progress = 0.0;
  const auto d = quantize_distribution(p, 0, c, 1.0);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.pmf[0], 1.0);
  EXPECT_EQ(d.cdf.back(), 1.0);
}

TEST(Quantization, UnitWeightIsPointMassAtNormalizedProgress) {
  ModelConfig c;
  c.a = 1.0;
  const auto fam = default_family(c);
  for (const auto& d : fam.distributions) {
    EXPECT_TRUE(d.degenerate);
    EXPECT_EQ(*std::max_element(d.pmf.begin(), d.pmf.end()), 1.0);
  }
}

TEST(Quantization, PmfSumsToOneAndCdfIsMonotone) {
  gen::Gen g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelConfig c = gen::fuzz_config(g);
    const auto fam = default_family(c);
    for (const auto& d : fam.distributions) {
      double sum = 0.0;
      for (double p : d.pmf) {
        EXPECT_GE(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      for (std::size_t i = 1; i < d.cdf.size(); ++i) EXPECT_GE(d.cdf[i], d.cdf[i - 1]);
      EXPECT_EQ(d.cdf.back(), 1.0);
    }
  }
}

TEST(Quantization, LargerScaleGivesPointwiseSmallerCdf) {
  const ModelConfig c;
  const auto fam = default_family(c);
  std::size_t pairs = 0;
  for (std::size_t l = 0; l < fam.size(); ++l)
    for (std::size_t u = l + 1; u < fam.size(); ++u) {
      ++pairs;
      const auto& fl = fam[l];
      const auto& fu = fam[u];
      const auto& hi = fl.scale >= fu.scale ? fl : fu;
      const auto& lo = fl.scale >= fu.scale ? fu : fl;
      for (std::size_t i = 0; i < hi.cdf.size(); ++i) EXPECT_LE(hi.cdf[i], lo.cdf[i] + 1e-12);
    }
  EXPECT_EQ(pairs, 190u);
}

TEST(Quantization, OrderMatchesScaleOrderForFuzzedConfigs) {
  gen::Gen g(21);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelConfig c = gen::fuzz_config(g);
    const auto fam = default_family(c);
    for (std::size_t l = 0; l < fam.size(); ++l)
      for (std::size_t u = 0; u < fam.size(); ++u)
        if (fam[l].scale >= fam[u].scale) {
          const auto o = stochastic_order_cmp(fam[l], fam[u]);
          EXPECT_TRUE(o == StochasticOrder::first_dominates || o == StochasticOrder::equal);
        }
  }
}

TEST(Quantization, MeanConvergesToTruncatedAnalyticMean) {
  ModelConfig c;
  c.n_reward_bins = 1000;
  const auto grid = build_forwarding_region(c);
  std::vector<double> scales;
  for (const auto& p : grid.points) scales.push_back(reward_scale(p, c));
  const double r_max = reward_normalization(scales, c);
  const auto fam = build_ordered_family(grid, c);
  const double s = 1.0 / (1.0 - c.a);
  for (std::size_t l = 0; l < fam.size(); ++l) {
    // E[min(R / R_max, 1)] = integral over [0, 1] of the survival function.
    const double cl = scales[l];
    auto survival = [&](double x) { return std::exp(-std::pow(x * r_max / cl, s)); };
    const double exact = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        survival, 0.0, 1.0, 15, 1e-14);
    const double quantized = fam[l].mean(fam.grid);
    EXPECT_LT(std::abs(quantized - exact) / exact, 0.01) << "location " << l;
  }
}

TEST(StochasticOrder, Examples) {
  const auto f = RewardDistribution::from_pmf({0.2, 0.3, 0.5});
  EXPECT_EQ(stochastic_order_cmp(f, f), StochasticOrder::equal);

  std::vector<double> hi(100, 0.0), lo(100, 0.0);
  hi[90] = 1.0;
  lo[10] = 1.0;
  EXPECT_EQ(stochastic_order_cmp(RewardDistribution::from_pmf(hi), RewardDistribution::from_pmf(lo)),
            StochasticOrder::first_dominates);
  EXPECT_EQ(stochastic_order_cmp(RewardDistribution::from_pmf(lo), RewardDistribution::from_pmf(hi)),
            StochasticOrder::second_dominates);

  const auto a = RewardDistribution::from_pmf({0.5, 0.0, 0.5});
  const auto b = RewardDistribution::from_pmf({0.0, 1.0, 0.0});
  EXPECT_EQ(stochastic_order_cmp(a, b), StochasticOrder::incomparable);
}

TEST(OrderedFamily, DefaultIsTotallyOrderedWithMinimalScale) {
  const ModelConfig c;
  const auto grid = build_forwarding_region(c);
  const auto fam = build_ordered_family(grid, c);
  std::size_t argmin = 0;
  for (std::size_t l = 0; l < fam.size(); ++l)
    if (fam[l].scale < fam[argmin].scale) argmin = l;
  EXPECT_EQ(fam[fam.minimal_index].scale, fam[argmin].scale);
  for (std::size_t l = 0; l < fam.size(); ++l)
    for (std::size_t i = 0; i < fam.n_bins(); ++i)
      EXPECT_LE(fam[l].cdf[i], fam[fam.minimal_index].cdf[i] + 1e-12);
  for (std::size_t i = 0; i + 1 < fam.size(); ++i) {
    const auto& small = fam[fam.order[i]];
    const auto& large = fam[fam.order[i + 1]];
    for (std::size_t b = 0; b < fam.n_bins(); ++b) EXPECT_LE(large.cdf[b], small.cdf[b] + 1e-12);
  }
}

TEST(OrderedFamily, SingleMember) {
  const auto fam = OrderedFamily::build({RewardDistribution::from_pmf({0.4, 0.6})});
  EXPECT_EQ(fam.minimal_index, 0u);
  EXPECT_EQ(fam.order, std::vector<std::size_t>{0});
}

TEST(OrderedFamily, CrossingCdfsRejected) {
  std::vector<RewardDistribution> m{RewardDistribution::from_pmf({0.5, 0.0, 0.5}),
                                    RewardDistribution::from_pmf({0.0, 1.0, 0.0})};
  EXPECT_THROW(OrderedFamily::build(m), OrderError);
}

TEST(OrderedFamily, RandomOrderedFamiliesAreAccepted) {
  gen::Gen g(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pmfs = gen::ordered_pmfs(g, g.index(1, 6), g.index(2, 8));
    const auto fam = gen::family_from_pmfs(pmfs);
    for (std::size_t l = 0; l < fam.size(); ++l)
      for (std::size_t u = 0; u < fam.size(); ++u)
        if (fam.dominates(l, u)) {
          for (std::size_t b = 0; b < fam.n_bins(); ++b) EXPECT_LE(fam[l].cdf[b], fam[u].cdf[b] + 1e-12);
        }
  }
}

TEST(Expectation, OfMaxMatchesDirectSum) {
  gen::Gen g(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.index(2, 12);
    const auto pmf = gen::ordered_pmfs(g, 1, n)[0];
    std::vector<double> row(n);
    for (auto& x : row) x = g.uniform(-3.0, 3.0);
    const auto e = expectation_of_max(pmf, row);
    ASSERT_EQ(e.size(), n + 1);
    for (std::size_t b = 0; b <= n; ++b) {
      double direct = 0.0;
      for (std::size_t r = 0; r < n; ++r) direct += pmf[r] * row[b == n ? r : std::max(b, r)];
      EXPECT_NEAR(e[b], direct, 1e-12);
    }
  }
}

TEST(Config, JsonRoundTrip) {
  ModelConfig c;
  c.eta = 3.5;
  c.wakeup_law = WakeupLaw::deterministic;
  nlohmann::json j;
  to_json(j, c);
  ModelConfig back;
  from_json(j, back);
  EXPECT_EQ(back, c);
}

TEST(Config, InvalidValuesRejected) {
  ModelConfig c;
  c.a = 1.5;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.tail_mass = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.n_relays = 0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(wakeup_law_from_string("poisson"), ConfigError);
}

TEST(Export, FamilyJsonHasPointsScalesAndPmfs) {
  const ModelConfig c;
  const auto grid = build_forwarding_region(c);
  const auto fam = build_ordered_family(grid, c);
  const auto j = family_to_json(grid, fam);
  EXPECT_EQ(j.at("points").size(), 20u);
  EXPECT_EQ(j.at("scales").size(), 20u);
  EXPECT_EQ(j.at("pmf").size(), 20u);
  EXPECT_EQ(j.at("pmf")[0].size(), 100u);
}
