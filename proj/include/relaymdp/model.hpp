#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relaymdp/config.hpp"
#include "relaymdp/errors.hpp"

namespace relaymdp {

/// Absolute tolerance for CDF comparisons and pmf normalization checks.
inline constexpr double kOrderTolerance = 1e-12;

/// A candidate relay position in the forwarding region. The source sits at
/// the origin and the sink at (v0, 0).
struct Location {
  double x = 0.0;
  double y = 0.0;
  double progress = 0.0;  ///< Z = v0 - (distance from the point to the sink)
  double distance = 0.0;  ///< distance from the source
};

/// Discretized forwarding region; relay locations are uniform over `points`.
struct LocationGrid {
  std::vector<Location> points;

  std::size_t size() const noexcept { return points.size(); }
  double probability(std::size_t /*index*/) const noexcept {
    return 1.0 / static_cast<double>(points.size());
  }
};

namespace detail {

inline Location make_location(double x, double y, double v0) {
  Location p;
  p.x = x;
  p.y = y;
  p.distance = std::hypot(x, y);
  const double to_sink = std::hypot(v0 - x, y);
  // v0 - to_sink, written without the cancellation.
  p.progress = (2.0 * v0 * x - x * x - y * y) / (v0 + to_sink);
  return p;
}

inline bool in_forwarding_region(const Location& p, double radius) {
  return p.distance > 0.0 && p.distance <= radius && p.progress >= 0.0;
}

}  // namespace detail

/// Places `n_locations` points in the forwarding region (the part of the
/// communication disc with non-negative progress).
///
/// A regular grid of square cells is laid over the bounding box
/// [0, r] x [-r, r] of the region, using cell centres. The grid is refined
/// until at least `n_locations` centres fall inside the region; the points are
/// then taken at evenly strided positions of the row-major list of interior
/// centres, so the selection covers the whole region.
inline LocationGrid build_forwarding_region(const ModelConfig& config) {
  if (!(config.v0 > 0.0) || !(config.comm_radius > 0.0))
    throw ConfigError("forwarding region is empty: v0 and comm_radius must be positive");
  if (!(config.v0 > config.comm_radius)) throw ConfigError("v0 must exceed comm_radius");
  if (config.n_locations < 1) throw ConfigError("n_locations must be >= 1");

  const double r = config.comm_radius;
  for (std::size_t cols = 1;; ++cols) {
    const double h = r / static_cast<double>(cols);
    std::vector<Location> interior;
    for (std::size_t row = 0; row < 2 * cols; ++row) {
      const double y = r - (static_cast<double>(row) + 0.5) * h;
      for (std::size_t col = 0; col < cols; ++col) {
        const double x = (static_cast<double>(col) + 0.5) * h;
        const Location p = detail::make_location(x, y, config.v0);
        if (detail::in_forwarding_region(p, r)) interior.push_back(p);
      }
    }
    if (interior.size() < config.n_locations) continue;

    LocationGrid grid;
    grid.points.reserve(config.n_locations);
    const std::size_t n = config.n_locations;
    for (std::size_t i = 0; i < n; ++i)
      grid.points.push_back(interior[(2 * i + 1) * interior.size() / (2 * n)]);
    return grid;
  }
}

/// Deterministic factor of the reward at a location:
/// c = Z^a / (Gamma N0 d^beta)^(1 - a). The random reward is c * (|H|^2)^(1 - a)
/// with |H|^2 exponential of mean one.
inline double reward_scale(double progress, double distance, const ModelConfig& config) {
  if (!(distance > 0.0)) throw DomainError("reward_scale: distance must be > 0");
  if (progress < 0.0) throw DomainError("reward_scale: progress must be >= 0");
  const double power = std::pow(config.gamma_n0 * std::pow(distance, config.beta), 1.0 - config.a);
  return std::pow(progress, config.a) / power;
}

inline double reward_scale(const Location& p, const ModelConfig& config) {
  return reward_scale(p.progress, p.distance, config);
}

/// Common reward grid: `n` equally spaced values i / (n - 1) on [0, 1].
/// A normalized reward is rounded to the nearest grid value; everything
/// above the top value lands in the top bin.
class RewardGrid {
 public:
  RewardGrid() = default;
  explicit RewardGrid(std::size_t n) : n_(n) {
    if (n < 2) throw ConfigError("reward grid needs at least two points");
  }

  std::size_t size() const noexcept { return n_; }
  double value(std::size_t i) const noexcept {
    return static_cast<double>(i) / static_cast<double>(n_ - 1);
  }
  /// Upper edge of bin i (infinite for the top bin).
  double upper_edge(std::size_t i) const noexcept {
    if (i + 1 >= n_) return std::numeric_limits<double>::infinity();
    return (static_cast<double>(i) + 0.5) / static_cast<double>(n_ - 1);
  }
  std::size_t nearest_bin(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    const double scaled = std::round(x * static_cast<double>(n_ - 1));
    return static_cast<std::size_t>(std::min(scaled, static_cast<double>(n_ - 1)));
  }

  bool operator==(const RewardGrid&) const = default;

 private:
  std::size_t n_ = 0;
};

/// Quantized reward law of one location on the common grid.
struct RewardDistribution {
  std::size_t location_index = 0;
  double scale = 0.0;        ///< c_l, in unnormalized reward units
  std::vector<double> pmf;   ///< probability of each grid value
  std::vector<double> cdf;   ///< P(R <= grid value i)
  bool degenerate = false;   ///< point mass (c = 0 or a = 1)

  std::size_t size() const noexcept { return pmf.size(); }

  double mean(const RewardGrid& grid) const {
    double m = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) m += pmf[i] * grid.value(i);
    return m;
  }

  /// Builds a distribution from an explicit pmf (cdf by prefix sums).
  static RewardDistribution from_pmf(std::vector<double> pmf, std::size_t location_index = 0) {
    if (pmf.empty()) throw ConfigError("pmf must be non-empty");
    double total = 0.0;
    for (double p : pmf) {
      if (!(p >= 0.0)) throw ConfigError("pmf entries must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > kOrderTolerance) throw ConfigError("pmf must sum to one");
    RewardDistribution d;
    d.location_index = location_index;
    d.scale = std::numeric_limits<double>::quiet_NaN();
    d.cdf.resize(pmf.size());
    std::partial_sum(pmf.begin(), pmf.end(), d.cdf.begin());
    d.cdf.back() = 1.0;
    d.pmf = std::move(pmf);
    return d;
  }
};

/// Normalization constant R_max = max_l c_l * (-ln eps)^(1 - a): the reward
/// level exceeded with probability eps at the best location.
inline double reward_normalization(std::span<const double> scales, const ModelConfig& config) {
  double c_max = 0.0;
  for (double c : scales) c_max = std::max(c_max, c);
  if (!(c_max > 0.0)) throw ConfigError("all locations have zero reward scale");
  return c_max * std::pow(-std::log(config.tail_mass), 1.0 - config.a);
}

/// Quantizes the reward law of one location by differencing its analytic CDF
/// at the shared bin edges. The analytic CDF of the normalized reward is
/// 1 - exp(-(x R_max / c)^(1 / (1 - a))).
inline RewardDistribution quantize_distribution(const Location& point, std::size_t location_index,
                                                const ModelConfig& config, double r_max) {
  const RewardGrid grid(config.n_reward_bins);
  const std::size_t n = grid.size();
  RewardDistribution d;
  d.location_index = location_index;
  d.scale = reward_scale(point, config);
  d.pmf.assign(n, 0.0);
  d.cdf.assign(n, 0.0);

  auto point_mass = [&](std::size_t bin) {
    d.degenerate = true;
    d.pmf[bin] = 1.0;
    for (std::size_t i = bin; i < n; ++i) d.cdf[i] = 1.0;
  };

  if (!(d.scale > 0.0)) {
    point_mass(0);
    return d;
  }
  if (config.a >= 1.0) {
    // Power plays no role: the reward is the progress itself.
    point_mass(grid.nearest_bin(d.scale / r_max));
    return d;
  }

  const double shape = 1.0 / (1.0 - config.a);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double t = std::pow(grid.upper_edge(i) * r_max / d.scale, shape);
    d.cdf[i] = -std::expm1(-t);
  }
  d.cdf[n - 1] = 1.0;
  d.pmf[0] = d.cdf[0];
  for (std::size_t i = 1; i < n; ++i) d.pmf[i] = d.cdf[i] - d.cdf[i - 1];
  return d;
}

enum class StochasticOrder { first_dominates, second_dominates, equal, incomparable };

inline std::string to_string(StochasticOrder o) {
  switch (o) {
    case StochasticOrder::first_dominates: return "first_dominates";
    case StochasticOrder::second_dominates: return "second_dominates";
    case StochasticOrder::equal: return "equal";
    case StochasticOrder::incomparable: return "incomparable";
  }
  return "?";
}

/// First-order stochastic comparison by pointwise CDF ordering.
/// `first_dominates` means F1 >=st F2, i.e. cdf1 <= cdf2 everywhere.
inline StochasticOrder stochastic_order_cmp(const RewardDistribution& f1,
                                            const RewardDistribution& f2,
                                            double tol = kOrderTolerance) {
  if (f1.cdf.size() != f2.cdf.size())
    throw std::invalid_argument("stochastic_order_cmp: distributions live on different grids");
  bool first_ge = true;
  bool second_ge = true;
  for (std::size_t i = 0; i < f1.cdf.size(); ++i) {
    if (f1.cdf[i] > f2.cdf[i] + tol) first_ge = false;
    if (f2.cdf[i] > f1.cdf[i] + tol) second_ge = false;
  }
  if (first_ge && second_ge) return StochasticOrder::equal;
  if (first_ge) return StochasticOrder::first_dominates;
  if (second_ge) return StochasticOrder::second_dominates;
  return StochasticOrder::incomparable;
}

/// A totally stochastically ordered family of reward laws on one grid.
/// `order` lists member indices from the stochastically smallest to the
/// largest; `position[i]` is the rank of member i in that list.
struct OrderedFamily {
  RewardGrid grid;
  std::vector<RewardDistribution> distributions;
  std::vector<std::size_t> order;
  std::vector<std::size_t> position;
  std::size_t minimal_index = 0;

  std::size_t size() const noexcept { return distributions.size(); }
  std::size_t n_bins() const noexcept { return grid.size(); }
  const RewardDistribution& operator[](std::size_t i) const { return distributions[i]; }

  /// True when member `l` is stochastically at least as large as member `u`.
  bool dominates(std::size_t l, std::size_t u) const { return position[l] >= position[u]; }

  /// Sorts the members and checks every pair; throws OrderError on a crossing pair.
  static OrderedFamily build(std::vector<RewardDistribution> members) {
    if (members.empty()) throw ConfigError("reward family must be non-empty");
    const std::size_t bins = members.front().size();
    for (const auto& m : members)
      if (m.size() != bins) throw ConfigError("family members must share one reward grid");

    OrderedFamily f;
    f.grid = RewardGrid(bins);
    f.distributions = std::move(members);
    const std::size_t n = f.distributions.size();

    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (stochastic_order_cmp(f.distributions[i], f.distributions[j]) ==
            StochasticOrder::incomparable)
          throw OrderError(i, j);

    // Under a total order, first-order dominance agrees with the mean.
    std::vector<double> means(n);
    for (std::size_t i = 0; i < n; ++i) means[i] = f.distributions[i].mean(f.grid);
    f.order.resize(n);
    std::iota(f.order.begin(), f.order.end(), std::size_t{0});
    std::stable_sort(f.order.begin(), f.order.end(),
                     [&](std::size_t l, std::size_t r) { return means[l] < means[r]; });
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto o = stochastic_order_cmp(f.distributions[f.order[i + 1]],
                                          f.distributions[f.order[i]]);
      if (o != StochasticOrder::first_dominates && o != StochasticOrder::equal)
        throw OrderError(f.order[i], f.order[i + 1]);
    }
    f.position.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.position[f.order[i]] = i;
    f.minimal_index = f.order.front();
    return f;
  }
};

/// Quantized, ordered reward family of a forwarding region.
inline OrderedFamily build_ordered_family(const LocationGrid& grid, const ModelConfig& config) {
  std::vector<double> scales;
  scales.reserve(grid.size());
  for (const auto& p : grid.points) scales.push_back(reward_scale(p, config));
  const double r_max = reward_normalization(scales, config);

  std::vector<RewardDistribution> members;
  members.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    members.push_back(quantize_distribution(grid.points[i], i, config, r_max));
  return OrderedFamily::build(std::move(members));
}

/// Expected value of row[max(b, R)] for R ~ pmf, for every b on the grid.
/// The returned vector has one extra trailing entry for "nothing probed yet",
/// where max(none, R) = R.
inline std::vector<double> expectation_of_max(std::span<const double> pmf,
                                              std::span<const double> row) {
  const std::size_t n = pmf.size();
  std::vector<double> out(n + 1);
  std::vector<double> mass_le(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += pmf[i];
    mass_le[i] = acc;
  }
  double tail = 0.0;
  for (std::size_t b = n; b-- > 0;) {
    out[b] = mass_le[b] * row[b] + tail;
    tail += pmf[b] * row[b];
  }
  out[n] = tail;
  return out;
}

inline void to_json(nlohmann::json& j, const LocationGrid& g) {
  j = nlohmann::json::array();
  for (const auto& p : g.points)
    j.push_back({{"x", p.x}, {"y", p.y}, {"progress", p.progress}, {"distance", p.distance}});
  j = nlohmann::json{{"points", j}};
}

inline nlohmann::json family_to_json(const LocationGrid& g, const OrderedFamily& f) {
  nlohmann::json j;
  to_json(j, g);
  nlohmann::json grid = nlohmann::json::array();
  for (std::size_t i = 0; i < f.n_bins(); ++i) grid.push_back(f.grid.value(i));
  nlohmann::json scales = nlohmann::json::array();
  nlohmann::json pmfs = nlohmann::json::array();
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& d : f.distributions) {
    scales.push_back(d.scale);
    pmfs.push_back(d.pmf);
    flags.push_back(d.degenerate);
  }
  j["grid"] = grid;
  j["scales"] = scales;
  j["pmf"] = pmfs;
  j["degenerate"] = flags;
  j["order"] = f.order;
  j["minimal_index"] = f.minimal_index;
  return j;
}

}  // namespace relaymdp
