#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relaymdp/common.hpp"
#include "relaymdp/complete.hpp"
#include "relaymdp/config.hpp"
#include "relaymdp/model.hpp"
#include "relaymdp/restricted.hpp"
#include "relaymdp/simulate.hpp"

#ifndef RELAYMDP_BUILD_TAG
#define RELAYMDP_BUILD_TAG "unknown"
#endif

namespace relaymdp {

inline constexpr const char* kBuildTag = RELAYMDP_BUILD_TAG;

enum class PolicyKind { rst, glb, first };

inline std::string to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::rst: return "RST-OPT";
    case PolicyKind::glb: return "GLB-OPT";
    case PolicyKind::first: return "first-wake";
  }
  return "?";
}

/// Accepts the short CLI names (rst, glb, first) and the display names.
inline PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "rst" || s == "RST-OPT") return PolicyKind::rst;
  if (s == "glb" || s == "GLB-OPT") return PolicyKind::glb;
  if (s == "first" || s == "first-wake") return PolicyKind::first;
  throw ConfigError("unknown policy \"" + s + "\" (expected rst, glb or first)");
}

inline std::string short_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::rst: return "rst";
    case PolicyKind::glb: return "glb";
    case PolicyKind::first: return "first";
  }
  return "?";
}

/// n log-spaced values from lo to hi inclusive.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> v(n);
  const double ratio = hi / lo;
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo * std::pow(ratio, static_cast<double>(i) / static_cast<double>(n - 1));
  v.front() = lo;
  v.back() = hi;
  return v;
}

/// Default multiplier grid: 20 log-spaced values in [0.1, 60].
inline std::vector<double> default_eta_grid() { return log_spaced(0.1, 60.0, 20); }

struct SweepSpec {
  std::vector<double> eta_values = default_eta_grid();
  std::vector<double> delta_values{0.1, 0.01};
  ModelConfig base;
  std::size_t n_episodes = 10'000;  ///< 0 skips Monte Carlo
  std::vector<PolicyKind> policies{PolicyKind::rst, PolicyKind::glb};
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::uint64_t state_budget = CompleteSolveOptions{}.state_budget;
};

inline void validate(const SweepSpec& s) {
  if (s.eta_values.empty()) throw ConfigError("sweep: eta_values must be non-empty");
  if (s.delta_values.empty()) throw ConfigError("sweep: delta_values must be non-empty");
  if (s.policies.empty()) throw ConfigError("sweep: policies must be non-empty");
  for (double e : s.eta_values)
    if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("sweep: eta values must be >= 0");
  for (double d : s.delta_values)
    if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError("sweep: delta values must be >= 0");
  validate(s.base);
}

/// Cost-to-go value and the exact expected components of an optimal policy.
/// `components.delay` excludes U_1.
struct DpEvaluation {
  double value = 0.0;
  CostComponents components;

  double mean_delay(double tau) const { return components.delay + tau; }
};

inline DpEvaluation evaluate(const RestrictedTables& t) {
  return {t.initial_value(), t.initial_components()};
}

inline DpEvaluation evaluate(const CompleteTables& t) {
  return {t.initial_value(), t.initial_components()};
}

/// Probe the first relay and forward to it.
inline DpEvaluation evaluate_first_wake(const OrderedFamily& family, const ModelConfig& c) {
  double mean = 0.0;
  for (const auto& d : family.distributions) mean += d.mean(family.grid);
  mean /= static_cast<double>(family.size());
  const CostComponents comp{0.0, mean, 1.0};
  return {comp.cost(c.eta, c.delta), comp};
}

struct SweepRow {
  PolicyKind policy = PolicyKind::rst;
  double eta = 0.0;
  double delta = 0.0;
  std::string status = "ok";
  std::optional<DpEvaluation> dp;
  std::optional<Estimates> mc;
  nlohmann::json thresholds;  ///< restricted policy only

  bool ok() const { return status == "ok"; }
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;

  const SweepRow* find(PolicyKind p, double eta, double delta) const {
    for (const auto& r : rows)
      if (r.policy == p && r.eta == eta && r.delta == delta) return &r;
    return nullptr;
  }
};

/// Runs every (delta, eta, policy) cell: solve, extract thresholds, simulate.
/// A budget error marks its cell and the sweep continues.
inline SweepResult run_sweep(const SweepSpec& spec) {
  validate(spec);
  SweepResult result;
  result.spec = spec;
  const LocationGrid grid = build_forwarding_region(spec.base);
  const OrderedFamily family = build_ordered_family(grid, spec.base);

  for (double delta : spec.delta_values) {
    for (double eta : spec.eta_values) {
      ModelConfig c = spec.base;
      c.eta = eta;
      c.delta = delta;
      std::shared_ptr<const RestrictedTables> rst;
      std::shared_ptr<const CompleteTables> glb;

      for (PolicyKind kind : spec.policies) {
        SweepRow row;
        row.policy = kind;
        row.eta = eta;
        row.delta = delta;
        std::optional<Policy> policy;
        try {
          switch (kind) {
            case PolicyKind::rst: {
              if (!rst) rst = std::make_shared<RestrictedTables>(backward_induction(family, c));
              row.dp = evaluate(*rst);
              try {
                row.thresholds = to_json(extract_thresholds(*rst));
              } catch (const NonThresholdError& e) {
                row.thresholds = nlohmann::json{{"error", e.what()}};
              }
              policy = make_rst_policy(rst);
              break;
            }
            case PolicyKind::glb: {
              if (!glb) {
                CompleteSolveOptions o;
                o.state_budget = spec.state_budget;
                o.threads = spec.threads;
                glb = std::make_shared<CompleteTables>(solve_complete(family, c, o));
              }
              row.dp = evaluate(*glb);
              policy = make_glb_policy(glb);
              break;
            }
            case PolicyKind::first:
              row.dp = evaluate_first_wake(family, c);
              policy = make_first_wake_policy();
              break;
          }
          if (spec.n_episodes > 0)
            row.mc = monte_carlo(c, family, *policy, spec.n_episodes, spec.seed, spec.threads);
        } catch (const BudgetExceededError& e) {
          row.status = std::string("budget_exceeded: ") + e.what();
        }
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

struct CalibrationResult {
  double gamma = 0.0;
  double delta = 0.0;
  PolicyKind policy = PolicyKind::rst;
  std::size_t index = 0;  ///< position of eta on the grid
  double eta = 0.0;
  DpEvaluation dp;
  double effective_reward = 0.0;
  std::optional<double> previous_effective_reward;  ///< at the next smaller grid eta
  std::size_t solves = 0;
};

/// Smallest grid multiplier whose optimal policy has DP-exact effective
/// reward E[R] - delta E[M] >= gamma. The effective reward of a Lagrangian
/// optimum is non-decreasing in eta, so the grid is bisected.
inline CalibrationResult calibrate_eta(double gamma, double delta, const ModelConfig& config,
                                       std::vector<double> eta_grid = default_eta_grid(),
                                       PolicyKind policy = PolicyKind::rst,
                                       std::uint64_t state_budget = CompleteSolveOptions{}.state_budget) {
  if (eta_grid.empty()) throw ConfigError("calibrate: eta grid must be non-empty");
  std::sort(eta_grid.begin(), eta_grid.end());
  ModelConfig base = config;
  base.delta = delta;
  validate(base);
  const LocationGrid grid = build_forwarding_region(base);
  const OrderedFamily family = build_ordered_family(grid, base);

  CalibrationResult out;
  out.gamma = gamma;
  out.delta = delta;
  out.policy = policy;
  std::vector<std::optional<DpEvaluation>> cache(eta_grid.size());
  auto eval = [&](std::size_t i) -> const DpEvaluation& {
    if (!cache[i]) {
      ModelConfig c = base;
      c.eta = eta_grid[i];
      ++out.solves;
      switch (policy) {
        case PolicyKind::rst: cache[i] = evaluate(backward_induction(family, c)); break;
        case PolicyKind::glb: {
          CompleteSolveOptions o;
          o.state_budget = state_budget;
          cache[i] = evaluate(solve_complete(family, c, o));
          break;
        }
        case PolicyKind::first: cache[i] = evaluate_first_wake(family, c); break;
      }
    }
    return *cache[i];
  };
  auto eff = [&](std::size_t i) { return eval(i).components.effective_reward(delta); };

  const std::size_t last = eta_grid.size() - 1;
  if (eff(last) < gamma) throw InfeasibleGammaError(gamma, eff(last));
  std::size_t lo = 0, hi = last;  // answer in [lo, hi]; eff(hi) >= gamma
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (eff(mid) >= gamma) hi = mid;
    else lo = mid + 1;
  }
  out.index = hi;
  out.eta = eta_grid[hi];
  out.dp = eval(hi);
  out.effective_reward = eff(hi);
  if (hi > 0) out.previous_effective_reward = eff(hi - 1);
  return out;
}

inline nlohmann::json to_json(const CalibrationResult& r, double tau) {
  nlohmann::json j{{"gamma", r.gamma},
                   {"delta", r.delta},
                   {"policy", to_string(r.policy)},
                   {"eta", r.eta},
                   {"eta_index", r.index},
                   {"effective_reward", r.effective_reward},
                   {"dp_cost", r.dp.value},
                   {"mean_delay", r.dp.mean_delay(tau)},
                   {"mean_reward", r.dp.components.reward},
                   {"mean_probes", r.dp.components.probes},
                   {"solves", r.solves}};
  j["previous_effective_reward"] =
      r.previous_effective_reward ? nlohmann::json(*r.previous_effective_reward) : nlohmann::json();
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline nlohmann::json to_json(const SweepSpec& s) {
  nlohmann::json policies = nlohmann::json::array();
  for (auto p : s.policies) policies.push_back(short_name(p));
  return nlohmann::json{{"eta_values", s.eta_values},
                        {"delta_values", s.delta_values},
                        {"n_episodes", s.n_episodes},
                        {"policies", policies}};
}

inline nlohmann::json to_json(const SweepRow& r, double tau) {
  nlohmann::json j{{"policy", to_string(r.policy)}, {"eta", r.eta}, {"delta", r.delta},
                   {"status", r.status}};
  if (r.dp) {
    j["dp_cost"] = r.dp->value;
    j["mean_delay"] = r.dp->mean_delay(tau);
    j["mean_delay_excl_u1"] = r.dp->components.delay;
    j["mean_reward"] = r.dp->components.reward;
    j["mean_probes"] = r.dp->components.probes;
    j["eff_reward"] = r.dp->components.effective_reward(r.delta);
  }
  if (r.mc) j["mc"] = to_json(*r.mc);
  if (!r.thresholds.is_null()) j["thresholds"] = r.thresholds;
  return j;
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row, r.spec.base.tau));
  nlohmann::json base;
  to_json(base, r.spec.base);
  return nlohmann::json{{"config", base}, {"sweep", to_json(r.spec)}, {"seed", r.spec.seed},
                        {"rows", rows}};
}

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace detail

inline constexpr std::array<const char*, 4> kPlotFiles = {"total_cost.csv", "delay.csv",
                                                          "reward.csv", "probing_cost.csv"};

/// Writes one CSV per figure analog plus manifest.json. Every CSV has the
/// columns policy, eta, delta, dp_cost, mc_cost, mc_se, mean_delay,
/// mean_reward, mean_probe_cost, eff_reward; the DP columns are exact
/// expectations and empty cells mark a missing solve or simulation.
inline std::vector<std::filesystem::path> emit_plot_data(const SweepResult& result,
                                                         const std::filesystem::path& dir,
                                                         const nlohmann::json& config_json = {}) {
  if (result.rows.empty()) throw ConfigError("emit_plot_data: empty sweep result");
  std::filesystem::create_directories(dir);

  std::ostringstream body;
  body << "policy,eta,delta,dp_cost,mc_cost,mc_se,mean_delay,mean_reward,mean_probe_cost,eff_reward\n";
  for (const auto& r : result.rows) {
    using detail::csv_number;
    const double tau = result.spec.base.tau;
    const bool dp = r.dp.has_value();
    body << to_string(r.policy) << ',' << csv_number(r.eta) << ',' << csv_number(r.delta) << ','
         << csv_number(dp ? r.dp->value : kNaN) << ','
         << csv_number(r.mc ? r.mc->cost.mean : kNaN) << ','
         << csv_number(r.mc ? r.mc->cost.se : kNaN) << ','
         << csv_number(dp ? r.dp->mean_delay(tau) : kNaN) << ','
         << csv_number(dp ? r.dp->components.reward : kNaN) << ','
         << csv_number(dp ? r.delta * r.dp->components.probes : kNaN) << ','
         << csv_number(dp ? r.dp->components.effective_reward(r.delta) : kNaN) << '\n';
  }
  std::vector<std::filesystem::path> written;
  for (const char* name : kPlotFiles) {
    detail::write_text(dir / name, body.str());
    written.push_back(dir / name);
  }

  nlohmann::json cfg = config_json;
  if (cfg.is_null()) {
    to_json(cfg, result.spec.base);
    cfg["sweep"] = to_json(result.spec);
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& r : result.rows)
    cells.push_back({{"policy", to_string(r.policy)}, {"eta", r.eta}, {"delta", r.delta},
                     {"status", r.status}});
  nlohmann::json manifest{{"command", "sweep"},
                          {"config", cfg},
                          {"config_hash", hex64(fnv1a(cfg.dump()))},
                          {"seed", result.spec.seed},
                          {"build", kBuildTag},
                          {"files", {"total_cost.csv", "delay.csv", "reward.csv", "probing_cost.csv"}},
                          {"cells", cells}};
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  written.push_back(dir / "manifest.json");
  return written;
}

/// Full experiment document: ModelConfig fields at the top level plus the
/// optional keys state_budget, gamma and sweep {eta_values, delta_values,
/// n_episodes, policies}. Unknown keys are rejected.
struct ExperimentConfig {
  ModelConfig model;
  std::uint64_t state_budget = CompleteSolveOptions{}.state_budget;
  std::optional<double> gamma;
  SweepSpec sweep;
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::find(kModelConfigKeys.begin(), kModelConfigKeys.end(), key) !=
                           kModelConfigKeys.end() ||
                       key == "state_budget" || key == "gamma" || key == "sweep";
    if (!known) throw ConfigError("unknown config key \"" + key + "\"");
  }
  ExperimentConfig c;
  from_json(j, c.model);
  if (j.contains("state_budget")) {
    const auto& v = j.at("state_budget");
    if (!v.is_number() || !(v.get<double>() >= 1.0))
      throw ConfigError("state_budget must be a positive number");
    c.state_budget = static_cast<std::uint64_t>(v.get<double>());
  }
  if (j.contains("gamma")) {
    if (!j.at("gamma").is_number()) throw ConfigError("gamma must be a number");
    c.gamma = j.at("gamma").get<double>();
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    if (!s.is_object()) throw ConfigError("sweep must be a JSON object");
    for (const auto& [key, value] : s.items())
      if (key != "eta_values" && key != "delta_values" && key != "n_episodes" && key != "policies")
        throw ConfigError("unknown sweep key \"" + key + "\"");
    auto numbers = [&](const char* key, std::vector<double>& out) {
      if (!s.contains(key)) return;
      const auto& a = s.at(key);
      if (!a.is_array()) throw ConfigError(std::string("sweep.") + key + " must be an array");
      out.clear();
      for (const auto& x : a) {
        if (!x.is_number()) throw ConfigError(std::string("sweep.") + key + " must hold numbers");
        out.push_back(x.get<double>());
      }
    };
    numbers("eta_values", c.sweep.eta_values);
    numbers("delta_values", c.sweep.delta_values);
    detail::read_field(s, "n_episodes", c.sweep.n_episodes);
    if (s.contains("policies")) {
      const auto& a = s.at("policies");
      if (!a.is_array()) throw ConfigError("sweep.policies must be an array");
      c.sweep.policies.clear();
      for (const auto& p : a) {
        if (!p.is_string()) throw ConfigError("sweep.policies must hold strings");
        c.sweep.policies.push_back(policy_kind_from_string(p.get<std::string>()));
      }
    }
  }
  c.sweep.base = c.model;
  c.sweep.state_budget = c.state_budget;
  validate(c.model);
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  to_json(j, c.model);
  j["state_budget"] = c.state_budget;
  if (c.gamma) j["gamma"] = *c.gamma;
  j["sweep"] = to_json(c.sweep);
  return j;
}

}  // namespace relaymdp
