#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "relaymdp/errors.hpp"

namespace relaymdp {

enum class WakeupLaw { exponential, deterministic };

inline std::string to_string(WakeupLaw law) {
  return law == WakeupLaw::exponential ? "exponential" : "deterministic";
}

inline WakeupLaw wakeup_law_from_string(const std::string& name) {
  if (name == "exponential") return WakeupLaw::exponential;
  if (name == "deterministic") return WakeupLaw::deterministic;
  throw ConfigError("wakeup_law must be \"exponential\" or \"deterministic\", got \"" + name +
                    "\"");
}

/// Parameters of one local forwarding instance.
///
/// Defaults reproduce the numerical setup used throughout the project: a
/// source 10 units from the sink, unit communication radius, 20 candidate
/// relay locations, 100 reward levels, five relays waking up with mean
/// inter-wake-up time 0.2, Gamma*N0 = 1, path-loss exponent 2 and a = 0.5.
struct ModelConfig {
  double v0 = 10.0;               ///< source-sink distance
  double comm_radius = 1.0;       ///< communication range
  std::size_t n_locations = 20;   ///< discretized forwarding-region points
  std::size_t n_reward_bins = 100;
  double gamma_n0 = 1.0;          ///< SNR threshold times noise power
  double beta = 2.0;              ///< path-loss exponent
  double a = 0.5;                 ///< progress/power weight
  std::size_t n_relays = 5;       ///< N, number of relay wake-ups (stages)
  double tau = 0.2;               ///< mean inter-wake-up time
  double eta = 1.0;               ///< Lagrange multiplier
  double delta = 0.1;             ///< probing cost in reward units
  WakeupLaw wakeup_law = WakeupLaw::exponential;
  double tail_mass = 1e-3;        ///< reward-grid truncation quantile

  bool operator==(const ModelConfig&) const = default;
};

/// Checks only the fields the dynamic programs and the simulator consume.
inline void validate_decision_params(const ModelConfig& c) {
  if (c.n_relays < 1) throw ConfigError("n_relays must be >= 1");
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) throw ConfigError("tau must be > 0");
  if (!(c.eta >= 0.0) || !std::isfinite(c.eta)) throw ConfigError("eta must be >= 0");
  if (!(c.delta >= 0.0) || !std::isfinite(c.delta)) throw ConfigError("delta must be >= 0");
}

inline void validate(const ModelConfig& c) {
  if (!(c.comm_radius > 0.0)) throw ConfigError("comm_radius must be > 0 (empty forwarding region)");
  if (!(c.v0 > c.comm_radius)) throw ConfigError("v0 must exceed comm_radius");
  if (c.n_locations < 1) throw ConfigError("n_locations must be >= 1");
  if (c.n_reward_bins < 2) throw ConfigError("n_reward_bins must be >= 2");
  if (!(c.gamma_n0 > 0.0)) throw ConfigError("gamma_n0 must be > 0");
  if (!(c.a >= 0.0 && c.a <= 1.0)) throw ConfigError("a must lie in [0, 1]");
  if (!(c.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(c.tail_mass > 0.0 && c.tail_mass < 1.0)) throw ConfigError("tail_mass must lie in (0, 1)");
  validate_decision_params(c);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"v0", c.v0},
                     {"comm_radius", c.comm_radius},
                     {"n_locations", c.n_locations},
                     {"n_reward_bins", c.n_reward_bins},
                     {"gamma_n0", c.gamma_n0},
                     {"beta", c.beta},
                     {"a", c.a},
                     {"n_relays", c.n_relays},
                     {"tau", c.tau},
                     {"eta", c.eta},
                     {"delta", c.delta},
                     {"wakeup_law", to_string(c.wakeup_law)},
                     {"tail_mass", c.tail_mass}};
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field \"") + key + "\": " + e.what());
  }
}

template <>
inline void read_field<std::size_t>(const nlohmann::json& j, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config field \"") + key + "\" must be a non-negative integer");
  out = v.get<std::size_t>();
}

}  // namespace detail

inline constexpr std::array<std::string_view, 13> kModelConfigKeys = {
    "v0",   "comm_radius", "n_locations", "n_reward_bins", "gamma_n0", "beta",     "a",
    "n_relays", "tau",     "eta",         "delta",         "wakeup_law", "tail_mass"};

/// Reads the fields that are present; missing fields keep their defaults.
/// Unknown keys are left for the caller to reject.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  detail::read_field(j, "v0", c.v0);
  detail::read_field(j, "comm_radius", c.comm_radius);
  detail::read_field(j, "n_locations", c.n_locations);
  detail::read_field(j, "n_reward_bins", c.n_reward_bins);
  detail::read_field(j, "gamma_n0", c.gamma_n0);
  detail::read_field(j, "beta", c.beta);
  detail::read_field(j, "a", c.a);
  detail::read_field(j, "n_relays", c.n_relays);
  detail::read_field(j, "tau", c.tau);
  detail::read_field(j, "eta", c.eta);
  detail::read_field(j, "delta", c.delta);
  detail::read_field(j, "tail_mass", c.tail_mass);
  if (j.contains("wakeup_law")) {
    if (!j.at("wakeup_law").is_string()) throw ConfigError("wakeup_law must be a string");
    c.wakeup_law = wakeup_law_from_string(j.at("wakeup_law").get<std::string>());
  }
}

}  // namespace relaymdp
