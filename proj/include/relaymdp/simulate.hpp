#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "relaymdp/common.hpp"
#include "relaymdp/complete.hpp"
#include "relaymdp/config.hpp"
#include "relaymdp/model.hpp"
#include "relaymdp/parallel.hpp"
#include "relaymdp/restricted.hpp"

namespace relaymdp {

/// One realization of the randomness of a forwarding decision. Reward bins
/// are drawn up front and revealed only when a relay is probed.
struct Episode {
  std::vector<double> inter_wake;  ///< U_1..U_N
  std::vector<double> wake_times;  ///< W_k = U_1 + ... + U_k
  std::vector<std::size_t> locations;
  std::vector<std::size_t> reward_bins;

  std::size_t size() const noexcept { return locations.size(); }
};

/// SplitMix64 step; used to derive independent per-episode seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of episode `index` under `master`; a pure function of both, so any
/// parallel schedule replays the same episodes.
inline std::uint64_t episode_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

inline std::size_t sample_bin(const std::vector<double>& pmf, double u) {
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    if (pmf[i] <= 0.0) continue;
    acc += pmf[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

template <typename Rng>
Episode sample_episode(const ModelConfig& config, const OrderedFamily& family, Rng& rng) {
  const std::size_t n = config.n_relays;
  Episode e;
  e.inter_wake.resize(n);
  e.wake_times.resize(n);
  e.locations.resize(n);
  e.reward_bins.resize(n);
  std::exponential_distribution<double> wait(1.0 / config.tau);
  std::uniform_int_distribution<std::size_t> where(0, family.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double w = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    e.inter_wake[k] = config.wakeup_law == WakeupLaw::exponential ? wait(rng) : config.tau;
    w += e.inter_wake[k];
    e.wake_times[k] = w;
    e.locations[k] = where(rng);
    e.reward_bins[k] = sample_bin(family[e.locations[k]].pmf, unit(rng));
  }
  return e;
}

inline Episode sample_episode(const ModelConfig& config, const OrderedFamily& family,
                              std::uint64_t master_seed, std::uint64_t index) {
  std::mt19937_64 rng(episode_seed(master_seed, index));
  return sample_episode(config, family, rng);
}

/// Policy that only ever sees (stage, b, one retained unprobed relay).
struct RestrictedPolicy {
  std::string name;
  std::function<RestrictedAction(const RestrictedState&)> decide;
  /// Called when a relay wakes up while another unprobed relay is retained.
  std::function<Keep(std::size_t stage, BestReward best, std::size_t current,
                     std::size_t newcomer)>
      retain;
};

/// Policy that sees (stage, b, all unprobed relay types).
struct CompletePolicy {
  std::string name;
  std::function<CompleteAction(const CompleteState&)> decide;
};

using Policy = std::variant<RestrictedPolicy, CompletePolicy>;

enum class PolicyClass { restricted, complete };

inline PolicyClass policy_class(const Policy& p) {
  return std::holds_alternative<RestrictedPolicy>(p) ? PolicyClass::restricted
                                                     : PolicyClass::complete;
}

inline const std::string& policy_name(const Policy& p) {
  return std::visit([](const auto& q) -> const std::string& { return q.name; }, p);
}

/// RST-OPT: the optimal restricted-class policy.
inline RestrictedPolicy make_rst_policy(std::shared_ptr<const RestrictedTables> tables,
                                        std::string name = "RST-OPT") {
  RestrictedPolicy p;
  p.name = std::move(name);
  p.decide = [tables](const RestrictedState& s) { return act(s, *tables); };
  p.retain = [tables](std::size_t stage, BestReward best, std::size_t current,
                      std::size_t newcomer) {
    return retain_choice(*tables, stage, best.slot(tables->n_bins), current, newcomer);
  };
  return p;
}

/// GLB-OPT: the optimal complete-class policy.
inline CompletePolicy make_glb_policy(std::shared_ptr<const CompleteTables> tables,
                                      std::string name = "GLB-OPT") {
  CompletePolicy p;
  p.name = std::move(name);
  p.decide = [tables](const CompleteState& s) { return act_complete(s, *tables); };
  return p;
}

/// Baseline: probe the first relay that wakes up and forward to it.
inline RestrictedPolicy make_first_wake_policy() {
  RestrictedPolicy p;
  p.name = "first-wake";
  p.decide = [](const RestrictedState& s) {
    return RestrictedAction{s.best.is_none() ? ActionKind::probe : ActionKind::stop};
  };
  p.retain = [](std::size_t, BestReward, std::size_t, std::size_t) { return Keep::current; };
  return p;
}

struct EpisodeOutcome {
  double delay = 0.0;   ///< D, wake-up time of the chosen relay (includes U_1)
  double reward = 0.0;  ///< normalized reward of the chosen relay
  std::size_t probes = 0;
  double cost = 0.0;    ///< (D - U_1) - eta R + eta delta M
  double effective_reward = 0.0;
  std::size_t stop_stage = 0;
  std::size_t reward_bin = 0;
};

namespace detail {

inline EpisodeOutcome finish(const Episode& e, const ModelConfig& c, const RewardGrid& grid,
                             std::size_t stage, std::size_t bin, std::size_t probes) {
  EpisodeOutcome o;
  o.stop_stage = stage;
  o.delay = e.wake_times[stage - 1];
  o.reward_bin = bin;
  o.reward = grid.value(bin);
  o.probes = probes;
  o.cost = (o.delay - e.inter_wake[0]) - c.eta * o.reward + c.eta * c.delta * static_cast<double>(probes);
  o.effective_reward = o.reward - c.delta * static_cast<double>(probes);
  return o;
}

inline EpisodeOutcome run_restricted(const Episode& e, const RestrictedPolicy& policy,
                                     const OrderedFamily& family, const ModelConfig& c) {
  const std::size_t n = e.size();
  std::size_t k = 1;
  BestReward best = BestReward::none();
  std::optional<std::size_t> retained = 0;  // index into the episode
  std::size_t probes = 0;
  for (;;) {
    const RestrictedState view{k, best,
                               retained ? std::optional(e.locations[*retained]) : std::nullopt};
    const RestrictedAction a = policy.decide(view);
    check_restricted_action(view, a, n);
    switch (a.kind) {
      case ActionKind::stop: return finish(e, c, family.grid, k, best.bin(), probes);
      case ActionKind::probe:
        best = best.with_probe(e.reward_bins[*retained]);
        retained.reset();
        ++probes;
        break;
      case ActionKind::cont: {
        ++k;
        const std::size_t newcomer = k - 1;
        if (!retained) {
          retained = newcomer;
        } else if (policy.retain(k, best, e.locations[*retained], e.locations[newcomer]) ==
                   Keep::newcomer) {
          retained = newcomer;
        }
        break;
      }
      case ActionKind::none: break;  // rejected by check_restricted_action
    }
  }
}

inline EpisodeOutcome run_complete(const Episode& e, const CompletePolicy& policy,
                                   const OrderedFamily& family, const ModelConfig& c) {
  const std::size_t n = e.size();
  std::size_t k = 1;
  BestReward best = BestReward::none();
  std::vector<std::size_t> unprobed{0};
  std::size_t probes = 0;
  CompleteState view;
  for (;;) {
    view.stage = k;
    view.best = best;
    view.unprobed.clear();
    for (auto i : unprobed)
      view.unprobed.push_back(static_cast<std::uint16_t>(family.position[e.locations[i]]));
    std::sort(view.unprobed.begin(), view.unprobed.end());

    const CompleteAction a = policy.decide(view);
    auto fail = [&](const std::string& why) {
      throw IllegalActionError(why + " at stage " + std::to_string(k) + ", best=" +
                               best.to_string() + ", unprobed=" +
                               std::to_string(unprobed.size()));
    };
    switch (a.kind) {
      case ActionKind::stop:
        if (best.is_none()) fail("STOP with no probed relay");
        return finish(e, c, family.grid, k, best.bin(), probes);
      case ActionKind::probe: {
        auto it = std::find_if(unprobed.begin(), unprobed.end(), [&](std::size_t i) {
          return family.position[e.locations[i]] == a.target;
        });
        if (it == unprobed.end()) fail("PROBE of a type that is not awake");
        best = best.with_probe(e.reward_bins[*it]);
        unprobed.erase(it);
        ++probes;
        break;
      }
      case ActionKind::cont:
        if (k >= n) fail("CONTINUE at the last stage");
        ++k;
        unprobed.push_back(k - 1);
        break;
      case ActionKind::none: fail("no action");
    }
  }
}

}  // namespace detail

/// Replays an episode against a policy. Probes reveal the pre-drawn bins;
/// stopping at stage k yields D = W_k.
inline EpisodeOutcome run_policy(const Episode& episode, const Policy& policy,
                                 const OrderedFamily& family, const ModelConfig& config) {
  if (episode.size() == 0) throw ConfigError("episode has no relays");
  return std::visit(
      [&](const auto& p) -> EpisodeOutcome {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, RestrictedPolicy>)
          return detail::run_restricted(episode, p, family, config);
        else
          return detail::run_complete(episode, p, family, config);
      },
      policy);
}

/// Streaming mean and variance (Welford), mergeable (Chan et al.).
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / total;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

struct MetricEstimate {
  double mean = 0.0;
  double se = 0.0;
};

struct Estimates {
  std::string policy;
  double eta = 0.0;
  double delta = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  MetricEstimate delay;
  MetricEstimate reward;
  MetricEstimate probes;
  MetricEstimate cost;
  MetricEstimate effective_reward;
  bool zero_variance = false;  ///< standard errors are not informative (n = 1)
};

/// Monte-Carlo estimate of a policy's delay, reward, probe count and cost.
/// Episodes are processed in fixed-size chunks merged in chunk order, so the
/// result does not depend on the number of threads.
inline Estimates monte_carlo(const ModelConfig& config, const OrderedFamily& family,
                             const Policy& policy, std::size_t n_episodes, std::uint64_t seed,
                             std::size_t threads = 1) {
  if (n_episodes < 1) throw ConfigError("n_episodes must be >= 1");
  constexpr std::size_t kChunk = 4096;
  const std::size_t n_chunks = (n_episodes + kChunk - 1) / kChunk;
  struct Chunk {
    RunningStats d, r, m, cost, eff;
  };
  std::vector<Chunk> chunks(n_chunks);

  parallel_for(n_chunks, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      auto& acc = chunks[c];
      const std::size_t last = std::min(n_episodes, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < last; ++i) {
        const Episode e = sample_episode(config, family, seed, i);
        const EpisodeOutcome o = run_policy(e, policy, family, config);
        acc.d.add(o.delay);
        acc.r.add(o.reward);
        acc.m.add(static_cast<double>(o.probes));
        acc.cost.add(o.cost);
        acc.eff.add(o.effective_reward);
      }
    }
  });

  Chunk total;
  for (const auto& c : chunks) {
    total.d.merge(c.d);
    total.r.merge(c.r);
    total.m.merge(c.m);
    total.cost.merge(c.cost);
    total.eff.merge(c.eff);
  }
  auto est = [](const RunningStats& s) { return MetricEstimate{s.mean, s.standard_error()}; };
  Estimates out;
  out.policy = policy_name(policy);
  out.eta = config.eta;
  out.delta = config.delta;
  out.n = n_episodes;
  out.seed = seed;
  out.delay = est(total.d);
  out.reward = est(total.r);
  out.probes = est(total.m);
  out.cost = est(total.cost);
  out.effective_reward = est(total.eff);
  out.zero_variance = n_episodes < 2;
  return out;
}

inline nlohmann::json to_json(const Estimates& e) {
  return nlohmann::json{{"policy", e.policy},
                        {"eta", e.eta},
                        {"delta", e.delta},
                        {"n", e.n},
                        {"seed", e.seed},
                        {"mean_D", e.delay.mean},
                        {"se_D", e.delay.se},
                        {"mean_R", e.reward.mean},
                        {"se_R", e.reward.se},
                        {"mean_M", e.probes.mean},
                        {"se_M", e.probes.se},
                        {"mean_cost", e.cost.mean},
                        {"se_cost", e.cost.se},
                        {"mean_eff_reward", e.effective_reward.mean},
                        {"se_eff_reward", e.effective_reward.se},
                        {"zero_variance", e.zero_variance}};
}

}  // namespace relaymdp
