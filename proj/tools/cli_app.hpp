#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relaymdp.hpp"

namespace relaymdp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kError = 1, kVerifyFailed = 2 };

struct Options {
  std::string command;
  std::string config_path;
  std::string out_dir = "relaymdp-out";
  std::uint64_t seed = 1;
  std::optional<std::size_t> threads;
  std::vector<std::string> overrides;
  std::optional<std::string> policy;
  std::optional<std::size_t> episodes;
};

inline std::size_t resolve_cli_threads(const Options& o) {
  if (o.threads) return *o.threads;
  if (const char* env = std::getenv("RELAYMDP_THREADS")) {
    try {
      std::size_t pos = 0;
      const unsigned long v = std::stoul(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("RELAYMDP_THREADS must be a non-negative integer, got \"") +
                      env + "\"");
  }
  return 1;
}

/// key=value with a dotted key path; the value is JSON when it parses as
/// JSON and a plain string otherwise.
inline void apply_override(json& doc, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--override expects key=value, got \"" + text + "\"");
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("--override has an empty key segment in \"" + key + "\"");
    if (!node->is_object()) throw ConfigError("--override path \"" + key + "\" is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

/// Reads the config document (defaults when no path is given) and applies overrides.
inline json load_config_document(const Options& o) {
  json doc = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file \"" + o.config_path + "\"");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file \"" + o.config_path + "\" is not valid JSON: " + e.what());
    }
  }
  for (const auto& ov : o.overrides) apply_override(doc, ov);
  return doc;
}

class Session {
 public:
  Session(Options o, std::ostream& out) : opt_(std::move(o)), out_(out) {
    config_ = experiment_config_from_json(load_config_document(opt_));
    threads_ = resolve_cli_threads(opt_);
    dir_ = opt_.out_dir;
    fs::create_directories(dir_);
  }

  const ExperimentConfig& config() const { return config_; }
  const ModelConfig& model() const { return config_.model; }
  const Options& options() const { return opt_; }
  std::size_t threads() const { return threads_; }

  const LocationGrid& grid() {
    if (!grid_) grid_ = build_forwarding_region(model());
    return *grid_;
  }
  const OrderedFamily& family() {
    if (!family_) family_ = build_ordered_family(grid(), model());
    return *family_;
  }

  void write(const std::string& name, const json& j) {
    detail::write_text(dir_ / name, j.dump(2) + "\n");
    files_.push_back(name);
  }

  void manifest(const json& extra = json::object()) {
    const json cfg = to_json(config_);
    json m{{"command", opt_.command},
           {"config", cfg},
           {"config_hash", hex64(fnv1a(cfg.dump()))},
           {"seed", opt_.seed},
           {"build", kBuildTag},
           {"files", files_}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    detail::write_text(dir_ / "manifest.json", m.dump(2) + "\n");
  }

  std::ostream& out() { return out_; }
  const fs::path& dir() const { return dir_; }

 private:
  Options opt_;
  std::ostream& out_;
  ExperimentConfig config_;
  std::size_t threads_ = 1;
  fs::path dir_;
  std::optional<LocationGrid> grid_;
  std::optional<OrderedFamily> family_;
  std::vector<std::string> files_;
};

inline json summary_json(const DpEvaluation& e, const ModelConfig& c) {
  return json{{"dp_cost", e.value},
              {"mean_delay", e.mean_delay(c.tau)},
              {"mean_delay_excl_u1", e.components.delay},
              {"mean_reward", e.components.reward},
              {"mean_probes", e.components.probes},
              {"mean_probe_cost", c.delta * e.components.probes},
              {"eff_reward", e.components.effective_reward(c.delta)}};
}

inline void print_summary(std::ostream& os, const std::string& name, const DpEvaluation& e,
                          const ModelConfig& c) {
  os << std::setprecision(10) << name << ": cost " << e.value << ", E[D] " << e.mean_delay(c.tau)
     << ", E[R] " << e.components.reward << ", E[M] " << e.components.probes << "\n";
}

inline CompleteSolveOptions complete_options(const Session& s) {
  CompleteSolveOptions o;
  o.state_budget = s.config().state_budget;
  o.threads = s.threads();
  return o;
}

inline int cmd_solve_restricted(Session& s) {
  const auto tables = backward_induction(s.family(), s.model());
  const auto eval = evaluate(tables);
  s.write("family.json", family_to_json(s.grid(), s.family()));
  s.write("restricted_tables.json", to_json(tables));
  s.write("thresholds.json", to_json(extract_thresholds(tables)));
  s.write("summary.json", summary_json(eval, s.model()));
  s.manifest();
  print_summary(s.out(), "RST-OPT", eval, s.model());
  return kOk;
}

inline int cmd_solve_complete(Session& s) {
  const auto tables = solve_complete(s.family(), s.model(), complete_options(s));
  const auto eval = evaluate(tables);
  s.write("complete_policy.json", to_json(tables, false));
  json summary = summary_json(eval, s.model());
  summary["evaluated_states"] = tables.evaluated_states();
  s.write("summary.json", summary);
  s.manifest();
  print_summary(s.out(), "GLB-OPT", eval, s.model());
  s.out() << "evaluated states: " << tables.evaluated_states() << "\n";
  return kOk;
}

inline int cmd_simulate(Session& s) {
  const PolicyKind kind = policy_kind_from_string(s.options().policy.value_or("rst"));
  const std::size_t n = s.options().episodes.value_or(10'000);
  std::optional<Policy> policy;
  DpEvaluation eval;
  switch (kind) {
    case PolicyKind::rst: {
      auto t = std::make_shared<const RestrictedTables>(backward_induction(s.family(), s.model()));
      eval = evaluate(*t);
      policy = make_rst_policy(t);
      break;
    }
    case PolicyKind::glb: {
      auto t = std::make_shared<const CompleteTables>(
          solve_complete(s.family(), s.model(), complete_options(s)));
      eval = evaluate(*t);
      policy = make_glb_policy(t);
      break;
    }
    case PolicyKind::first:
      eval = evaluate_first_wake(s.family(), s.model());
      policy = make_first_wake_policy();
      break;
  }
  const Estimates est = monte_carlo(s.model(), s.family(), *policy, n, s.options().seed, s.threads());
  json j = to_json(est);
  j["dp"] = summary_json(eval, s.model());
  s.write("estimates.json", j);
  s.manifest();
  s.out() << std::setprecision(10) << est.policy << ": MC cost " << est.cost.mean << " +/- "
          << est.cost.se << " (n=" << n << "), DP cost " << eval.value << "\n";
  return kOk;
}

inline int cmd_verify(Session& s) {
  const auto tables = backward_induction(s.family(), s.model());
  json doc;
  bool passed = true;
  try {
    const auto ts = extract_thresholds(tables);
    const auto report = verify_structure(tables, ts, s.family());
    doc["restricted"] = to_json(report);
    doc["thresholds"] = to_json(ts);
    passed = report.all_passed();
    for (const auto& c : report.checks)
      s.out() << "check (" << c.id << ") " << (c.passed ? "PASS" : "FAIL") << "  " << c.name
              << "  [" << c.evaluated << " evaluated, worst " << c.worst << "]\n";
    for (const auto& c : report.conjectures)
      s.out() << "conjecture: " << c.name << ": " << (c.holds ? "holds" : "fails") << " ("
              << c.detail << ")\n";
  } catch (const NonThresholdError& e) {
    doc["restricted"] = json{{"all_passed", false}, {"error", e.what()}};
    s.out() << "threshold structure FAIL: " << e.what() << "\n";
    passed = false;
  }

  try {
    const auto complete = solve_complete(s.family(), s.model(), complete_options(s));
    json conj = json::array();
    for (const auto& c : verify_complete_conjectures(complete, s.family())) {
      conj.push_back({{"name", c.name}, {"holds", c.holds}, {"counterexamples", c.counterexamples},
                      {"detail", c.detail}});
      s.out() << "conjecture: " << c.name << ": " << (c.holds ? "holds" : "fails") << " ("
              << c.detail << ")\n";
    }
    const double glb = complete.initial_value();
    const double rst = tables.initial_value();
    doc["complete"] = json{{"conjectures", conj},
                           {"glb_value", glb},
                           {"rst_value", rst},
                           {"dominance_holds", glb <= rst + kStructureTolerance}};
  } catch (const BudgetExceededError& e) {
    doc["complete"] = json{{"skipped", e.what()}};
    s.out() << "complete class skipped: " << e.what() << "\n";
  }
  doc["all_passed"] = passed;
  s.write("verification.json", doc);
  s.manifest({{"status", passed ? "passed" : "failed"}});
  s.out() << (passed ? "verification passed\n" : "verification FAILED\n");
  return passed ? kOk : kVerifyFailed;
}

inline int cmd_sweep(Session& s) {
  SweepSpec spec = s.config().sweep;
  spec.seed = s.options().seed;
  spec.threads = s.threads();
  if (s.options().episodes) spec.n_episodes = *s.options().episodes;
  if (s.options().policy) spec.policies = {policy_kind_from_string(*s.options().policy)};
  const SweepResult result = run_sweep(spec);

  ExperimentConfig resolved = s.config();
  resolved.sweep = spec;
  emit_plot_data(result, s.dir(), to_json(resolved));
  detail::write_text(s.dir() / "sweep.json", to_json(result).dump(2) + "\n");

  std::ifstream in(s.dir() / "manifest.json");
  json manifest = json::parse(in);
  manifest["files"].push_back("sweep.json");
  detail::write_text(s.dir() / "manifest.json", manifest.dump(2) + "\n");

  std::size_t failed = 0;
  for (const auto& r : result.rows)
    if (!r.ok()) ++failed;
  s.out() << result.rows.size() << " cells, " << failed << " not solved; wrote " << s.dir().string()
          << "\n";
  return kOk;
}

inline int cmd_calibrate(Session& s) {
  if (!s.config().gamma)
    throw ConfigError("calibrate needs a target effective reward: set \"gamma\" in the config "
                      "or pass --override gamma=<value>");
  const PolicyKind kind = policy_kind_from_string(s.options().policy.value_or("rst"));
  const auto r = calibrate_eta(*s.config().gamma, s.model().delta, s.model(),
                               s.config().sweep.eta_values, kind, s.config().state_budget);
  s.write("calibration.json", to_json(r, s.model().tau));
  s.manifest();
  s.out() << std::setprecision(10) << "eta = " << r.eta << " (grid index " << r.index
          << "), effective reward " << r.effective_reward << ", E[D] "
          << r.dp.mean_delay(s.model().tau) << "\n";
  return kOk;
}

inline int cmd_census(Session& s) {
  const auto census = state_space_census(s.model());
  s.write("census.json", json{{"n_types", s.model().n_locations},
                              {"n_bins", s.model().n_reward_bins},
                              {"n_stages", s.model().n_relays},
                              {"stages", to_json(census)}});
  s.manifest();
  s.out() << "stage  restricted  complete  complete_reachable\n";
  for (const auto& c : census)
    s.out() << std::setw(5) << c.stage << std::setw(12) << c.restricted << std::setw(10)
            << c.complete << std::setw(20) << c.complete_reachable << "\n";
  return kOk;
}

inline int dispatch(const Options& o, std::ostream& out) {
  Session s(o, out);
  if (o.command == "solve-restricted") return cmd_solve_restricted(s);
  if (o.command == "solve-complete") return cmd_solve_complete(s);
  if (o.command == "simulate") return cmd_simulate(s);
  if (o.command == "verify") return cmd_verify(s);
  if (o.command == "sweep") return cmd_sweep(s);
  if (o.command == "calibrate") return cmd_calibrate(s);
  if (o.command == "census") return cmd_census(s);
  throw ConfigError("unknown command " + o.command);
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Relay selection with probing: solvers, simulator and experiments"};
  app.require_subcommand(1);
  Options o;
  std::size_t threads = 0;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"solve-restricted", "optimal policy of the restricted class (RST-OPT)"},
      {"solve-complete", "optimal policy of the complete class (GLB-OPT)"},
      {"simulate", "Monte-Carlo estimate of one policy"},
      {"verify", "structural checks and conjecture reports"},
      {"sweep", "multiplier sweep with plot data"},
      {"calibrate", "smallest multiplier meeting an effective-reward target"},
      {"census", "state counts of both policy classes"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "master RNG seed")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    sub->add_option("--override", o.overrides, "config override key=value (repeatable)");
    sub->add_option("--policy", o.policy, "policy: rst, glb or first")
        ->check(CLI::IsMember({"rst", "glb", "first"}));
    sub->add_option("--episodes", o.episodes, "Monte-Carlo episodes");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kError;
  }

  for (auto* sub : app.get_subcommands()) {
    o.command = sub->get_name();
    if (sub->count("--threads") > 0) o.threads = threads;
  }

  try {
    return dispatch(o, out);
  } catch (const BudgetExceededError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const InfeasibleGammaError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kError;
}

}  // namespace relaymdp::cli
