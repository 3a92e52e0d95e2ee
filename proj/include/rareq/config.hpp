#pragma once

// Experiment configuration and its flat `key = value` text form. Keys mirror
// the struct fields with dots for nesting; `#` starts a comment; unknown keys
// are rejected.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "rareq/bayes_evt.hpp"
#include "rareq/channel_sim.hpp"
#include "rareq/dataset_io.hpp"
#include "rareq/errors.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

enum class Method { bayes_nonpar, bayes_evt, baseline_nonpar, baseline_evt };

inline constexpr std::array<Method, 4> kAllMethods{Method::bayes_nonpar, Method::bayes_evt, Method::baseline_nonpar,
                                                   Method::baseline_evt};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::bayes_nonpar: return "bayes_nonpar";
    case Method::bayes_evt: return "bayes_evt";
    case Method::baseline_nonpar: return "baseline_nonpar";
    case Method::baseline_evt: return "baseline_evt";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "'");
}

struct ExperimentConfig {
  ScenarioConfig scenario;
  QuantileSpec spec{1e-2, 0.05};
  std::size_t d = 100;
  std::size_t d_test = 50;
  std::size_t L = 5;
  std::size_t m = 100'000;
  std::vector<std::size_t> n_sweep{0, 50, 100, 316, 1000, 10'000};
  std::size_t n_ref = 1'000'000;
  double zeta = 0.4;
  std::size_t r_min = 50;
  McmcConfig mcmc;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::string output_dir = "results";
  std::string dataset_path;  // non-empty: measured locations from CSV instead of the simulator
  std::size_t threads = 1;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    try {
      scenario.validate();
      spec.validate();
    } catch (const ArgumentError& e) {
      fail(e.what());
    }
    if (d < 2) fail("d must be at least 2 to fit the maps");
    if (d_test < 1) fail("d_test must be at least 1");
    if (L < 1) fail("L must be at least 1");
    if (m < 1) fail("m must be positive");
    if (n_sweep.empty()) fail("n_sweep is empty");
    for (std::size_t i = 1; i < n_sweep.size(); ++i) {
      if (n_sweep[i] <= n_sweep[i - 1]) fail("n_sweep must be strictly increasing");
    }
    if (dataset_path.empty() && static_cast<double>(n_ref) * spec.epsilon < 10.0) fail("n_ref must be at least 10/epsilon");
    if (!(zeta > spec.epsilon && zeta <= 1.0)) fail("zeta must lie in (epsilon, 1]");
    if (r_min < 2) fail("r_min must be at least 2");
    if (mcmc.iterations < 1 || mcmc.effective_burn_in() >= mcmc.iterations) fail("mcmc.burn_in must be below mcmc.iterations");
    if (methods.empty()) fail("no methods enabled");
    if (threads < 1) fail("threads must be at least 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return x;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  // accept 1e5-style literals as long as they are exact integers
  const double x = to_double(key, v);
  if (!(x >= 0.0) || x != std::floor(x) || x > 9.007199254740992e15) {
    throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
  }
  return static_cast<std::uint64_t>(x);
}

struct ConfigField {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string fmt(double v) { return format_double(v); }

inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, ConfigField>> fields = [] {
    std::vector<std::pair<std::string, ConfigField>> f;
    auto add_real = [&](const std::string& key, auto access) {
      f.push_back({key, {[key, access](C& c, const std::string& v) { access(c) = to_double(key, v); },
                         [access](C c) { return fmt(access(c)); }}});
    };
    auto add_uint = [&](const std::string& key, auto access) {
      f.push_back({key,
                   {[key, access](C& c, const std::string& v) {
                      access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(to_uint(key, v));
                    },
                    [access](C c) { return std::to_string(access(c)); }}});
    };
    add_real("scenario.cell.x_min", [](C& c) -> double& { return c.scenario.cell.x_min; });
    add_real("scenario.cell.x_max", [](C& c) -> double& { return c.scenario.cell.x_max; });
    add_real("scenario.cell.y_min", [](C& c) -> double& { return c.scenario.cell.y_min; });
    add_real("scenario.cell.y_max", [](C& c) -> double& { return c.scenario.cell.y_max; });
    add_real("scenario.bs.x", [](C& c) -> double& { return c.scenario.bs.x; });
    add_real("scenario.bs.y", [](C& c) -> double& { return c.scenario.bs.y; });
    add_real("scenario.bs.z", [](C& c) -> double& { return c.scenario.bs.z; });
    add_real("scenario.user_height_m", [](C& c) -> double& { return c.scenario.user_height_m; });
    add_real("scenario.grid_step_m", [](C& c) -> double& { return c.scenario.grid_step_m; });
    add_uint("scenario.num_paths", [](C& c) -> int& { return c.scenario.num_paths; });
    add_real("scenario.noise_power_dbm", [](C& c) -> double& { return c.scenario.noise_power_dbm; });
    add_real("scenario.tx_power_dbm", [](C& c) -> double& { return c.scenario.tx_power_dbm; });
    add_real("scenario.pathloss_ref_db", [](C& c) -> double& { return c.scenario.pathloss_ref_db; });
    add_real("scenario.pathloss_exponent", [](C& c) -> double& { return c.scenario.pathloss_exponent; });
    add_real("scenario.shadowing_sigma_db", [](C& c) -> double& { return c.scenario.shadowing_sigma_db; });
    add_real("scenario.decorrelation_m", [](C& c) -> double& { return c.scenario.decorrelation_m; });
    add_real("scenario.rice_k_db", [](C& c) -> double& { return c.scenario.rice_k_db; });
    add_real("scenario.rice_k_sigma_db", [](C& c) -> double& { return c.scenario.rice_k_sigma_db; });
    add_real("scenario.path_decay", [](C& c) -> double& { return c.scenario.path_decay; });
    add_real("scenario.thomas.parent_intensity", [](C& c) -> double& { return c.scenario.thomas.parent_intensity; });
    add_real("scenario.thomas.offspring_mean", [](C& c) -> double& { return c.scenario.thomas.offspring_mean; });
    add_real("scenario.thomas.offspring_sigma_m", [](C& c) -> double& { return c.scenario.thomas.offspring_sigma_m; });
    add_uint("scenario.thomas.max_rounds", [](C& c) -> int& { return c.scenario.thomas.max_rounds; });
    add_uint("seed", [](C& c) -> std::uint64_t& { return c.scenario.master_seed; });
    add_real("spec.epsilon", [](C& c) -> double& { return c.spec.epsilon; });
    add_real("spec.delta", [](C& c) -> double& { return c.spec.delta; });
    add_uint("d", [](C& c) -> std::size_t& { return c.d; });
    add_uint("d_test", [](C& c) -> std::size_t& { return c.d_test; });
    add_uint("L", [](C& c) -> std::size_t& { return c.L; });
    add_uint("m", [](C& c) -> std::size_t& { return c.m; });
    add_uint("n_ref", [](C& c) -> std::size_t& { return c.n_ref; });
    add_real("zeta", [](C& c) -> double& { return c.zeta; });
    add_uint("r_min", [](C& c) -> std::size_t& { return c.r_min; });
    add_uint("mcmc.iterations", [](C& c) -> int& { return c.mcmc.iterations; });
    add_real("mcmc.proposal_scale", [](C& c) -> double& { return c.mcmc.proposal_scale; });
    add_uint("threads", [](C& c) -> std::size_t& { return c.threads; });

    f.push_back({"mcmc.burn_in",
                 {[](C& c, const std::string& v) {
                    const double x = to_double("mcmc.burn_in", v);
                    if (x != std::floor(x) || x < -1.0) throw ConfigError("mcmc.burn_in: expected an integer >= -1");
                    c.mcmc.burn_in = static_cast<int>(x);
                  },
                  [](const C& c) { return std::to_string(c.mcmc.burn_in); }}});
    f.push_back({"mcmc.proposal_sd",
                 {[](C& c, const std::string& v) {
                    const auto items = split_list(v);
                    if (items.size() != 3) throw ConfigError("mcmc.proposal_sd: expected three values");
                    for (std::size_t i = 0; i < 3; ++i) c.mcmc.proposal_sd[i] = to_double("mcmc.proposal_sd", items[i]);
                  },
                  [](const C& c) {
                    return fmt(c.mcmc.proposal_sd[0]) + ", " + fmt(c.mcmc.proposal_sd[1]) + ", " +
                           fmt(c.mcmc.proposal_sd[2]);
                  }}});
    f.push_back({"n_sweep",
                 {[](C& c, const std::string& v) {
                    c.n_sweep.clear();
                    for (const auto& s : split_list(v)) c.n_sweep.push_back(to_uint("n_sweep", s));
                  },
                  [](const C& c) {
                    std::string s;
                    for (auto n : c.n_sweep) s += (s.empty() ? "" : ", ") + std::to_string(n);
                    return s;
                  }}});
    f.push_back({"methods",
                 {[](C& c, const std::string& v) {
                    c.methods.clear();
                    for (const auto& s : split_list(v)) c.methods.push_back(parse_method(s));
                  },
                  [](const C& c) {
                    std::string s;
                    for (auto m : c.methods) s += (s.empty() ? "" : ", ") + to_string(m);
                    return s;
                  }}});
    f.push_back({"output_dir", {[](C& c, const std::string& v) { c.output_dir = v; },
                                [](const C& c) { return c.output_dir; }}});
    f.push_back({"dataset.path", {[](C& c, const std::string& v) { c.dataset_path = v; },
                                  [](const C& c) { return c.dataset_path; }}});
    return f;
  }();
  return fields;
}

}  // namespace detail

/// Applies one `key = value` assignment; throws ConfigError on unknown keys
/// or malformed values.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [k, field] : detail::config_fields()) {
    if (k == key) {
      field.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (seen.count(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(seen[key]) + ")");
    }
    seen[key] = line_no;
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

/// Every key with its current value, in a form parse_config reads back.
inline void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  for (const auto& [k, field] : detail::config_fields()) out << k << " = " << field.get(cfg) << '\n';
}

}  // namespace rareq
