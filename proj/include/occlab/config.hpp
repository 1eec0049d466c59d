#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "limit_theory.hpp"
#include "measure.hpp"
#include "particle_system.hpp"
#include "test_function.hpp"

namespace occlab {

/// Invalid or inconsistent input; the message starts with the offending field path.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kSchemaVersion = 1;

struct OracleCheckConfig {
  double x0 = 0.0;
  std::vector<double> times{1.0, 2.0};
  std::size_t replicas = 100000;
};

struct RunConfig {
  SystemConfig system;
  ThetaLaw theta = ThetaLaw::poisson(1.0);
  PlacementRule placement = PlacementRule::iid_uniform();
  std::vector<TestFunction> test_functions;
  std::vector<double> obs_times{1.0};
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  OracleCheckConfig oracle;

  Regime regime() const { return classify_regime(system.stable.alpha(), system.branching, theta, system.rate_V); }
  RunPlan plan() const { return make_plan(system, theta, placement, test_functions, obs_times, regime()); }

  nlohmann::json to_json() const {
    const auto& s = system;
    nlohmann::json j{{"schema_version", kSchemaVersion},
                     {"stable", {{"alpha", s.stable.alpha()}}},
                     {"system",
                      {{"branching", s.branching},
                       {"rate_V", s.rate_V},
                       {"horizon_T", s.horizon_T},
                       {"tau", s.tau},
                       {"window_cw", s.window_cw},
                       {"support_eps", s.support_eps},
                       {"step_budget", s.step_budget},
                       {"sampler", to_string(s.sampler)}}},
                     {"theta", theta.to_json()},
                     {"placement", placement.to_json()},
                     {"test_functions", [&] {
                        nlohmann::json a = nlohmann::json::array();
                        for (const auto& f : test_functions) a.push_back(f.to_json());
                        return a;
                      }()},
                     {"obs_times", obs_times},
                     {"replicas", replicas},
                     {"seed", seed},
                     {"oracle", {{"x0", oracle.x0}, {"times", oracle.times}, {"replicas", oracle.replicas}}}};
    if (s.step_delta) j["system"]["step_delta"] = *s.step_delta;
    return j;
  }

  /// 16 hex digits, FNV-1a over the canonical JSON dump.
  std::string fingerprint() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  static RunConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& parent, const char* key) {
  const std::string path = parent.empty() ? key : parent + "." + key;
  if (!j.is_object()) throw ConfigError(parent + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + ": missing required field");
  return *it;
}

template <class T>
T get_as(const nlohmann::json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": wrong type (" + e.what() + ")");
  }
}

template <class T>
T optional_field(const nlohmann::json& j, const std::string& parent, const char* key, T dflt) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  return get_as<T>(*it, parent + "." + key);
}

/// Runs f and prefixes any error with `path`.
template <class F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  using detail::get_as;
  using detail::optional_field;
  using detail::require;
  using detail::with_path;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  const int ver = get_as<int>(require(j, "", "schema_version"), "schema_version");
  if (ver != kSchemaVersion)
    throw ConfigError("schema_version: unsupported version " + std::to_string(ver) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");

  const auto& st = require(j, "", "stable");
  const double alpha = get_as<double>(require(st, "stable", "alpha"), "stable.alpha");
  c.system.stable = with_path("stable.alpha", [&] { return StableParams(alpha); });

  if (auto it = j.find("system"); it != j.end()) {
    const auto& s = *it;
    if (!s.is_object()) throw ConfigError("system: expected an object");
    auto& y = c.system;
    y.branching = optional_field(s, "system", "branching", y.branching);
    y.rate_V = optional_field(s, "system", "rate_V", y.rate_V);
    y.horizon_T = optional_field(s, "system", "horizon_T", y.horizon_T);
    y.tau = optional_field(s, "system", "tau", y.tau);
    if (auto d = s.find("step_delta"); d != s.end() && !d->is_null())
      y.step_delta = get_as<double>(*d, "system.step_delta");
    y.window_cw = optional_field(s, "system", "window_cw", y.window_cw);
    y.support_eps = optional_field(s, "system", "support_eps", y.support_eps);
    y.step_budget = optional_field(s, "system", "step_budget", y.step_budget);
    const auto smp = optional_field<std::string>(s, "system", "sampler", "auto");
    y.sampler = with_path("system.sampler", [&] { return sampler_from_string(smp); });
    if (y.branching && s.find("rate_V") == s.end()) throw ConfigError("system.rate_V: required when branching");
  }
  try {
    c.system.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  c.theta = with_path("theta", [&] { return ThetaLaw::from_json(require(j, "", "theta")); });
  if (auto it = j.find("placement"); it != j.end())
    c.placement = with_path("placement", [&] { return PlacementRule::from_json(*it); });

  const auto& tf = require(j, "", "test_functions");
  if (!tf.is_array() || tf.empty()) throw ConfigError("test_functions: expected a non-empty array");
  for (std::size_t i = 0; i < tf.size(); ++i) {
    const std::string p = "test_functions[" + std::to_string(i) + "]";
    c.test_functions.push_back(with_path(p, [&] { return TestFunction::from_json(tf[i]); }));
  }

  if (auto it = j.find("obs_times"); it != j.end()) c.obs_times = get_as<std::vector<double>>(*it, "obs_times");
  if (c.obs_times.empty()) throw ConfigError("obs_times: at least one time is required");
  for (std::size_t i = 0; i < c.obs_times.size(); ++i) {
    if (!(c.obs_times[i] > 0.0) || c.obs_times[i] > c.system.tau)
      throw ConfigError("obs_times[" + std::to_string(i) + "]: must lie in (0, system.tau]");
    if (i > 0 && !(c.obs_times[i] > c.obs_times[i - 1]))
      throw ConfigError("obs_times[" + std::to_string(i) + "]: times must be strictly increasing");
  }
  c.replicas = optional_field<std::size_t>(j, "", "replicas", c.replicas);
  c.seed = optional_field<std::uint64_t>(j, "", "seed", c.seed);
  if (auto it = j.find("oracle"); it != j.end()) {
    c.oracle.x0 = optional_field(*it, "oracle", "x0", c.oracle.x0);
    c.oracle.times = optional_field(*it, "oracle", "times", c.oracle.times);
    c.oracle.replicas = optional_field<std::size_t>(*it, "oracle", "replicas", c.oracle.replicas);
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"schema_version", "stable", "system",   "theta", "placement",
                                  "test_functions", "obs_times", "replicas", "seed",  "oracle"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(it.key() + ": unknown field");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace occlab
