#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spgee/covariance.hpp"
#include "spgee/error.hpp"
#include "spgee/montecarlo.hpp"

namespace spgee {

/// Minimal TOML-style configuration: `[section]` headers, `key = value`
/// lines, `#` comments. Values may be booleans, integers, floats, quoted
/// strings, or flat arrays of numbers. Keys are stored as "section.key".
using ConfigValue =
    std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;
using ConfigMap = std::map<std::string, ConfigValue>;

namespace detail {

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view text, const std::string& where) {
  const std::string_view t = strip(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("config: '" + std::string(t) + "' at " + where +
                      " is not a number");
  return value;
}

inline ConfigValue parse_value(std::string_view raw, const std::string& key) {
  const std::string_view v = strip(raw);
  if (v.empty()) throw ConfigError("config: key '" + key + "' has no value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw ConfigError("config: unterminated string for key '" + key + "'");
    return std::string(v.substr(1, v.size() - 2));
  }
  if (v.front() == '[') {
    if (v.back() != ']')
      throw ConfigError("config: unterminated array for key '" + key + "'");
    std::vector<double> items;
    std::string_view body = v.substr(1, v.size() - 2);
    while (true) {
      const std::string_view element = strip(body.substr(0, body.find(',')));
      if (!element.empty())
        items.push_back(parse_number(element, "key '" + key + "'"));
      const auto comma = body.find(',');
      if (comma == std::string_view::npos) break;
      body.remove_prefix(comma + 1);
    }
    return items;
  }
  // Bare scalars: prefer integers when the text has no fractional syntax.
  if (v.find_first_of(".eE") == std::string_view::npos) {
    std::int64_t i = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
    if (ec == std::errc() && ptr == v.data() + v.size()) return i;
  }
  return parse_number(v, "key '" + key + "'");
}

}  // namespace detail

inline ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      section = std::string(detail::strip(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key(detail::strip(line.substr(0, eq)));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    out[full] = detail::parse_value(line.substr(eq + 1), full);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Typed accessors (errors name the key)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
const T* config_find(const ConfigMap& cfg, const std::string& key) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return nullptr;
  const T* v = std::get_if<T>(&it->second);
  if (!v) throw ConfigError("config: key '" + key + "' has the wrong type");
  return v;
}

}  // namespace detail

inline double config_double(const ConfigMap& cfg, const std::string& key,
                            double fallback) {
  if (const double* v = detail::config_find<double>(cfg, key)) return *v;
  if (const std::int64_t* v = detail::config_find<std::int64_t>(cfg, key))
    return static_cast<double>(*v);
  return fallback;
}

inline std::int64_t config_int(const ConfigMap& cfg, const std::string& key,
                               std::int64_t fallback) {
  if (const std::int64_t* v = detail::config_find<std::int64_t>(cfg, key))
    return *v;
  return fallback;
}

inline std::string config_string(const ConfigMap& cfg, const std::string& key,
                                 const std::string& fallback) {
  if (const std::string* v = detail::config_find<std::string>(cfg, key))
    return *v;
  return fallback;
}

inline VectorXd config_vector(const ConfigMap& cfg, const std::string& key,
                              const VectorXd& fallback) {
  if (const std::vector<double>* v =
          detail::config_find<std::vector<double>>(cfg, key)) {
    VectorXd out(static_cast<Eigen::Index>(v->size()));
    for (std::size_t k = 0; k < v->size(); ++k)
      out[static_cast<Eigen::Index>(k)] = (*v)[k];
    return out;
  }
  return fallback;
}

inline CorrelationKind correlation_kind_from_string(const std::string& name) {
  if (name == "indep" || name == "independence")
    return CorrelationKind::Independence;
  if (name == "ar1") return CorrelationKind::Ar1;
  if (name == "arma11") return CorrelationKind::Arma11;
  throw ConfigError("unknown correlation kind '" + name +
                    "' (expected indep, ar1, or arma11)");
}

inline KernelSpec kernel_from_string(const std::string& name) {
  if (name == "epanechnikov") return KernelSpec::epanechnikov();
  if (name == "gaussian") return KernelSpec::gaussian();
  throw ConfigError("unknown kernel '" + name +
                    "' (expected epanechnikov or gaussian)");
}

/// Builds the simulation design from the `[sim]` section.
inline SimConfig sim_config_from(const ConfigMap& cfg,
                                 const std::string& section = "sim") {
  const auto key = [&section](const char* k) { return section + "." + k; };
  SimConfig sim;
  sim.n = static_cast<int>(config_int(cfg, key("n"), sim.n));
  sim.T = static_cast<int>(config_int(cfg, key("T"), sim.T));
  sim.skip_prob = config_double(cfg, key("skip_prob"), sim.skip_prob);
  sim.beta0 = config_vector(cfg, key("beta0"), sim.beta0);
  sim.theta0 = config_vector(cfg, key("theta0"), sim.theta0);
  const std::string kind =
      config_string(cfg, key("corr_kind"), correlation_name(sim.corr.kind));
  const VectorXd phi = config_vector(cfg, key("corr_phi"), sim.corr.phi);
  sim.corr.kind = correlation_kind_from_string(kind);
  sim.corr.phi = phi;
  check_admissible(sim.corr);
  sim.variance_scale =
      config_double(cfg, key("variance_scale"), sim.variance_scale);
  sim.covariate_corr =
      config_double(cfg, key("covariate_corr"), sim.covariate_corr);
  const std::string z = config_string(cfg, key("z_kind"), "gaussian");
  if (z == "gaussian") sim.z_kind = ZKind::Gaussian;
  else if (z == "bernoulli") sim.z_kind = ZKind::Bernoulli;
  else throw ConfigError("config: key '" + key("z_kind") +
                         "' must be gaussian or bernoulli");
  sim.seed = static_cast<std::uint64_t>(
      config_int(cfg, key("seed"), static_cast<std::int64_t>(sim.seed)));
  sim.reps = static_cast<int>(config_int(cfg, key("reps"), sim.reps));
  sim.check();
  return sim;
}

/// Builds the replication-study settings from the `[study]` section.
inline StudyOptions study_options_from(const ConfigMap& cfg,
                                       const std::string& section = "study") {
  const auto key = [&section](const char* k) { return section + "." + k; };
  StudyOptions opts;
  opts.h = config_double(cfg, key("h"), opts.h);
  opts.h1 = config_double(cfg, key("h1"), opts.h1);
  opts.fitted = correlation_kind_from_string(
      config_string(cfg, key("fitted"), correlation_name(opts.fitted)));
  const std::string w = config_string(cfg, key("weights"), "estimated");
  if (w == "estimated") opts.weights = StudyWeights::Estimated;
  else if (w == "identity") opts.weights = StudyWeights::Identity;
  else if (w == "oracle") opts.weights = StudyWeights::Oracle;
  else throw ConfigError("config: key '" + key("weights") +
                         "' must be estimated, identity, or oracle");
  opts.run_sgee = config_string(cfg, key("method"), "sgee") != "puls";
  opts.iterate = static_cast<int>(config_int(cfg, key("iterate"), opts.iterate));
  opts.threads = static_cast<int>(config_int(cfg, key("threads"), opts.threads));
  opts.spec = kernel_from_string(
      config_string(cfg, key("kernel"), "epanechnikov"));
  return opts;
}

}  // namespace spgee
