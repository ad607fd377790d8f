#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mflab/errors.hpp"

namespace mflab {

/// Flat experiment configuration. One key = value per line, '#' comments,
/// unknown keys rejected. CLI flags override file keys; nothing is read from
/// the environment.
struct ExperimentConfig {
  std::string experiment = "constants";

  // model
  std::string model = "gaussian";  // gaussian | rbf
  double model_a = 1.0;
  double model_lambda = 0.5;
  double model_kappa = 1.0;
  double model_sigma = 1.0;
  double model_rho_hat = 0.0;  // required for rbf

  // constants grids
  std::vector<long> constants_n = {64};
  std::vector<double> constants_epsilon = {0.5};
  std::vector<int> constants_d = {1};
  std::optional<double> constants_m_mm;  // default: model bound
  std::optional<double> constants_rho;   // default: model rho_hat

  // simulation
  int sim_n_particles = 64;
  int sim_dim = 1;
  double sim_dt = 0.01;
  long sim_n_steps = 100;
  int sim_n_replicas = 100;
  std::string sim_scheme = "euler_maruyama";  // euler_maruyama | exact_gaussian
  long sim_snapshot_every = 0;
  std::string init_mode = "gibbs";  // point | gaussian | gibbs
  std::vector<double> init_x0 = {0.0};
  std::vector<double> init_mean = {0.0};
  double init_var = 1.0;

  // estimators
  long est_n_samples = 200000;
  int est_dictionary_size = 20;

  // decay fit
  std::vector<double> decay_times = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  double decay_displacement = 1.0;

  // kernel check
  std::string kernel = "rbf";  // rbf | cosine | bilinear | neg_rbf
  double kernel_sigma = 1.0;
  int kernel_trials = 1000;
  int kernel_atoms = 8;
  int kernel_dim = 2;

  // concentration
  std::vector<double> conc_t_grid = {1.0, 2.0, 5.0};
  std::vector<double> conc_r_grid = {0.0, 0.25, 0.5, 1.0};
  int conc_n_replicas = 5000;
  std::string conc_m0 = "point";        // point | gibbs
  std::string conc_envelope = "pipeline";  // pipeline | theorem

  // output
  std::string out = "report.csv";
  std::string format = "csv";  // csv | csv.gz
  std::uint64_t seed = 42;
  int threads = 1;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Canonical sorted key = value lines for embedding into CSV comments.
  std::vector<std::string> resolved_lines() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse real value '" + v + "'");
  }
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse integer value '" + v + "'");
  }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse(key, item));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  char tmp[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    std::snprintf(tmp, sizeof tmp, "%.17g", v[i]);
    s += tmp;
  }
  return s;
}

template <typename T>
std::string join_ints(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_list;
  using detail::parse_long;
  if (key == "experiment") {
    experiment = value;
  } else if (key == "model") {
    model = value;
  } else if (key == "model.a") {
    model_a = parse_double(key, value);
  } else if (key == "model.lambda") {
    model_lambda = parse_double(key, value);
  } else if (key == "model.kappa") {
    model_kappa = parse_double(key, value);
  } else if (key == "model.sigma") {
    model_sigma = parse_double(key, value);
  } else if (key == "model.rho_hat") {
    model_rho_hat = parse_double(key, value);
  } else if (key == "constants.n") {
    constants_n = parse_list<long>(key, value, parse_long);
  } else if (key == "constants.epsilon") {
    constants_epsilon = parse_list<double>(key, value, parse_double);
  } else if (key == "constants.d") {
    constants_d.clear();
    for (long v : parse_list<long>(key, value, parse_long)) constants_d.push_back(static_cast<int>(v));
  } else if (key == "constants.m_mm") {
    constants_m_mm = parse_double(key, value);
  } else if (key == "constants.rho") {
    constants_rho = parse_double(key, value);
  } else if (key == "sim.n_particles") {
    sim_n_particles = static_cast<int>(parse_long(key, value));
  } else if (key == "sim.dim") {
    sim_dim = static_cast<int>(parse_long(key, value));
  } else if (key == "sim.dt") {
    sim_dt = parse_double(key, value);
  } else if (key == "sim.n_steps") {
    sim_n_steps = parse_long(key, value);
  } else if (key == "sim.n_replicas") {
    sim_n_replicas = static_cast<int>(parse_long(key, value));
  } else if (key == "sim.scheme") {
    sim_scheme = value;
  } else if (key == "sim.snapshot_every") {
    sim_snapshot_every = parse_long(key, value);
  } else if (key == "init.mode") {
    init_mode = value;
  } else if (key == "init.x0") {
    init_x0 = parse_list<double>(key, value, parse_double);
  } else if (key == "init.mean") {
    init_mean = parse_list<double>(key, value, parse_double);
  } else if (key == "init.var") {
    init_var = parse_double(key, value);
  } else if (key == "est.n_samples") {
    est_n_samples = parse_long(key, value);
  } else if (key == "est.dictionary_size") {
    est_dictionary_size = static_cast<int>(parse_long(key, value));
  } else if (key == "decay.times") {
    decay_times = parse_list<double>(key, value, parse_double);
  } else if (key == "decay.displacement") {
    decay_displacement = parse_double(key, value);
  } else if (key == "kernel") {
    kernel = value;
  } else if (key == "kernel.sigma") {
    kernel_sigma = parse_double(key, value);
  } else if (key == "kernel.trials") {
    kernel_trials = static_cast<int>(parse_long(key, value));
  } else if (key == "kernel.atoms") {
    kernel_atoms = static_cast<int>(parse_long(key, value));
  } else if (key == "kernel.dim") {
    kernel_dim = static_cast<int>(parse_long(key, value));
  } else if (key == "conc.t_grid") {
    conc_t_grid = parse_list<double>(key, value, parse_double);
  } else if (key == "conc.r_grid") {
    conc_r_grid = parse_list<double>(key, value, parse_double);
  } else if (key == "conc.n_replicas") {
    conc_n_replicas = static_cast<int>(parse_long(key, value));
  } else if (key == "conc.m0") {
    conc_m0 = value;
  } else if (key == "conc.envelope") {
    conc_envelope = value;
  } else if (key == "out") {
    out = value;
  } else if (key == "format") {
    format = value;
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_long(key, value));
  } else if (key == "threads") {
    threads = static_cast<int>(parse_long(key, value));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

inline void ExperimentConfig::validate() const {
  static const std::vector<std::string> experiments = {
      "constants",    "simulate",  "check-gamma2", "check-poincare", "check-dlsi",
      "estimate-gap", "fit-decay", "check-kernel", "concentration",  "full-suite"};
  if (std::find(experiments.begin(), experiments.end(), experiment) == experiments.end())
    throw ConfigError("unknown experiment '" + experiment + "'");
  if (model != "gaussian" && model != "rbf")
    throw ConfigError("unknown model '" + model + "' (gaussian | rbf)");
  if (model == "rbf" && !(model_rho_hat > 0.0))
    throw ConfigError("model.rho_hat > 0 must be supplied for the rbf model");
  if (sim_scheme != "euler_maruyama" && sim_scheme != "exact_gaussian")
    throw ConfigError("unknown sim.scheme '" + sim_scheme + "'");
  if (init_mode != "point" && init_mode != "gaussian" && init_mode != "gibbs")
    throw ConfigError("unknown init.mode '" + init_mode + "'");
  if (format != "csv" && format != "csv.gz")
    throw ConfigError("unknown format '" + format + "' (csv | csv.gz)");
  if (kernel != "rbf" && kernel != "cosine" && kernel != "bilinear" && kernel != "neg_rbf")
    throw ConfigError("unknown kernel '" + kernel + "'");
  if (conc_m0 != "point" && conc_m0 != "gibbs")
    throw ConfigError("unknown conc.m0 '" + conc_m0 + "' (point | gibbs)");
  if (conc_envelope != "pipeline" && conc_envelope != "theorem")
    throw ConfigError("unknown conc.envelope '" + conc_envelope + "'");
  if (threads < 1) throw ConfigError("threads >= 1 required");
}

inline std::vector<std::string> ExperimentConfig::resolved_lines() const {
  char tmp[64];
  auto d = [&](double v) {
    std::snprintf(tmp, sizeof tmp, "%.17g", v);
    return std::string(tmp);
  };
  std::map<std::string, std::string> kv;
  kv["experiment"] = experiment;
  kv["model"] = model;
  kv["model.a"] = d(model_a);
  kv["model.lambda"] = d(model_lambda);
  kv["model.kappa"] = d(model_kappa);
  kv["model.sigma"] = d(model_sigma);
  kv["model.rho_hat"] = d(model_rho_hat);
  kv["constants.n"] = detail::join_ints(constants_n);
  kv["constants.epsilon"] = detail::join_doubles(constants_epsilon);
  kv["constants.d"] = detail::join_ints(constants_d);
  if (constants_m_mm) kv["constants.m_mm"] = d(*constants_m_mm);
  if (constants_rho) kv["constants.rho"] = d(*constants_rho);
  kv["sim.n_particles"] = std::to_string(sim_n_particles);
  kv["sim.dim"] = std::to_string(sim_dim);
  kv["sim.dt"] = d(sim_dt);
  kv["sim.n_steps"] = std::to_string(sim_n_steps);
  kv["sim.n_replicas"] = std::to_string(sim_n_replicas);
  kv["sim.scheme"] = sim_scheme;
  kv["sim.snapshot_every"] = std::to_string(sim_snapshot_every);
  kv["init.mode"] = init_mode;
  kv["init.x0"] = detail::join_doubles(init_x0);
  kv["init.mean"] = detail::join_doubles(init_mean);
  kv["init.var"] = d(init_var);
  kv["est.n_samples"] = std::to_string(est_n_samples);
  kv["est.dictionary_size"] = std::to_string(est_dictionary_size);
  kv["decay.times"] = detail::join_doubles(decay_times);
  kv["decay.displacement"] = d(decay_displacement);
  kv["kernel"] = kernel;
  kv["kernel.sigma"] = d(kernel_sigma);
  kv["kernel.trials"] = std::to_string(kernel_trials);
  kv["kernel.atoms"] = std::to_string(kernel_atoms);
  kv["kernel.dim"] = std::to_string(kernel_dim);
  kv["conc.t_grid"] = detail::join_doubles(conc_t_grid);
  kv["conc.r_grid"] = detail::join_doubles(conc_r_grid);
  kv["conc.n_replicas"] = std::to_string(conc_n_replicas);
  kv["conc.m0"] = conc_m0;
  kv["conc.envelope"] = conc_envelope;
  kv["out"] = out;
  kv["format"] = format;
  kv["seed"] = std::to_string(seed);
  kv["threads"] = std::to_string(threads);
  std::vector<std::string> lines;
  lines.reserve(kv.size());
  for (const auto& [k, v] : kv) lines.push_back(k + " = " + v);
  return lines;
}

/// Parses a flat key = value config file; '#' starts a comment.
inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
    cfg.set(key, value);
  }
  return cfg;
}

}  // namespace mflab
