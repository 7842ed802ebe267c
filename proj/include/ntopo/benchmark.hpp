#pragma once

// Run configuration: benchmark geometry plus every hyperparameter of one
// optimization run, and the key = value config format that sets them.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "amfilter.hpp"
#include "fea.hpp"
#include "mesh.hpp"

namespace ntopo {

struct PointLoad {
  int dof = 0;
  double magnitude = 0.0;
};

struct BenchmarkCase {
  std::string name = "custom";
  int nelx = 60;
  int nely = 20;
  double elem_size = 1.0;
  double volume_fraction = 0.5;

  std::vector<PointLoad> loads;
  std::vector<int> fixed_dofs;
  std::vector<int> passive_elements;

  bool filter_enabled = true;
  bool stress_enabled = false;

  MaterialModel material;
  FilterParams filter;
  StressAggregate stress;

  // Training schedule.
  int iterations = 600;
  double learning_rate = 0.01;
  std::vector<std::pair<double, double>> lr_decay = {{0.6, 0.5}, {0.85, 0.5}};
  double alpha_start = 1.0;
  double alpha_end = 100.0;
  double gamma_start = 0.0;
  double gamma_end = 50.0;
  double ramp_fraction = 0.4;
  bool two_sided_stress_penalty = false;

  // Network and encoding.
  int fourier_m = 64;
  double fourier_scale = 2.0;
  std::uint64_t fourier_seed = 0;
  std::vector<int> hidden_widths = {64, 64};
  int cheb_order = 1;
  std::uint64_t seed = 0;

  // Feasibility of a returned iterate.
  double volume_tolerance = 0.01;
  double stress_tolerance = 0.02;

  // Whether the convergence log's seconds column holds wall time (else 0,
  // keeping the log bit-reproducible).
  bool log_timing = false;

  Vector load_vector() const {
    Vector f = Vector::Zero(2 * (nelx + 1) * (nely + 1));
    for (const auto &l : loads) {
      if (l.dof < 0 || l.dof >= f.size())
        throw InvalidArgument("load DOF " + std::to_string(l.dof) + " out of range");
      f[l.dof] += l.magnitude;
    }
    return f;
  }

  std::vector<bool> passive_mask() const {
    std::vector<bool> mask(static_cast<std::size_t>(nelx * nely), false);
    for (int e : passive_elements) {
      if (e < 0 || e >= nelx * nely)
        throw InvalidArgument("passive element " + std::to_string(e) + " out of range");
      mask[static_cast<std::size_t>(e)] = true;
    }
    return mask;
  }

  void validate() const {
    if (nelx < 1 || nely < 1)
      throw InvalidArgument("nelx and nely must be positive");
    if (!(volume_fraction > 0.0 && volume_fraction < 1.0))
      throw InvalidArgument("volfrac must lie in (0, 1)");
    if (iterations < 1)
      throw InvalidArgument("iters must be positive");
    if (!(learning_rate > 0.0))
      throw InvalidArgument("lr must be positive");
    if (fourier_m < 1)
      throw InvalidArgument("fourier_m must be >= 1");
    if (cheb_order < 0)
      throw InvalidArgument("cheb_order must be >= 0");
    if (alpha_start < 0 || alpha_end < 0 || gamma_start < 0 || gamma_end < 0)
      throw InvalidArgument("penalty weights must be non-negative");
    material.validate();
    filter.validate();
    stress.validate();
  }
};

/// Names of the shipped presets.
inline const std::vector<std::string> &preset_names() {
  static const std::vector<std::string> names = {"simply_supported", "tip_cantilever",
                                                 "mid_cantilever"};
  return names;
}

/// Geometry of a preset at a given resolution. Loads are unit magnitude per
/// loaded node, pointing down (-y).
///
/// - simply_supported: bottom-left node pinned in x and y, bottom-right node
///   in y, unit load on every bottom-edge node, bottom layer passive solid.
/// - tip_cantilever: left edge clamped, load at the bottom-right corner.
/// - mid_cantilever: left edge clamped, load at the right-edge midpoint.
inline BenchmarkCase make_preset(const std::string &name, int nelx = 60, int nely = 20) {
  if (nelx < 1 || nely < 1)
    throw InvalidArgument("preset: nelx and nely must be positive");
  BenchmarkCase c;
  c.name = name;
  c.nelx = nelx;
  c.nely = nely;
  c.volume_fraction = 0.5;
  c.stress.sigma_allow = 2.3;
  c.material = MaterialModel{1.0, 1e-9, 0.3, 3.0};
  auto node = [&](int row, int col) { return row * (nelx + 1) + col; };
  if (name == "simply_supported") {
    c.fixed_dofs = {2 * node(0, 0), 2 * node(0, 0) + 1, 2 * node(0, nelx) + 1};
    for (int col = 0; col <= nelx; ++col)
      c.loads.push_back({2 * node(0, col) + 1, -1.0});
    for (int j = 0; j < nelx; ++j)
      c.passive_elements.push_back(j);
  } else if (name == "tip_cantilever" || name == "mid_cantilever") {
    for (int row = 0; row <= nely; ++row) {
      c.fixed_dofs.push_back(2 * node(row, 0));
      c.fixed_dofs.push_back(2 * node(row, 0) + 1);
    }
    const int load_row = name == "tip_cantilever" ? 0 : nely / 2;
    c.loads.push_back({2 * node(load_row, nelx) + 1, -1.0});
  } else if (name != "custom") {
    throw InvalidArgument("unknown case '" + name + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Config files: one `key = value` per line, `#` starts a comment.

class ConfigError : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

struct ConfigEntry {
  std::string value;
  std::string origin; // "file:line" or "command line"
};

using ConfigMap = std::map<std::string, ConfigEntry>;

inline std::string trim(const std::string &s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
    ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
    --e;
  return s.substr(b, e - b);
}

inline ConfigMap parse_config(std::istream &in, const std::string &source) {
  ConfigMap out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(where + ": missing key");
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = ConfigEntry{value, where};
  }
  return out;
}

inline ConfigMap load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

namespace detail {

inline double to_double(const std::string &key, const ConfigEntry &e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size())
      throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception &) {
    throw ConfigError(e.origin + ": field '" + key + "' expects a number, got '" + e.value + "'");
  }
}

inline long long to_int(const std::string &key, const ConfigEntry &e) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size())
      throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception &) {
    throw ConfigError(e.origin + ": field '" + key + "' expects an integer, got '" + e.value +
                      "'");
  }
}

inline bool to_bool(const std::string &key, const ConfigEntry &e) {
  std::string v = e.value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "on" || v == "true" || v == "1" || v == "yes")
    return true;
  if (v == "off" || v == "false" || v == "0" || v == "no")
    return false;
  throw ConfigError(e.origin + ": field '" + key + "' expects on/off, got '" + e.value + "'");
}

inline std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty())
      out.push_back(trim(item));
  return out;
}

inline std::vector<int> to_int_list(const std::string &key, const ConfigEntry &e) {
  std::vector<int> out;
  for (const auto &item : split_list(e.value))
    out.push_back(static_cast<int>(to_int(key, ConfigEntry{item, e.origin})));
  return out;
}

} // namespace detail

/// Builds a case from config entries: `case`, `nelx` and `nely` pick the
/// preset geometry, every other key then overrides one field.
inline BenchmarkCase make_case(const ConfigMap &config) {
  using namespace detail;
  auto get = [&](const char *key) -> const ConfigEntry * {
    auto it = config.find(key);
    return it == config.end() ? nullptr : &it->second;
  };
  std::string name = "simply_supported";
  if (const auto *e = get("case"))
    name = e->value;
  if (name != "custom" &&
      std::find(preset_names().begin(), preset_names().end(), name) == preset_names().end()) {
    const auto *e = get("case");
    throw ConfigError(e->origin + ": field 'case' has unknown value '" + name + "'");
  }
  int nelx = 60, nely = 20;
  if (const auto *e = get("nelx"))
    nelx = static_cast<int>(to_int("nelx", *e));
  if (const auto *e = get("nely"))
    nely = static_cast<int>(to_int("nely", *e));
  if (nelx < 1 || nely < 1)
    throw ConfigError("fields 'nelx'/'nely' must be positive");
  BenchmarkCase c = make_preset(name, nelx, nely);

  for (const auto &[key, e] : config) {
    if (key == "case" || key == "nelx" || key == "nely")
      continue;
    if (key == "volfrac")
      c.volume_fraction = to_double(key, e);
    else if (key == "filter")
      c.filter_enabled = to_bool(key, e);
    else if (key == "stress")
      c.stress_enabled = to_bool(key, e);
    else if (key == "sigma_allow")
      c.stress.sigma_allow = to_double(key, e);
    else if (key == "p_norm")
      c.stress.p_norm_exponent = to_double(key, e);
    else if (key == "iters")
      c.iterations = static_cast<int>(to_int(key, e));
    else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(to_int(key, e));
      c.fourier_seed = c.seed;
    } else if (key == "fourier_seed")
      c.fourier_seed = static_cast<std::uint64_t>(to_int(key, e));
    else if (key == "lr")
      c.learning_rate = to_double(key, e);
    else if (key == "alpha_start")
      c.alpha_start = to_double(key, e);
    else if (key == "alpha_end")
      c.alpha_end = to_double(key, e);
    else if (key == "gamma_start")
      c.gamma_start = to_double(key, e);
    else if (key == "gamma_end")
      c.gamma_end = to_double(key, e);
    else if (key == "ramp_fraction")
      c.ramp_fraction = to_double(key, e);
    else if (key == "two_sided_stress")
      c.two_sided_stress_penalty = to_bool(key, e);
    else if (key == "fourier_m")
      c.fourier_m = static_cast<int>(to_int(key, e));
    else if (key == "fourier_scale")
      c.fourier_scale = to_double(key, e);
    else if (key == "hidden_widths")
      c.hidden_widths = to_int_list(key, e);
    else if (key == "cheb_order")
      c.cheb_order = static_cast<int>(to_int(key, e));
    else if (key == "epsilon")
      c.filter.epsilon = to_double(key, e);
    else if (key == "P")
      c.filter.P = to_double(key, e);
    else if (key == "penal")
      c.material.penal = to_double(key, e);
    else if (key == "E0")
      c.material.E0 = to_double(key, e);
    else if (key == "Emin")
      c.material.Emin = to_double(key, e);
    else if (key == "nu")
      c.material.nu = to_double(key, e);
    else if (key == "volume_tolerance")
      c.volume_tolerance = to_double(key, e);
    else if (key == "stress_tolerance")
      c.stress_tolerance = to_double(key, e);
    else if (key == "log_timing")
      c.log_timing = to_bool(key, e);
    else if (key == "fixed_dofs")
      c.fixed_dofs = to_int_list(key, e);
    else if (key == "passive_elements")
      c.passive_elements = to_int_list(key, e);
    else if (key == "loads") {
      c.loads.clear();
      for (const auto &item : split_list(e.value)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
          throw ConfigError(e.origin + ": field 'loads' expects dof:magnitude pairs");
        c.loads.push_back(
            {static_cast<int>(to_int(key, ConfigEntry{trim(item.substr(0, colon)), e.origin})),
             to_double(key, ConfigEntry{trim(item.substr(colon + 1)), e.origin})});
      }
    } else if (key == "out_dir")
      continue; // consumed by the CLI
    else
      throw ConfigError(e.origin + ": unknown field '" + key + "'");
  }
  try {
    c.validate();
    (void)c.load_vector();
    (void)c.passive_mask();
  } catch (const InvalidArgument &ex) {
    throw ConfigError(std::string("invalid configuration: ") + ex.what());
  }
  return c;
}

} // namespace ntopo
