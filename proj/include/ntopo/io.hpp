#pragma once

// Density exports (PGM, CSV, VTK), convergence logs and run summaries.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "amfilter.hpp"
#include "benchmark.hpp"
#include "optimizer.hpp"

namespace ntopo {

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class DensityFormat { pgm, csv, vtk };

namespace detail {

inline std::ofstream open_out(const std::string &path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os)
    throw IoError("cannot open '" + path + "' for writing");
  return os;
}

inline std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

} // namespace detail

/// 8-bit binary PGM, 255 = solid, top layer in the first pixel row.
inline void write_pgm(const DensityField &field, const std::string &path) {
  field.check_shape();
  auto os = detail::open_out(path, true);
  os << "P5\n" << field.nelx << " " << field.nely << "\n255\n";
  for (int i = field.nely - 1; i >= 0; --i)
    for (int j = 0; j < field.nelx; ++j) {
      const double v = std::clamp(field.at(i, j), 0.0, 1.0);
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  if (!os)
    throw IoError("write failed for '" + path + "'");
}

/// nely rows of nelx comma-separated values (6 decimals), top layer first.
inline void write_density_csv(const DensityField &field, const std::string &path) {
  field.check_shape();
  auto os = detail::open_out(path);
  for (int i = field.nely - 1; i >= 0; --i) {
    for (int j = 0; j < field.nelx; ++j) {
      if (j)
        os << ',';
      os << detail::fmt("%.6f", field.at(i, j));
    }
    os << '\n';
  }
  if (!os)
    throw IoError("write failed for '" + path + "'");
}

inline DensityField read_density_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty())
      continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("'" + path + "': ragged CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty())
    throw IoError("'" + path + "': empty CSV");
  DensityField f;
  f.nely = static_cast<int>(rows.size());
  f.nelx = static_cast<int>(rows.front().size());
  f.values.resize(Eigen::Index(f.nelx) * f.nely);
  for (int r = 0; r < f.nely; ++r)
    for (int j = 0; j < f.nelx; ++j)
      f.at(f.nely - 1 - r, j) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
  return f;
}

/// Legacy ASCII VTK structured points with one cell scalar named `density`.
inline void write_vtk(const DensityField &field, const std::string &path, double elem_size = 1.0) {
  field.check_shape();
  auto os = detail::open_out(path);
  os << "# vtk DataFile Version 3.0\n"
     << "ntopo density\n"
     << "ASCII\n"
     << "DATASET STRUCTURED_POINTS\n"
     << "DIMENSIONS " << field.nelx + 1 << " " << field.nely + 1 << " 1\n"
     << "ORIGIN 0 0 0\n"
     << "SPACING " << elem_size << " " << elem_size << " 1\n"
     << "CELL_DATA " << field.values.size() << "\n"
     << "SCALARS density double 1\n"
     << "LOOKUP_TABLE default\n";
  for (Eigen::Index e = 0; e < field.values.size(); ++e)
    os << detail::fmt("%.6f", field.values[e]) << '\n';
  if (!os)
    throw IoError("write failed for '" + path + "'");
}

inline void export_density(const DensityField &field, DensityFormat format,
                           const std::string &path, double elem_size = 1.0) {
  switch (format) {
  case DensityFormat::pgm:
    return write_pgm(field, path);
  case DensityFormat::csv:
    return write_density_csv(field, path);
  case DensityFormat::vtk:
    return write_vtk(field, path, elem_size);
  }
}

inline const char *convergence_header() { return "iter,compliance,volfrac,sigma_pn,loss,seconds"; }

/// One row per iteration. With `include_timing` false the seconds column is
/// written as 0 so that logs of identical runs are byte-identical.
inline std::string format_convergence_csv(const ConvergenceRecord &record, bool include_timing) {
  std::string out = convergence_header();
  out += '\n';
  for (const auto &r : record.rows) {
    out += std::to_string(r.iter);
    for (double v : {r.compliance, r.volfrac, r.sigma_pn, r.loss}) {
      out += ',';
      out += detail::fmt("%.12g", v);
    }
    out += ',';
    out += include_timing ? detail::fmt("%.3f", r.seconds) : std::string("0");
    out += '\n';
  }
  return out;
}

inline void write_convergence_csv(const ConvergenceRecord &record, const std::string &path,
                                  bool include_timing) {
  auto os = detail::open_out(path);
  os << format_convergence_csv(record, include_timing);
  if (!os)
    throw IoError("write failed for '" + path + "'");
}

inline constexpr int kSummarySchemaVersion = 1;

inline nlohmann::json run_summary(const BenchmarkCase &c, const OptimizationResult &r) {
  nlohmann::json j;
  j["schema"] = "ntopo.run_summary";
  j["version"] = kSummarySchemaVersion;
  j["case"] = c.name;
  j["nelx"] = c.nelx;
  j["nely"] = c.nely;
  j["volfrac_target"] = c.volume_fraction;
  j["filter"] = c.filter_enabled;
  j["stress"] = c.stress_enabled;
  j["sigma_allow"] = c.stress.sigma_allow;
  j["seed"] = c.seed;
  j["iterations"] = static_cast<int>(r.record.rows.size());
  j["best_iteration"] = r.best_iteration;
  j["feasible"] = r.feasible;
  j["compliance"] = r.compliance;
  j["volfrac"] = r.volfrac;
  j["sigma_pn"] = r.sigma_pn;
  j["wall_seconds"] = r.wall_seconds;
  j["aborted"] = r.aborted;
  j["abort_reason"] = r.abort_reason;
  return j;
}

} // namespace ntopo
