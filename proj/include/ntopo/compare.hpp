#pragma once

// Three-condition comparison: no filter, filter, filter + stress constraint.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "io.hpp"
#include "optimizer.hpp"

namespace ntopo {

enum class Condition { none, filter, filter_stress };

inline constexpr std::array<Condition, 3> kConditions = {Condition::none, Condition::filter,
                                                         Condition::filter_stress};

inline const char *condition_name(Condition c) {
  switch (c) {
  case Condition::none:
    return "none";
  case Condition::filter:
    return "filter";
  case Condition::filter_stress:
    return "filter+stress";
  }
  return "?";
}

inline BenchmarkCase with_condition(BenchmarkCase c, Condition cond) {
  c.filter_enabled = cond != Condition::none;
  c.stress_enabled = cond == Condition::filter_stress;
  return c;
}

struct ConditionRun {
  bool failed = false; // threw before producing a result, or aborted
  std::string error;
  OptimizationResult result;
};

struct ComparisonRow {
  std::uint64_t seed = 0;
  std::array<ConditionRun, 3> runs;

  bool any_failed() const {
    for (const auto &r : runs)
      if (r.failed)
        return true;
    return false;
  }
  /// C_none <= C_filter <= C_filter+stress.
  bool ordering_ok() const {
    if (any_failed())
      return false;
    return runs[0].result.compliance <= runs[1].result.compliance &&
           runs[1].result.compliance <= runs[2].result.compliance;
  }
};

inline ConditionRun run_condition(const BenchmarkCase &c) {
  ConditionRun out;
  try {
    out.result = run_optimization(c);
    if (out.result.aborted) {
      out.failed = true;
      out.error = out.result.abort_reason;
    }
  } catch (const std::exception &e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

using ProgressCallback =
    std::function<void(std::uint64_t seed, Condition cond, const ConditionRun &run)>;

/// Runs every condition for every seed. A failing run is recorded in its row
/// and the remaining runs continue.
inline std::vector<ComparisonRow> run_comparison(const BenchmarkCase &base,
                                                 const std::vector<std::uint64_t> &seeds,
                                                 const ProgressCallback &progress = {}) {
  std::vector<ComparisonRow> rows;
  for (const auto seed : seeds) {
    ComparisonRow row;
    row.seed = seed;
    for (std::size_t k = 0; k < kConditions.size(); ++k) {
      BenchmarkCase c = with_condition(base, kConditions[k]);
      c.seed = seed;
      c.fourier_seed = seed;
      row.runs[k] = run_condition(c);
      if (progress)
        progress(seed, kConditions[k], row.runs[k]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_comparison_table(const std::string &case_name,
                                           const std::vector<ComparisonRow> &rows) {
  std::string out = "case " + case_name + "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %-22s %-22s %-22s %s\n", "seed", "C_none", "C_filter",
                "C_filter+stress", "ordering");
  out += buf;
  auto cell = [](const ConditionRun &r) {
    if (r.failed)
      return std::string("FAILED");
    std::string s = detail::fmt("%.6g", r.result.compliance);
    if (!r.result.feasible)
      s += " (infeasible)";
    return s;
  };
  for (const auto &row : rows) {
    const char *verdict = row.any_failed() ? "n/a" : (row.ordering_ok() ? "ok" : "VIOLATED");
    std::snprintf(buf, sizeof buf, "%-6llu %-22s %-22s %-22s %s\n",
                  static_cast<unsigned long long>(row.seed), cell(row.runs[0]).c_str(),
                  cell(row.runs[1]).c_str(), cell(row.runs[2]).c_str(), verdict);
    out += buf;
  }
  for (const auto &row : rows)
    for (std::size_t k = 0; k < row.runs.size(); ++k)
      if (row.runs[k].failed)
        out += "  seed " + std::to_string(row.seed) + " " + condition_name(kConditions[k]) +
               ": " + row.runs[k].error + "\n";
  return out;
}

} // namespace ntopo
