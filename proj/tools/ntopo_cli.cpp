// ntopo: run one benchmark condition or compare all three.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include <ntopo/compare.hpp>
#include <ntopo/io.hpp>
#include <ntopo/optimizer.hpp>

namespace fs = std::filesystem;
using namespace ntopo;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRunFailed = 3;

struct CaseFlags {
  std::string config;
  std::string case_name;
  std::optional<int> nelx, nely, iters;
  std::optional<double> volfrac, sigma_allow;
  std::string filter, stress;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;

  void attach(CLI::App &app, bool with_case) {
    app.add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
    if (with_case)
      app.add_option("--case", case_name, "simply_supported | tip_cantilever | mid_cantilever | custom");
    app.add_option("--nelx", nelx, "elements along x");
    app.add_option("--nely", nely, "layers along the print direction");
    app.add_option("--volfrac", volfrac, "target volume fraction");
    app.add_option("--sigma-allow", sigma_allow, "allowable von Mises stress");
    app.add_option("--iters", iters, "optimizer iterations");
    app.add_option("--set", set, "extra key=value override (repeatable)");
    if (with_case) {
      app.add_option("--filter", filter, "on | off")->check(CLI::IsMember({"on", "off"}));
      app.add_option("--stress", stress, "on | off")->check(CLI::IsMember({"on", "off"}));
      app.add_option("--seed", seed, "network and feature seed");
    }
  }

  /// Config file first, then command-line flags on top.
  ConfigMap to_config() const {
    ConfigMap cfg;
    if (!config.empty())
      cfg = load_config(config);
    auto put = [&](const std::string &key, const std::string &value) {
      cfg[key] = ConfigEntry{value, "command line"};
    };
    auto num = [](double v) { return detail::fmt("%.17g", v); };
    if (!case_name.empty())
      put("case", case_name);
    if (nelx)
      put("nelx", std::to_string(*nelx));
    if (nely)
      put("nely", std::to_string(*nely));
    if (iters)
      put("iters", std::to_string(*iters));
    if (volfrac)
      put("volfrac", num(*volfrac));
    if (sigma_allow)
      put("sigma_allow", num(*sigma_allow));
    if (!filter.empty())
      put("filter", filter);
    if (!stress.empty())
      put("stress", stress);
    if (seed)
      put("seed", std::to_string(*seed));
    for (const auto &kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + kv + "'");
      std::string key = trim(kv.substr(0, eq));
      std::replace(key.begin(), key.end(), '-', '_');
      put(key, trim(kv.substr(eq + 1)));
    }
    return cfg;
  }
};

fs::path make_run_dir(const fs::path &root, const BenchmarkCase &c) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = c.name + "_" + (c.filter_enabled ? "f" : "nf") +
                           (c.stress_enabled ? "s" : "") + "_seed" + std::to_string(c.seed) +
                           "_" + stamp;
  fs::path dir = root / base;
  for (int k = 1; fs::exists(dir); ++k)
    dir = root / (base + "_" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void write_artifacts(const fs::path &dir, const BenchmarkCase &c, const OptimizationResult &r) {
  if (r.printed.values.size() > 0) {
    write_pgm(r.printed, (dir / "density.pgm").string());
    write_density_csv(r.printed, (dir / "density.csv").string());
    write_vtk(r.printed, (dir / "density.vtk").string(), c.elem_size);
    write_density_csv(r.blueprint, (dir / "blueprint.csv").string());
  }
  if (!r.parameters.layers.empty())
    save_checkpoint((dir / "network.ckpt").string(), r.parameters);
  write_convergence_csv(r.record, (dir / "convergence.csv").string(), c.log_timing);
  std::ofstream((dir / "summary.json").string()) << run_summary(c, r).dump(2) << '\n';
}

int cmd_run(const CaseFlags &flags, const std::string &out_dir, bool quiet) {
  const BenchmarkCase c = make_case(flags.to_config());
  const fs::path dir = make_run_dir(out_dir, c);
  OptimizationResult r;
  int status = 0;
  try {
    r = run_optimization(c, [&](const ConvergenceRow &row) {
      if (!quiet && (row.iter % 50 == 0 || row.iter == 1))
        std::printf("iter %4d  C %.6g  vf %.4f  sigma_pn %+.4f\n", row.iter, row.compliance,
                    row.volfrac, row.sigma_pn);
    });
  } catch (const SolverFailure &e) {
    r.aborted = true;
    r.abort_reason = e.what();
  }
  if (r.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", r.abort_reason.c_str());
    status = kExitRunFailed;
  }
  write_artifacts(dir, c, r);
  std::printf("%s: C %.6g  volfrac %.4f  sigma_pn %+.4f  feasible %s  (%.1f s)\n",
              c.name.c_str(), r.compliance, r.volfrac, r.sigma_pn, r.feasible ? "yes" : "no",
              r.wall_seconds);
  std::printf("artifacts in %s\n", dir.string().c_str());
  return status;
}

int cmd_compare(const CaseFlags &flags, const std::string &case_name,
                const std::vector<std::uint64_t> &seeds) {
  ConfigMap cfg = flags.to_config();
  cfg["case"] = ConfigEntry{case_name, "command line"};
  const BenchmarkCase base = make_case(cfg);
  const auto rows = run_comparison(base, seeds, [](std::uint64_t seed, Condition cond,
                                                   const ConditionRun &run) {
    std::fprintf(stderr, "seed %llu %-14s %s\n", static_cast<unsigned long long>(seed),
                 condition_name(cond),
                 run.failed ? ("FAILED: " + run.error).c_str()
                            : detail::fmt("C %.6g", run.result.compliance).c_str());
  });
  std::fputs(format_comparison_table(base.name, rows).c_str(), stdout);
  bool ok = true;
  for (const auto &row : rows)
    ok = ok && row.ordering_ok();
  std::printf("ordering C_none <= C_filter <= C_filter+stress: %s\n", ok ? "satisfied" : "NOT satisfied");
  return ok ? 0 : kExitRunFailed;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Neural topology optimization with an additive-manufacturing overhang filter"};
  app.require_subcommand(1);

  CaseFlags run_flags;
  std::string out_dir = "runs";
  bool quiet = false;
  auto *run = app.add_subcommand("run", "optimize one benchmark condition");
  run_flags.attach(*run, true);
  run->add_option("--out-dir", out_dir, "root directory for run artifacts");
  run->add_flag("--quiet", quiet, "suppress per-iteration progress");

  CaseFlags cmp_flags;
  std::string cmp_case;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  auto *cmp = app.add_subcommand("compare", "run all three conditions for several seeds");
  cmp->add_option("case", cmp_case, "benchmark preset")
      ->required()
      ->check(CLI::IsMember(preset_names()));
  cmp->add_option("--seeds", seeds, "seeds to run")->delimiter(',');
  cmp_flags.attach(*cmp, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run)
      return cmd_run(run_flags, out_dir, quiet);
    return cmd_compare(cmp_flags, cmp_case, seeds);
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError &e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitRunFailed;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRunFailed;
  }
}
