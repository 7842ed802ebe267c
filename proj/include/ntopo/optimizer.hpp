#pragma once

// Training loop: neural field -> AM filter -> FEA -> composite loss -> Adam.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "amfilter.hpp"
#include "autodiff.hpp"
#include "benchmark.hpp"
#include "fea.hpp"
#include "fourier.hpp"
#include "graph.hpp"
#include "neuralfield.hpp"

namespace ntopo {

/// Weights and targets of the composite loss
///   L = C / J0 + alpha (sum rho_e v_e / V* - 1)^2 + gamma (sigma_PN)^2,
/// where the stress term only counts positive sigma_PN unless two_sided.
struct LossSpec {
  double alpha = 1.0;
  double gamma = 0.0;
  double V_target = 1.0;
  double J0 = 1.0;
  int n_c = 1;
  Vector elem_volumes;
  bool stress_active = false;
  bool two_sided = false;
};

inline ad::Var composite_loss(const ad::Var &C, const ad::Var &rho_printed,
                              const std::optional<ad::Var> &stress_pn, const LossSpec &spec) {
  if (!(spec.J0 > 0.0))
    throw InvalidArgument("composite_loss: J0 must be positive");
  if (!(spec.V_target > 0.0))
    throw InvalidArgument("composite_loss: V_target must be positive");
  if (spec.alpha < 0.0 || spec.gamma < 0.0)
    throw InvalidArgument("composite_loss: penalty weights must be non-negative");
  ad::Var loss = ad::scale(C, 1.0 / spec.J0);
  const ad::Var ratio = ad::div_scalar(ad::dot(spec.elem_volumes, rho_printed), spec.V_target);
  loss = ad::add(loss, ad::scale(ad::square(ad::add_scalar(ratio, -1.0)), spec.alpha));
  if (spec.stress_active) {
    if (!stress_pn)
      throw InvalidArgument("composite_loss: stress term requested without sigma_PN");
    const ad::Var violation = spec.two_sided ? *stress_pn : ad::relu(*stress_pn);
    loss = ad::add(loss, ad::scale(ad::square(violation), spec.gamma));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  long step = 0;
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every parameter in place.
inline void adam_step(const std::vector<Eigen::MatrixXd *> &params,
                      const std::vector<Eigen::MatrixXd> &grads, AdamState &state) {
  if (params.size() != grads.size())
    throw InvalidArgument("adam_step: parameter/gradient count mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (params[k]->rows() != grads[k].rows() || params[k]->cols() != grads[k].cols())
      throw InvalidArgument("adam_step: gradient " + std::to_string(k) + " has wrong shape");
    if (!grads[k].allFinite()) {
      const auto bad = (!grads[k].array().isFinite()).count();
      throw NonFiniteGradient("adam_step: " + std::to_string(bad) +
                              " non-finite entries in gradient " + std::to_string(k) +
                              " at step " + std::to_string(state.step + 1));
    }
  }
  if (state.m.empty()) {
    for (const auto *p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size())
    throw InvalidArgument("adam_step: state does not match the parameter list");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k].cwiseAbs2();
    const auto mhat = (state.m[k] / c1).array();
    const auto vhat = (state.v[k] / c2).array();
    params[k]->array() -= state.learning_rate * mhat / (vhat.sqrt() + state.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Schedules

/// Linear ramp from `start` to `end` over the first `fraction` of the run.
inline double ramp(double start, double end, double fraction, int iter, int total) {
  const double window = fraction * double(total);
  if (window <= 0.0)
    return end;
  const double t = std::min(1.0, double(iter) / window);
  return start + (end - start) * t;
}

inline double learning_rate_at(const BenchmarkCase &c, int iter) {
  double lr = c.learning_rate;
  for (const auto &[at, factor] : c.lr_decay)
    if (double(iter) >= at * double(c.iterations))
      lr *= factor;
  return lr;
}

// ---------------------------------------------------------------------------
// Optimization run

struct ConvergenceRow {
  int iter = 0;
  double compliance = 0.0;
  double volfrac = 0.0;
  double sigma_pn = 0.0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct ConvergenceRecord {
  std::vector<ConvergenceRow> rows;
};

struct OptimizationResult {
  DensityField printed;
  DensityField blueprint;
  ConvergenceRecord record;
  NetworkParameters parameters;
  int best_iteration = 0;
  bool feasible = false;
  double compliance = 0.0;
  double volfrac = 0.0;
  double sigma_pn = 0.0;
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

/// Everything about a case that stays fixed across iterations.
struct Problem {
  explicit Problem(const BenchmarkCase &c)
      : config(c), mesh(build_mesh(c.nelx, c.nely, c.elem_size)),
        graph(build_element_graph(mesh)),
        features(fourier_encode(normalized_centroids(mesh), c.fourier_m, c.fourier_scale,
                                c.fourier_seed)),
        model(mesh, c.material, BoundaryConditions{c.fixed_dofs, c.load_vector()}),
        passive(c.passive_mask()),
        laplacian(std::make_shared<const SparseMatrix>(graph.laplacian_scaled)) {
    elem_volumes = Vector::Constant(mesh.num_elements(), c.elem_size * c.elem_size);
    V_target = c.volume_fraction * elem_volumes.sum();
  }

  NetworkConfig network_config() const {
    NetworkConfig nc;
    nc.layer_widths.push_back(2 * config.fourier_m);
    for (int w : config.hidden_widths)
      nc.layer_widths.push_back(w);
    nc.layer_widths.push_back(1);
    nc.cheb_order = config.cheb_order;
    nc.target_volume_fraction = config.volume_fraction;
    return nc;
  }

  BenchmarkCase config;
  StructuredMesh mesh;
  ElementGraph graph;
  FourierFeatures features;
  FeModel model;
  std::vector<bool> passive;
  std::shared_ptr<const SparseMatrix> laplacian;
  Vector elem_volumes;
  double V_target = 0.0;
};

/// Tape handles of one forward pass.
struct ForwardPass {
  ad::Var blueprint;
  ad::Var printed;
  ad::Var displacement;
  ad::Var compliance;
  StressField stress;
  ad::Var sigma_pn;
};

/// Neural field -> passive zones -> (filter) -> solve -> compliance and stress.
inline ForwardPass forward(ad::Tape &tape, const Problem &problem,
                           const std::vector<ChebLayerVars> &layers) {
  const BenchmarkCase &c = problem.config;
  ForwardPass fp;
  const ad::Var x = tape.constant(problem.features.features);
  ad::Var h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool last = l + 1 == layers.size();
    h = cheb_layer_forward(h, problem.laplacian, layers[l],
                           last ? Activation::sigmoid : Activation::relu);
  }
  fp.blueprint = c.passive_elements.empty() ? h : ad::mask_fill(h, problem.passive, 1.0);
  fp.printed = c.filter_enabled ? apply_filter(fp.blueprint, c.nelx, c.nely, c.filter)
                                : fp.blueprint;
  fp.displacement = assemble_and_solve(problem.model, fp.printed);
  fp.compliance = compliance(fp.displacement, problem.model.loads());
  fp.stress = centroid_stress(problem.model, fp.displacement, fp.printed);
  fp.sigma_pn = p_norm_stress(fp.stress, c.stress);
  return fp;
}

inline DensityField make_field(const BenchmarkCase &c, const Vector &values, DensityKind kind,
                               const std::vector<bool> &passive) {
  DensityField f;
  f.nelx = c.nelx;
  f.nely = c.nely;
  f.values = values;
  f.kind = kind;
  f.passive = passive;
  return f;
}

/// Observer called after each completed iteration.
using IterationCallback = std::function<void(const ConvergenceRow &)>;

/// Trains the neural field for the configured number of iterations and
/// returns the lowest-compliance feasible iterate (volume within
/// volume_tolerance of the target and, with the stress constraint on,
/// sigma_PN <= stress_tolerance). Without a feasible iterate the last one is
/// returned with `feasible == false`. A solver failure or non-finite gradient
/// ends the run early with `aborted` set and the best state so far kept.
inline OptimizationResult run_optimization(const BenchmarkCase &c,
                                           const IterationCallback &on_iteration = {}) {
  c.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Problem problem(c);
  NetworkParameters params = init_parameters(problem.network_config(), c.seed);
  AdamState adam;
  adam.learning_rate = c.learning_rate;

  OptimizationResult result;
  double best_c = std::numeric_limits<double>::infinity();
  double J0 = 0.0;
  const double vol_total = problem.elem_volumes.sum();
  ad::Tape tape;

  auto keep = [&](const ForwardPass &fp, int iter, double volfrac, bool feasible) {
    result.printed = make_field(c, fp.printed.value().col(0), DensityKind::printed, problem.passive);
    result.blueprint =
        make_field(c, fp.blueprint.value().col(0), DensityKind::blueprint, problem.passive);
    result.best_iteration = iter;
    result.feasible = feasible;
    result.compliance = fp.compliance.scalar();
    result.volfrac = volfrac;
    result.sigma_pn = fp.sigma_pn.scalar();
    result.parameters = params;
  };

  for (int iter = 1; iter <= c.iterations; ++iter) {
    tape.clear();
    try {
      const auto layers = bind_parameters(tape, params);
      const ForwardPass fp = forward(tape, problem, layers);
      const double C = fp.compliance.scalar();
      if (iter == 1)
        J0 = C;

      LossSpec spec;
      spec.alpha = ramp(c.alpha_start, c.alpha_end, c.ramp_fraction, iter - 1, c.iterations);
      spec.gamma = ramp(c.gamma_start, c.gamma_end, c.ramp_fraction, iter - 1, c.iterations);
      spec.V_target = problem.V_target;
      spec.J0 = J0;
      spec.elem_volumes = problem.elem_volumes;
      spec.stress_active = c.stress_enabled;
      spec.two_sided = c.two_sided_stress_penalty;
      const ad::Var loss = composite_loss(fp.compliance, fp.printed, fp.sigma_pn, spec);

      const double volfrac = problem.elem_volumes.dot(fp.printed.value().col(0)) / vol_total;
      const double spn = fp.sigma_pn.scalar();
      const bool feasible = std::abs(volfrac - c.volume_fraction) <= c.volume_tolerance &&
                            (!c.stress_enabled || spn <= c.stress_tolerance);
      if (feasible && C < best_c) {
        best_c = C;
        keep(fp, iter, volfrac, true);
      } else if (!std::isfinite(best_c)) {
        keep(fp, iter, volfrac, false);
      }

      tape.backward(loss);
      std::vector<Eigen::MatrixXd> grads;
      for (const auto &l : layers) {
        for (const auto &t : l.theta)
          grads.push_back(tape.grad(t));
        grads.push_back(tape.grad(l.bias));
      }
      adam.learning_rate = learning_rate_at(c, iter - 1);
      adam_step(params.tensors(), grads, adam);

      ConvergenceRow row;
      row.iter = iter;
      row.compliance = C;
      row.volfrac = volfrac;
      row.sigma_pn = spn;
      row.loss = loss.scalar();
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                        .count();
      result.record.rows.push_back(row);
      if (on_iteration)
        on_iteration(row);
    } catch (const SolverFailure &e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    } catch (const NonFiniteGradient &e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

} // namespace ntopo
