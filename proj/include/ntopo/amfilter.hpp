#pragma once

// Layer-by-layer overhang filter. The printed density of element (i, j) is
// capped by the densest element of its support region, the three elements
// (i-1, j-1..j+1) of the layer below. Layer 0 rests on the build plate.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "autodiff.hpp"

namespace ntopo {

struct FilterParams {
  double epsilon = 1e-4;
  double P = 40.0;
  int ns = 3;
  double eps0 = 0.5;

  /// Exponent that makes an all-eps0 support region map to eps0.
  double Q() const { return P + std::log(double(ns)) / std::log(eps0); }

  void validate() const {
    if (!(epsilon > 0.0))
      throw InvalidArgument("FilterParams: epsilon must be positive");
    if (!(P > 0.0))
      throw InvalidArgument("FilterParams: P must be positive");
    if (ns < 1 || !(eps0 > 0.0 && eps0 < 1.0))
      throw InvalidArgument("FilterParams: need ns >= 1 and 0 < eps0 < 1");
    if (!(Q() > 0.0))
      throw InvalidArgument("FilterParams: derived exponent Q must be positive");
  }
};

enum class DensityKind { blueprint, printed };

/// Per-element densities on an nelx x nely grid, element (i, j) at i*nelx + j.
struct DensityField {
  int nelx = 0;
  int nely = 0;
  Eigen::VectorXd values;
  DensityKind kind = DensityKind::blueprint;
  std::vector<bool> passive;

  double at(int layer, int column) const { return values[layer * nelx + column]; }
  double &at(int layer, int column) { return values[layer * nelx + column]; }

  void check_shape() const {
    if (nelx < 1 || nely < 1 || values.size() != Eigen::Index(nelx) * nely)
      throw InvalidArgument("DensityField: values do not match the grid shape");
    if (!passive.empty() && passive.size() != static_cast<std::size_t>(values.size()))
      throw InvalidArgument("DensityField: passive mask does not match the grid shape");
  }
};

// ---------------------------------------------------------------------------
// Scalar surrogates

inline double smooth_min(double b, double E, double epsilon) {
  const double d = b - E;
  return 0.5 * ((b + E) - (std::sqrt(d * d + epsilon) - std::sqrt(epsilon)));
}

inline double smooth_max(double a, double b, double c, const FilterParams &params) {
  const double s = std::pow(a, params.P) + std::pow(b, params.P) + std::pow(c, params.P);
  return s == 0.0 ? 0.0 : std::pow(s, 1.0 / params.Q());
}

// ---------------------------------------------------------------------------
// Tape versions

/// S(b, E) = (b + E - sqrt((b - E)^2 + eps) + sqrt(eps)) / 2.
///
/// Written as (b + E) - (r - sqrt(eps)) so that S(x, x) == x in floating point.
inline ad::Var smooth_min(const ad::Var &b, const ad::Var &E, const FilterParams &params) {
  const ad::Var r = ad::sqrt(ad::add_scalar(ad::square(ad::sub(b, E)), params.epsilon));
  return ad::scale(ad::sub(ad::add(b, E), ad::add_scalar(r, -std::sqrt(params.epsilon))), 0.5);
}

/// (a^P + b^P + c^P)^(1/Q), elementwise.
inline ad::Var smooth_max(const ad::Var &a, const ad::Var &b, const ad::Var &c,
                          const FilterParams &params) {
  const ad::Var s = ad::add(ad::add(ad::pow(a, params.P), ad::pow(b, params.P)),
                            ad::pow(c, params.P));
  return ad::pow(s, 1.0 / params.Q());
}

/// Smooth support maximum for every column of the next layer, with zero
/// density outside the domain.
///
/// Evaluated relative to the largest support value m:
/// (sum rho^P)^(1/Q) = m^(P/Q) (sum (rho/m)^P)^(1/Q), which keeps both the
/// value and the derivative finite when rho^P underflows.
inline ad::Var support_max(const ad::Var &prev_layer, const FilterParams &params) {
  if (prev_layer.cols() != 1)
    throw InvalidArgument("support_max: expects a column vector");
  const auto &x = prev_layer.value();
  if ((x.array() < 0.0).any())
    throw NumericDomainError("support_max: negative density", prev_layer.id());
  const int n = static_cast<int>(x.rows());
  const double P = params.P;
  const double Q = params.Q();
  ad::Matrix out(n, 1);
  // Per column: m, sum (rho/m)^P.
  Eigen::VectorXd m(n), t(n);
  for (int j = 0; j < n; ++j) {
    double mj = x(j, 0);
    if (j > 0)
      mj = std::max(mj, x(j - 1, 0));
    if (j + 1 < n)
      mj = std::max(mj, x(j + 1, 0));
    double tj = 0.0;
    if (mj > 0.0)
      for (int k = std::max(0, j - 1); k <= std::min(n - 1, j + 1); ++k)
        tj += std::pow(x(k, 0) / mj, P);
    m[j] = mj;
    t[j] = tj;
    out(j, 0) = mj > 0.0 ? std::pow(mj, P / Q) * std::pow(tj, 1.0 / Q) : 0.0;
  }
  const ad::Matrix value = out;
  return prev_layer.tape().record(
      std::move(out), {prev_layer},
      [prev_layer, m, t, value, P, Q, n](ad::Tape &tape, const ad::Matrix &g) {
        const auto &x = prev_layer.value();
        ad::Matrix gx = ad::Matrix::Zero(n, 1);
        // dE_j/drho_k = (P/Q) E_j (rho_k/m_j)^(P-1) / (m_j t_j)
        for (int j = 0; j < n; ++j) {
          if (!(m[j] > 0.0))
            continue;
          const double c = g(j, 0) * (P / Q) * value(j, 0) / (m[j] * t[j]);
          for (int k = std::max(0, j - 1); k <= std::min(n - 1, j + 1); ++k)
            gx(k, 0) += c * std::pow(x(k, 0) / m[j], P - 1.0);
        }
        tape.accumulate(prev_layer, gx);
      });
}

/// Raw (unclamped) filtered densities: the layer recursion feeds unclamped
/// values upward.
inline ad::Var apply_filter_raw(const ad::Var &blueprint, int nelx, int nely,
                                const FilterParams &params) {
  params.validate();
  if (nelx < 1 || nely < 1 || blueprint.rows() != Eigen::Index(nelx) * nely ||
      blueprint.cols() != 1)
    throw InvalidArgument("apply_filter: blueprint does not match the grid shape");
  std::vector<ad::Var> layers;
  layers.reserve(static_cast<std::size_t>(nely));
  layers.push_back(ad::segment(blueprint, 0, nelx));
  for (int i = 1; i < nely; ++i) {
    const ad::Var b = ad::segment(blueprint, Eigen::Index(i) * nelx, nelx);
    layers.push_back(smooth_min(b, support_max(layers.back(), params), params));
  }
  return nely == 1 ? layers.front() : ad::concat(layers);
}

/// Printed densities in [0, 1].
inline ad::Var apply_filter(const ad::Var &blueprint, int nelx, int nely,
                            const FilterParams &params) {
  if (nely == 1)
    return apply_filter_raw(blueprint, nelx, nely, params);
  return ad::clamp(apply_filter_raw(blueprint, nelx, nely, params), 0.0, 1.0);
}

inline DensityField apply_filter(const DensityField &blueprint, const FilterParams &params) {
  blueprint.check_shape();
  ad::Tape tape;
  const ad::Var b = tape.constant(blueprint.values);
  DensityField out = blueprint;
  out.kind = DensityKind::printed;
  out.values = apply_filter(b, blueprint.nelx, blueprint.nely, params).value().col(0);
  return out;
}

// ---------------------------------------------------------------------------
// Exact min/max filter and printability check

inline DensityField exact_filter(const DensityField &blueprint) {
  blueprint.check_shape();
  DensityField out = blueprint;
  out.kind = DensityKind::printed;
  for (int i = 1; i < out.nely; ++i)
    for (int j = 0; j < out.nelx; ++j) {
      double support = out.at(i - 1, j);
      if (j > 0)
        support = std::max(support, out.at(i - 1, j - 1));
      if (j + 1 < out.nelx)
        support = std::max(support, out.at(i - 1, j + 1));
      out.at(i, j) = std::min(blueprint.at(i, j), support);
    }
  return out;
}

/// Largest density in the support region of (i, j), zero padded; layer 0 is
/// supported by the plate (returns 1).
inline double support_of(const DensityField &field, int i, int j) {
  if (i == 0)
    return 1.0;
  double s = field.at(i - 1, j);
  if (j > 0)
    s = std::max(s, field.at(i - 1, j - 1));
  if (j + 1 < field.nelx)
    s = std::max(s, field.at(i - 1, j + 1));
  return s;
}

/// Number of elements whose density exceeds the densest element supporting
/// them (plus `tolerance`).
inline int overhang_violations(const DensityField &field, double tolerance = 0.0) {
  field.check_shape();
  int count = 0;
  for (int i = 1; i < field.nely; ++i)
    for (int j = 0; j < field.nelx; ++j)
      if (field.at(i, j) > support_of(field, i, j) + tolerance)
        ++count;
  return count;
}

/// 0/1 field from a threshold.
inline DensityField threshold(const DensityField &field, double level = 0.5) {
  DensityField out = field;
  out.values = (field.values.array() > level).cast<double>().matrix();
  return out;
}

} // namespace ntopo
