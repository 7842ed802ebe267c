#pragma once

// Independent gradient oracles used to validate the tape: the layerwise
// adjoint of the overhang filter, the adjoint sensitivity of the p-norm
// stress aggregate, and central finite differences. Nothing here records on
// a tape.

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "amfilter.hpp"
#include "fea.hpp"

namespace ntopo::oracle {

/// Lagrange multipliers of the layer recursion plus the resulting gradient.
struct AdjointState {
  std::vector<Vector> lambda_layers; // lambda_layers[i] has nelx entries
  Vector g_rho;                      // sensitivity w.r.t. the raw printed layers
  Vector grad_blueprint;
};

/// Gradient of g w.r.t. the blueprint, given g_rho = dg/d(printed density)
/// where "printed" is the clamped filter output.
///
/// Multipliers run from the top layer down: lambda_top = dg/drho_top and
/// lambda_k = dg/drho_k + (drho_{k+1}/drho_k)^T lambda_{k+1}. Then
/// dg/db_k = lambda_k * dS/db_k for k above the plate and dg/db_0 = lambda_0.
inline AdjointState filter_adjoint_gradient(const DensityField &blueprint, const Vector &g_rho,
                                            const FilterParams &params) {
  blueprint.check_shape();
  params.validate();
  const int nx = blueprint.nelx;
  const int ny = blueprint.nely;
  if (g_rho.size() != blueprint.values.size())
    throw InvalidArgument("filter_adjoint_gradient: sensitivity has wrong length");

  const double P = params.P;
  const double Q = params.Q();
  const double eps = params.epsilon;

  // Forward pass, keeping raw densities and support sums.
  std::vector<Vector> rho(static_cast<std::size_t>(ny), Vector(nx));
  std::vector<Vector> support_peak(static_cast<std::size_t>(ny), Vector::Zero(nx));
  std::vector<Vector> support_sum(static_cast<std::size_t>(ny), Vector::Zero(nx));
  std::vector<Vector> support(static_cast<std::size_t>(ny), Vector::Zero(nx));
  for (int j = 0; j < nx; ++j)
    rho[0][j] = blueprint.at(0, j);
  for (int i = 1; i < ny; ++i)
    for (int j = 0; j < nx; ++j) {
      // s = sum (rho / m)^P with m the largest support density.
      double m = 0.0;
      for (int jj = j - 1; jj <= j + 1; ++jj)
        if (jj >= 0 && jj < nx)
          m = std::max(m, rho[i - 1][jj]);
      double s = 0.0;
      if (m > 0.0)
        for (int jj = j - 1; jj <= j + 1; ++jj)
          if (jj >= 0 && jj < nx)
            s += std::pow(rho[i - 1][jj] / m, P);
      support_peak[i][j] = m;
      support_sum[i][j] = s;
      support[i][j] = m > 0.0 ? std::pow(m, P / Q) * std::pow(s, 1.0 / Q) : 0.0;
      const double b = blueprint.at(i, j);
      const double E = support[i][j];
      rho[i][j] = 0.5 * (b + E - std::sqrt((b - E) * (b - E) + eps) + std::sqrt(eps));
    }

  AdjointState st;
  st.g_rho = g_rho;
  if (ny > 1)
    for (int i = 0; i < ny; ++i)
      for (int j = 0; j < nx; ++j)
        if (rho[i][j] < 0.0 || rho[i][j] > 1.0)
          st.g_rho[i * nx + j] = 0.0;

  auto dS_db = [&](int i, int j) {
    const double d = blueprint.at(i, j) - support[i][j];
    return 0.5 * (1.0 - d / std::sqrt(d * d + eps));
  };
  auto dS_dE = [&](int i, int j) {
    const double d = blueprint.at(i, j) - support[i][j];
    return 0.5 * (1.0 + d / std::sqrt(d * d + eps));
  };
  // dE_{i,j} / drho_{i-1,jj}
  auto dE_drho = [&](int i, int j, int jj) {
    const double m = support_peak[i][j];
    if (m == 0.0)
      return 0.0;
    return (P / Q) * support[i][j] * std::pow(rho[i - 1][jj] / m, P - 1.0) /
           (m * support_sum[i][j]);
  };

  st.lambda_layers.assign(static_cast<std::size_t>(ny), Vector::Zero(nx));
  for (int j = 0; j < nx; ++j)
    st.lambda_layers[ny - 1][j] = st.g_rho[(ny - 1) * nx + j];
  for (int k = ny - 2; k >= 0; --k) {
    Vector &lam = st.lambda_layers[k];
    const Vector &above = st.lambda_layers[k + 1];
    for (int jj = 0; jj < nx; ++jj) {
      double acc = st.g_rho[k * nx + jj];
      for (int j = jj - 1; j <= jj + 1; ++j)
        if (j >= 0 && j < nx)
          acc += above[j] * dS_dE(k + 1, j) * dE_drho(k + 1, j, jj);
      lam[jj] = acc;
    }
  }

  st.grad_blueprint.resize(Eigen::Index(nx) * ny);
  for (int j = 0; j < nx; ++j)
    st.grad_blueprint[j] = st.lambda_layers[0][j];
  for (int i = 1; i < ny; ++i)
    for (int j = 0; j < nx; ++j)
      st.grad_blueprint[i * nx + j] = st.lambda_layers[i][j] * dS_db(i, j);
  return st;
}

namespace detail {

/// Dense reduced stiffness K(rho) with free-DOF solves in full-vector form.
class DenseSystem {
public:
  DenseSystem(const FeModel &model, const Vector &rho) : map_(model.full_to_free()) {
    const StructuredMesh &mesh = model.mesh();
    const Matrix8 &KE = model.KE0();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(model.num_free(), model.num_free());
    for (int e = 0; e < mesh.num_elements(); ++e) {
      const auto &dofs = mesh.dof_map[static_cast<std::size_t>(e)];
      const double Ee = model.material().modulus(rho[e]);
      for (int a = 0; a < 8; ++a) {
        const int r = map_[static_cast<std::size_t>(dofs[a])];
        if (r < 0)
          continue;
        for (int b = 0; b < 8; ++b) {
          const int c = map_[static_cast<std::size_t>(dofs[b])];
          if (c >= 0)
            K(r, c) += Ee * KE(a, b);
        }
      }
    }
    llt_.compute(K);
    if (llt_.info() != Eigen::Success)
      throw SolverFailure("oracle: dense factorization failed", 0.0);
  }

  /// Solves K x = rhs on the free DOFs; fixed DOFs of x are zero.
  Vector solve(const Vector &rhs_full) const {
    const auto n = static_cast<Eigen::Index>(map_.size());
    Vector rhs(llt_.rows());
    for (Eigen::Index d = 0; d < n; ++d)
      if (map_[static_cast<std::size_t>(d)] >= 0)
        rhs[map_[static_cast<std::size_t>(d)]] = rhs_full[d];
    const Vector x_red = llt_.solve(rhs);
    Vector x = Vector::Zero(n);
    for (Eigen::Index d = 0; d < n; ++d)
      if (map_[static_cast<std::size_t>(d)] >= 0)
        x[d] = x_red[map_[static_cast<std::size_t>(d)]];
    return x;
  }

private:
  std::vector<int> map_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

} // namespace detail

/// Compliance sensitivity dC/drho_e = -E'(rho_e) u_e^T KE u_e. Compliance is
/// self-adjoint, so the adjoint vector is -u and no second solve is needed.
inline Vector compliance_adjoint_gradient(const FeModel &model, const Vector &rho) {
  const StructuredMesh &mesh = model.mesh();
  if (rho.size() != mesh.num_elements())
    throw InvalidArgument("compliance_adjoint_gradient: density vector has wrong length");
  const Vector u = detail::DenseSystem(model, rho).solve(model.loads());
  Vector grad(mesh.num_elements());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto &dofs = mesh.dof_map[static_cast<std::size_t>(e)];
    Eigen::Matrix<double, 8, 1> ue;
    for (int a = 0; a < 8; ++a)
      ue[a] = u[dofs[a]];
    grad[e] = -model.material().modulus_derivative(rho[e]) * ue.dot(model.KE0() * ue);
  }
  return grad;
}

/// Gradient of sigma_PN w.r.t. printed densities by the adjoint method:
/// one dense solve for u, one for the adjoint vector, then the stiffness term
/// lambda^T (dK/drho) u plus the direct sqrt(E) term. Elements with von Mises
/// below 1e-12 are skipped.
inline Vector stress_adjoint_gradient(const FeModel &model, const Vector &rho,
                                      const StressAggregate &agg) {
  agg.validate();
  const StructuredMesh &mesh = model.mesh();
  const MaterialModel &mat = model.material();
  const int N = mesh.num_elements();
  if (rho.size() != N)
    throw InvalidArgument("stress_adjoint_gradient: density vector has wrong length");

  const Matrix8 &KE = model.KE0();
  const detail::DenseSystem sys(model, rho);
  const Vector u = sys.solve(model.loads());

  const Eigen::Matrix<double, 3, 8> DB =
      constitutive_unit(mat.nu) * strain_displacement(0.0, 0.0, mesh.elem_size);
  Eigen::Matrix3d V;
  V << 1.0, -0.5, 0.0, -0.5, 1.0, 0.0, 0.0, 0.0, 3.0;

  const double p = agg.p_norm_exponent;
  const double sbar = agg.sigma_allow;
  std::vector<Eigen::Matrix<double, 8, 1>> ue(static_cast<std::size_t>(N));
  std::vector<Eigen::Vector3d> sigma(static_cast<std::size_t>(N));
  Vector vm_unit(N), vm(N), E(N), dE(N);
  double S = 0.0;
  for (int e = 0; e < N; ++e) {
    const auto &dofs = mesh.dof_map[static_cast<std::size_t>(e)];
    for (int a = 0; a < 8; ++a)
      ue[e][a] = u[dofs[a]];
    sigma[e] = DB * ue[e];
    vm_unit[e] = std::sqrt(std::max(0.0, sigma[e].dot(V * sigma[e])));
    E[e] = mat.modulus(rho[e]);
    dE[e] = mat.modulus_derivative(rho[e]);
    vm[e] = std::sqrt(E[e]) * vm_unit[e];
    S += std::pow(vm[e] / sbar, p);
  }
  const double mean = S / N;
  // d sigma_PN / d vm_e
  Vector dPN(N);
  for (int e = 0; e < N; ++e)
    dPN[e] = mean == 0.0 ? 0.0
                         : std::pow(mean, 1.0 / p - 1.0) * std::pow(vm[e], p - 1.0) /
                               (N * std::pow(sbar, p));

  Vector rhs_full = Vector::Zero(mesh.num_dofs());
  for (int e = 0; e < N; ++e) {
    if (vm[e] < 1e-12)
      continue;
    const Eigen::Matrix<double, 1, 8> dvm_du =
        std::sqrt(E[e]) / vm_unit[e] * (V * sigma[e]).transpose() * DB;
    const auto &dofs = mesh.dof_map[static_cast<std::size_t>(e)];
    for (int a = 0; a < 8; ++a)
      rhs_full[dofs[a]] -= dvm_du[a] * dPN[e];
  }
  const Vector lam = sys.solve(rhs_full);

  Vector grad(N);
  for (int e = 0; e < N; ++e) {
    const auto &dofs = mesh.dof_map[static_cast<std::size_t>(e)];
    Eigen::Matrix<double, 8, 1> le;
    for (int a = 0; a < 8; ++a)
      le[a] = lam[dofs[a]];
    const double stiffness_term = le.dot(KE * ue[e]) * dE[e];
    const double direct_term =
        vm[e] < 1e-12 ? 0.0 : dPN[e] * vm_unit[e] * dE[e] / (2.0 * std::sqrt(E[e]));
    grad[e] = stiffness_term + direct_term;
  }
  return grad;
}

struct FdResult {
  Vector gradient;
  std::vector<int> flagged; // coordinates whose evaluations were not finite
};

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
inline FdResult finite_difference_gradient(const std::function<double(const Vector &)> &f,
                                           const Vector &x, double h = 1e-6) {
  if (!(h > 0.0))
    throw InvalidArgument("finite_difference_gradient: step must be positive");
  FdResult out;
  out.gradient.resize(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      out.flagged.push_back(static_cast<int>(i));
      out.gradient[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      out.gradient[i] = (fp - fm) / (2.0 * h);
    }
  }
  return out;
}

} // namespace ntopo::oracle
