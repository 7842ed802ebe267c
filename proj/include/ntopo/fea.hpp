#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "autodiff.hpp"
#include "mesh.hpp"

namespace ntopo {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Matrix8 = Eigen::Matrix<double, 8, 8>;
using Matrix38 = Eigen::Matrix<double, 3, 8>;

/// SIMP material: E(rho) = Emin + rho^penal (E0 - Emin).
struct MaterialModel {
  double E0 = 1.0;
  double Emin = 1e-9;
  double nu = 0.3;
  double penal = 3.0;

  void validate() const {
    if (!(E0 > 0.0) || !(Emin > 0.0) || !(Emin < E0))
      throw InvalidArgument("MaterialModel: need 0 < Emin < E0");
    if (!(nu > 0.0 && nu < 0.5))
      throw InvalidArgument("MaterialModel: need 0 < nu < 0.5");
    if (!(penal >= 1.0))
      throw InvalidArgument("MaterialModel: penal must be >= 1");
  }

  double modulus(double rho) const { return Emin + std::pow(rho, penal) * (E0 - Emin); }
  double modulus_derivative(double rho) const {
    return penal * std::pow(rho, penal - 1.0) * (E0 - Emin);
  }
};

/// Plane-stress constitutive matrix for E = 1.
inline Eigen::Matrix3d constitutive_unit(double nu) {
  Eigen::Matrix3d D;
  D << 1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, (1.0 - nu) / 2.0;
  return D / (1.0 - nu * nu);
}

/// Strain-displacement matrix of a square bilinear quad at natural
/// coordinates (xi, eta), corners ordered counter-clockwise from (-1, -1).
inline Matrix38 strain_displacement(double xi, double eta, double elem_size) {
  static constexpr std::array<double, 4> xa = {-1.0, 1.0, 1.0, -1.0};
  static constexpr std::array<double, 4> ya = {-1.0, -1.0, 1.0, 1.0};
  const double to_physical = 2.0 / elem_size;
  Matrix38 B = Matrix38::Zero();
  for (int a = 0; a < 4; ++a) {
    const double dx = 0.25 * xa[a] * (1.0 + eta * ya[a]) * to_physical;
    const double dy = 0.25 * ya[a] * (1.0 + xi * xa[a]) * to_physical;
    B(0, 2 * a) = dx;
    B(1, 2 * a + 1) = dy;
    B(2, 2 * a) = dy;
    B(2, 2 * a + 1) = dx;
  }
  return B;
}

/// Unit-modulus plane-stress stiffness of a square element, 2 x 2 Gauss.
inline Matrix8 element_stiffness_unit(double nu, double elem_size = 1.0) {
  if (!(nu > 0.0 && nu < 0.5))
    throw InvalidArgument("element_stiffness_unit: need 0 < nu < 0.5");
  const Eigen::Matrix3d D = constitutive_unit(nu);
  const double g = 1.0 / std::sqrt(3.0);
  const double detJ = 0.25 * elem_size * elem_size;
  Matrix8 KE = Matrix8::Zero();
  for (double xi : {-g, g})
    for (double eta : {-g, g}) {
      const Matrix38 B = strain_displacement(xi, eta, elem_size);
      KE.noalias() += B.transpose() * D * B * detJ;
    }
  return 0.5 * (KE + KE.transpose());
}

/// Supports and loads on the full DOF vector.
struct BoundaryConditions {
  std::vector<int> fixed_dofs;
  Vector loads;
};

/// Static part of the finite-element problem: mesh, material, unit element
/// stiffness, DOF partition and the centroid stress operators.
class FeModel {
public:
  FeModel(StructuredMesh mesh, MaterialModel material, BoundaryConditions bc)
      : mesh_(std::move(mesh)), material_(material), loads_(std::move(bc.loads)) {
    material_.validate();
    const int ndof = mesh_.num_dofs();
    if (loads_.size() != ndof)
      throw InvalidArgument("FeModel: load vector has wrong length");
    is_fixed_.assign(static_cast<std::size_t>(ndof), false);
    for (int d : bc.fixed_dofs) {
      if (d < 0 || d >= ndof)
        throw InvalidArgument("FeModel: fixed DOF out of range");
      is_fixed_[static_cast<std::size_t>(d)] = true;
    }
    full_to_free_.assign(static_cast<std::size_t>(ndof), -1);
    for (int d = 0; d < ndof; ++d) {
      if (is_fixed_[static_cast<std::size_t>(d)])
        fixed_dofs_.push_back(d);
      else {
        full_to_free_[static_cast<std::size_t>(d)] = static_cast<int>(free_dofs_.size());
        free_dofs_.push_back(d);
      }
    }
    if (fixed_dofs_.size() < 3)
      throw SolverFailure("under-constrained system: fewer than 3 fixed DOFs", 0.0);

    KE0_ = element_stiffness_unit(material_.nu, mesh_.elem_size);
    build_reduced_pattern();
    build_stress_operators();
  }

  const StructuredMesh &mesh() const { return mesh_; }
  const MaterialModel &material() const { return material_; }
  const Matrix8 &KE0() const { return KE0_; }
  const Vector &loads() const { return loads_; }
  const std::vector<int> &fixed_dofs() const { return fixed_dofs_; }
  const std::vector<int> &free_dofs() const { return free_dofs_; }
  /// Full DOF -> free index, -1 on fixed DOFs.
  const std::vector<int> &full_to_free() const { return full_to_free_; }
  int num_free() const { return static_cast<int>(free_dofs_.size()); }

  Vector moduli(const Vector &rho) const {
    return rho.unaryExpr([this](double r) { return material_.modulus(r); });
  }

  Vector reduce(const Vector &full) const {
    Vector out(num_free());
    for (int k = 0; k < num_free(); ++k)
      out[k] = full[free_dofs_[static_cast<std::size_t>(k)]];
    return out;
  }

  Vector expand(const Vector &reduced) const {
    Vector out = Vector::Zero(mesh_.num_dofs());
    for (int k = 0; k < num_free(); ++k)
      out[free_dofs_[static_cast<std::size_t>(k)]] = reduced[k];
    return out;
  }

  /// Global stiffness on all DOFs for element moduli E.
  SparseMatrix assemble_full(const Vector &E) const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh_.num_elements()) * 64);
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto &dofs = mesh_.dof_map[static_cast<std::size_t>(e)];
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b)
          trips.emplace_back(dofs[a], dofs[b], E[e] * KE0_(a, b));
    }
    SparseMatrix K(mesh_.num_dofs(), mesh_.num_dofs());
    K.setFromTriplets(trips.begin(), trips.end());
    return K;
  }

  /// Stiffness restricted to free DOFs.
  SparseMatrix assemble_reduced(const Vector &E) const {
    SparseMatrix K = pattern_;
    double *values = K.valuePtr();
    std::fill(values, values + K.nonZeros(), 0.0);
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const int *slot = &slots_[static_cast<std::size_t>(e) * 64];
      const double Ee = E[e];
      for (int k = 0; k < 64; ++k)
        if (slot[k] >= 0)
          values[slot[k]] += Ee * KE0_.data()[k];
    }
    return K;
  }

  /// Per element: lambda_e^T KE0 u_e, for full-length lambda and u.
  Vector element_energy_products(const Vector &lambda, const Vector &u) const {
    Vector out(mesh_.num_elements());
    Eigen::Matrix<double, 8, 1> le, ue;
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto &dofs = mesh_.dof_map[static_cast<std::size_t>(e)];
      for (int a = 0; a < 8; ++a) {
        le[a] = lambda[dofs[a]];
        ue[a] = u[dofs[a]];
      }
      out[e] = le.dot(KE0_ * ue);
    }
    return out;
  }

  /// Maps u (full) to one unit-modulus centroid stress component per element:
  /// 0 = sigma_xx, 1 = sigma_yy, 2 = sigma_xy.
  const std::shared_ptr<const SparseMatrix> &stress_operator(int component) const {
    return stress_ops_[static_cast<std::size_t>(component)];
  }

private:
  void build_reduced_pattern() {
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto &dofs = mesh_.dof_map[static_cast<std::size_t>(e)];
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          const int r = full_to_free_[static_cast<std::size_t>(dofs[a])];
          const int c = full_to_free_[static_cast<std::size_t>(dofs[b])];
          if (r >= 0 && c >= 0)
            trips.emplace_back(r, c, 1.0);
        }
    }
    pattern_.resize(num_free(), num_free());
    pattern_.setFromTriplets(trips.begin(), trips.end());
    pattern_.makeCompressed();

    // KE0 is column-major: entry k = a + 8 b holds KE0(a, b).
    slots_.assign(static_cast<std::size_t>(mesh_.num_elements()) * 64, -1);
    const int *outer = pattern_.outerIndexPtr();
    const int *inner = pattern_.innerIndexPtr();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto &dofs = mesh_.dof_map[static_cast<std::size_t>(e)];
      for (int b = 0; b < 8; ++b) {
        const int c = full_to_free_[static_cast<std::size_t>(dofs[b])];
        if (c < 0)
          continue;
        for (int a = 0; a < 8; ++a) {
          const int r = full_to_free_[static_cast<std::size_t>(dofs[a])];
          if (r < 0)
            continue;
          const int *pos = std::lower_bound(inner + outer[c], inner + outer[c + 1], r);
          slots_[static_cast<std::size_t>(e) * 64 + static_cast<std::size_t>(a + 8 * b)] =
              static_cast<int>(pos - inner);
        }
      }
    }
  }

  void build_stress_operators() {
    const Eigen::Matrix<double, 3, 8> DB =
        constitutive_unit(material_.nu) * strain_displacement(0.0, 0.0, mesh_.elem_size);
    for (int comp = 0; comp < 3; ++comp) {
      std::vector<Eigen::Triplet<double>> trips;
      for (int e = 0; e < mesh_.num_elements(); ++e) {
        const auto &dofs = mesh_.dof_map[static_cast<std::size_t>(e)];
        for (int a = 0; a < 8; ++a)
          if (DB(comp, a) != 0.0)
            trips.emplace_back(e, dofs[a], DB(comp, a));
      }
      auto S = std::make_shared<SparseMatrix>(mesh_.num_elements(), mesh_.num_dofs());
      S->setFromTriplets(trips.begin(), trips.end());
      stress_ops_[static_cast<std::size_t>(comp)] = std::move(S);
    }
  }

  StructuredMesh mesh_;
  MaterialModel material_;
  Vector loads_;
  std::vector<bool> is_fixed_;
  std::vector<int> fixed_dofs_;
  std::vector<int> free_dofs_;
  std::vector<int> full_to_free_;
  Matrix8 KE0_;
  SparseMatrix pattern_;
  std::vector<int> slots_;
  std::array<std::shared_ptr<const SparseMatrix>, 3> stress_ops_;
};

/// E_e = Emin + rho_e^p (E0 - Emin) on the tape.
inline ad::Var simp_modulus(const ad::Var &rho, const MaterialModel &mat) {
  const auto &r = rho.value().array();
  if ((r < -1e-9).any() || (r > 1.0 + 1e-9).any())
    throw InvalidArgument("simp_modulus: density outside [0, 1]");
  return ad::add_scalar(ad::scale(ad::pow(ad::clamp(rho, 0.0, 1.0), mat.penal),
                                  mat.E0 - mat.Emin),
                        mat.Emin);
}

/// Solves K(rho) u = f and returns the full displacement vector (exact zeros
/// on fixed DOFs).
inline ad::Var assemble_and_solve(const FeModel &model, const ad::Var &rho) {
  if (rho.rows() != model.mesh().num_elements() || rho.cols() != 1)
    throw InvalidArgument("assemble_and_solve: density vector has wrong length");
  const auto &r = rho.value().array();
  if ((r < -1e-9).any() || (r > 1.0 + 1e-9).any())
    throw InvalidArgument("assemble_and_solve: density outside [0, 1]");
  ad::LinearSolveRule rule;
  rule.assemble = [&model](const Vector &p) {
    return model.assemble_reduced(model.moduli(p.cwiseMax(0.0).cwiseMin(1.0)));
  };
  rule.contract_derivative = [&model](const Vector &p, const Vector &lambda,
                                      const Vector &u) {
    const Vector dE = p.unaryExpr([&model](double x) {
      return model.material().modulus_derivative(std::clamp(x, 0.0, 1.0));
    });
    return Vector(model.element_energy_products(model.expand(lambda), model.expand(u))
                      .cwiseProduct(dE));
  };
  const ad::Var u_free = ad::linear_solve(rho, model.reduce(model.loads()), std::move(rule));
  return ad::gather(u_free, model.full_to_free());
}

/// C = f^T u.
inline ad::Var compliance(const ad::Var &u, const Vector &f) { return ad::dot(f, u); }

/// Centroid stresses. Components use the unit-modulus constitutive matrix;
/// the squared von Mises value is scaled by E_e, i.e. von Mises times sqrt(E_e).
struct StressField {
  ad::Var sigma_xx;
  ad::Var sigma_yy;
  ad::Var sigma_xy;
  ad::Var modulus;
  ad::Var von_mises_sq;

  Vector von_mises() const { return von_mises_sq.value().col(0).cwiseMax(0.0).cwiseSqrt(); }
};

inline ad::Var von_mises_squared(const ad::Var &sxx, const ad::Var &syy, const ad::Var &sxy) {
  using namespace ad;
  return square(sxx) + square(syy) - sxx * syy + 3.0 * square(sxy);
}

inline StressField centroid_stress(const FeModel &model, const ad::Var &u, const ad::Var &rho) {
  StressField s;
  s.sigma_xx = ad::spmm(model.stress_operator(0), u);
  s.sigma_yy = ad::spmm(model.stress_operator(1), u);
  s.sigma_xy = ad::spmm(model.stress_operator(2), u);
  s.modulus = simp_modulus(rho, model.material());
  s.von_mises_sq = ad::mul(von_mises_squared(s.sigma_xx, s.sigma_yy, s.sigma_xy), s.modulus);
  return s;
}

/// Aggregation settings for sigma_PN = ((1/N) sum (vm/allow)^p)^(1/p) - 1.
struct StressAggregate {
  double p_norm_exponent = 8.0;
  double sigma_allow = 2.3;

  void validate() const {
    if (!(sigma_allow > 0.0))
      throw InvalidArgument("StressAggregate: sigma_allow must be positive");
    if (!(p_norm_exponent >= 2.0))
      throw InvalidArgument("StressAggregate: exponent must be >= 2");
  }
};

/// p-norm aggregate from squared (scaled) von Mises values. Working on the
/// square keeps the expression smooth where a stress vanishes.
inline ad::Var p_norm_stress(const ad::Var &von_mises_sq, const StressAggregate &agg) {
  agg.validate();
  const double p = agg.p_norm_exponent;
  const ad::Var ratio_sq = ad::div_scalar(von_mises_sq, agg.sigma_allow * agg.sigma_allow);
  const ad::Var mean_power = ad::mean(ad::pow(ratio_sq, 0.5 * p));
  return ad::add_scalar(ad::pow(mean_power, 1.0 / p), -1.0);
}

inline ad::Var p_norm_stress(const StressField &stress, const StressAggregate &agg) {
  return p_norm_stress(stress.von_mises_sq, agg);
}

/// Plain-value p-norm of von Mises stresses (reporting and tests).
inline double p_norm_value(const Vector &von_mises, const StressAggregate &agg) {
  const double p = agg.p_norm_exponent;
  const double m = (von_mises / agg.sigma_allow).array().pow(p).mean();
  return std::pow(m, 1.0 / p) - 1.0;
}

} // namespace ntopo
