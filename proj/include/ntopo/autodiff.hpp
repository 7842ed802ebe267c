#pragma once

// Define-by-run reverse-mode differentiation over dense Eigen matrices.
//
// Every value on the tape is an Eigen::MatrixXd (column vectors are N x 1,
// scalars are 1 x 1). Operations append a node holding the forward value and
// a closure that pushes the incoming adjoint to the node's inputs. Nodes only
// reference earlier nodes, so a single reverse sweep over the node list is a
// valid topological order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "errors.hpp"

namespace ntopo::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

class Tape;

/// Handle to one tape node.
class Var {
public:
  Var() = default;
  Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix &value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  std::size_t id() const { return id_; }
  Tape &tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape *tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
public:
  using Backward = std::function<void(Tape &, const Matrix &)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }
  /// Leaf without a gradient.
  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  /// Appends an operation node. The node needs a gradient iff one of its
  /// inputs does; otherwise the closure is dropped.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var record(Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var &in : inputs) {
      if (&in.tape() != this)
        throw InvalidArgument("autodiff: operands live on different tapes");
      needs = needs || nodes_[in.id()].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  /// Id the next recorded node will receive (used in error reports).
  std::size_t next_id() const { return nodes_.size(); }
  std::size_t size() const { return nodes_.size(); }

  bool needs_grad(const Var &v) const { return nodes_[v.id()].needs_grad; }
  const Matrix &value(const Var &v) const { return nodes_[v.id()].value; }

  template <class Expr> void accumulate(const Var &v, const Expr &g) {
    Node &n = nodes_[v.id()];
    if (!n.needs_grad)
      return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Reverse sweep from a scalar output. Gradients from any previous sweep
  /// are discarded first, so the tape can be swept repeatedly.
  void backward(const Var &output) {
    if (&output.tape() != this)
      throw InvalidArgument("backward: output belongs to another tape");
    if (output.rows() != 1 || output.cols() != 1)
      throw InvalidArgument("backward: output must be a scalar");
    zero_grad();
    nodes_[output.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t k = output.id() + 1; k-- > 0;) {
      Node &n = nodes_[k];
      if (n.backward && n.grad.size() != 0) {
        const Matrix g = n.grad;
        n.backward(*this, g);
      }
    }
  }

  /// Gradient of the last swept output w.r.t. v (zeros if unreached).
  Matrix grad(const Var &v) const {
    const Node &n = nodes_[v.id()];
    if (n.grad.size() == 0)
      return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void zero_grad() {
    for (Node &n : nodes_)
      n.grad.resize(0, 0);
  }

  void clear() { nodes_.clear(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool needs, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), needs, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix &Var::value() const { return tape_->value(*this); }

inline double Var::scalar() const {
  const Matrix &v = value();
  if (v.size() != 1)
    throw InvalidArgument("Var::scalar: value is not 1 x 1");
  return v(0, 0);
}

namespace detail {

inline void same_shape(const Var &a, const Var &b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(op) + ": shape mismatch (" +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
}

inline void column(const Var &a, const char *op) {
  if (a.cols() != 1)
    throw InvalidArgument(std::string(op) + ": expected a column vector");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var &a, const Var &b) {
  detail::same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b},
                         [a, b](Tape &t, const Matrix &g) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

inline Var sub(const Var &a, const Var &b) {
  detail::same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b},
                         [a, b](Tape &t, const Matrix &g) {
                           t.accumulate(a, g);
                           t.accumulate(b, -g);
                         });
}

inline Var mul(const Var &a, const Var &b) {
  detail::same_shape(a, b, "mul");
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                         [a, b](Tape &t, const Matrix &g) {
                           if (t.needs_grad(a))
                             t.accumulate(a, g.cwiseProduct(b.value()));
                           if (t.needs_grad(b))
                             t.accumulate(b, g.cwiseProduct(a.value()));
                         });
}

inline Var div(const Var &a, const Var &b) {
  detail::same_shape(a, b, "div");
  if ((b.value().array() == 0.0).any())
    throw NumericDomainError("div: division by zero", a.tape().next_id());
  return a.tape().record(a.value().cwiseQuotient(b.value()), {a, b},
                         [a, b](Tape &t, const Matrix &g) {
                           const Matrix gb = g.cwiseQuotient(b.value());
                           if (t.needs_grad(a))
                             t.accumulate(a, gb);
                           if (t.needs_grad(b))
                             t.accumulate(b, -gb.cwiseProduct(a.value())
                                                  .cwiseQuotient(b.value()));
                         });
}

inline Var scale(const Var &a, double c) {
  return a.tape().record(a.value() * c, {a},
                         [a, c](Tape &t, const Matrix &g) { t.accumulate(a, g * c); });
}

/// a / c for a nonzero constant c; exact where a == c.
inline Var div_scalar(const Var &a, double c) {
  if (c == 0.0)
    throw NumericDomainError("div_scalar: division by zero", a.id());
  return a.tape().record(a.value() / c, {a}, [a, c](Tape &t, const Matrix &g) {
    t.accumulate(a, g / c);
  });
}

inline Var add_scalar(const Var &a, double c) {
  return a.tape().record((a.value().array() + c).matrix(), {a},
                         [a](Tape &t, const Matrix &g) { t.accumulate(a, g); });
}

inline Var neg(const Var &a) { return scale(a, -1.0); }

inline Var operator+(const Var &a, const Var &b) { return add(a, b); }
inline Var operator-(const Var &a, const Var &b) { return sub(a, b); }
inline Var operator*(const Var &a, const Var &b) { return mul(a, b); }
inline Var operator/(const Var &a, const Var &b) { return div(a, b); }
inline Var operator*(const Var &a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var &a) { return scale(a, c); }
inline Var operator+(const Var &a, double c) { return add_scalar(a, c); }
inline Var operator+(double c, const Var &a) { return add_scalar(a, c); }
inline Var operator-(const Var &a, double c) { return add_scalar(a, -c); }
inline Var operator-(const Var &a) { return neg(a); }

/// Elementwise a^p. Where the base is exactly zero and p < 1 the local
/// derivative is taken as 0 (the one-sided limit is unbounded); this is what
/// makes an all-void support region contribute no gradient.
inline Var pow(const Var &a, double p) {
  const Matrix &x = a.value();
  const bool integral = std::floor(p) == p;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double v = x.data()[k];
    if ((v < 0.0 && !integral) || (v == 0.0 && p < 0.0))
      throw NumericDomainError("pow: base " + std::to_string(v) +
                                   " outside the domain of exponent " +
                                   std::to_string(p),
                               a.tape().next_id());
  }
  Matrix out = x.unaryExpr([p](double v) { return std::pow(v, p); });
  return a.tape().record(std::move(out), {a}, [a, p](Tape &t, const Matrix &g) {
    const Matrix local = a.value().unaryExpr([p](double v) {
      if (v == 0.0)
        return p == 1.0 ? 1.0 : 0.0;
      return p * std::pow(v, p - 1.0);
    });
    t.accumulate(a, g.cwiseProduct(local));
  });
}

inline Var square(const Var &a) { return mul(a, a); }

/// Elementwise sqrt; local derivative 0 at an exact zero (see pow).
inline Var sqrt(const Var &a) {
  if ((a.value().array() < 0.0).any())
    throw NumericDomainError("sqrt: negative argument", a.tape().next_id());
  Matrix out = a.value().cwiseSqrt();
  return a.tape().record(out, {a}, [a, out](Tape &t, const Matrix &g) {
    const Matrix local =
        out.unaryExpr([](double s) { return s == 0.0 ? 0.0 : 0.5 / s; });
    t.accumulate(a, g.cwiseProduct(local));
  });
}

inline Var exp(const Var &a) {
  Matrix out = a.value().array().exp().matrix();
  return a.tape().record(out, {a}, [a, out](Tape &t, const Matrix &g) {
    t.accumulate(a, g.cwiseProduct(out));
  });
}

inline Var log(const Var &a) {
  if ((a.value().array() <= 0.0).any())
    throw NumericDomainError("log: non-positive argument", a.tape().next_id());
  return a.tape().record(a.value().array().log().matrix(), {a},
                         [a](Tape &t, const Matrix &g) {
                           t.accumulate(a, g.cwiseQuotient(a.value()));
                         });
}

/// max(x, 0); derivative 0 at x <= 0.
inline Var relu(const Var &a) {
  return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](Tape &t, const Matrix &g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Var sigmoid(const Var &a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid(x); });
  return a.tape().record(out, {a}, [a, out](Tape &t, const Matrix &g) {
    t.accumulate(a, g.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

/// Clamp into [lo, hi]; gradient passes where lo <= x <= hi.
inline Var clamp(const Var &a, double lo, double hi) {
  return a.tape().record(a.value().cwiseMax(lo).cwiseMin(hi), {a},
                         [a, lo, hi](Tape &t, const Matrix &g) {
                           const auto &x = a.value().array();
                           t.accumulate(a, ((x >= lo) && (x <= hi)).select(g, 0.0).matrix());
                         });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var &a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape &t, const Matrix &g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var mean(const Var &a) {
  if (a.size() == 0)
    throw InvalidArgument("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

/// c^T x for a constant column vector c.
inline Var dot(const Vector &c, const Var &x) {
  detail::column(x, "dot");
  if (c.size() != x.rows())
    throw InvalidArgument("dot: length mismatch");
  Matrix out(1, 1);
  out(0, 0) = c.dot(x.value().col(0));
  return x.tape().record(std::move(out), {x}, [x, c](Tape &t, const Matrix &g) {
    t.accumulate(x, c * g(0, 0));
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Dense product A * B; A^T g flows to B and g B^T to A.
inline Var matmul(const Var &A, const Var &B) {
  if (A.cols() != B.rows())
    throw InvalidArgument("matmul: inner dimensions differ (" +
                          std::to_string(A.cols()) + " vs " +
                          std::to_string(B.rows()) + ")");
  return A.tape().record(A.value() * B.value(), {A, B},
                         [A, B](Tape &t, const Matrix &g) {
                           if (t.needs_grad(A))
                             t.accumulate(A, g * B.value().transpose());
                           if (t.needs_grad(B))
                             t.accumulate(B, A.value().transpose() * g);
                         });
}

inline Var matvec(const Var &A, const Var &x) {
  detail::column(x, "matvec");
  return matmul(A, x);
}

/// Constant sparse S times x.
inline Var spmm(std::shared_ptr<const SparseMatrix> S, const Var &x) {
  if (S->cols() != x.rows())
    throw InvalidArgument("spmm: dimension mismatch");
  Matrix out = (*S) * x.value();
  return x.tape().record(std::move(out), {x}, [S, x](Tape &t, const Matrix &g) {
    t.accumulate(x, S->transpose() * g);
  });
}

inline Var spmm(const SparseMatrix &S, const Var &x) {
  return spmm(std::make_shared<const SparseMatrix>(S), x);
}

/// X + 1 b, adding row vector b to every row of X.
inline Var add_row_broadcast(const Var &X, const Var &b) {
  if (b.rows() != 1 || b.cols() != X.cols())
    throw InvalidArgument("add_row_broadcast: bias must be 1 x cols(X)");
  Matrix out = X.value();
  out.rowwise() += b.value().row(0);
  return X.tape().record(std::move(out), {X, b}, [X, b](Tape &t, const Matrix &g) {
    t.accumulate(X, g);
    if (t.needs_grad(b))
      t.accumulate(b, g.colwise().sum());
  });
}

// ---------------------------------------------------------------------------
// Indexing

/// out[k] = x[index[k]], or 0 where index[k] < 0.
inline Var gather(const Var &x, std::vector<int> index) {
  detail::column(x, "gather");
  Matrix out(static_cast<Eigen::Index>(index.size()), 1);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const int src = index[k];
    if (src >= x.rows())
      throw InvalidArgument("gather: index out of range");
    out(static_cast<Eigen::Index>(k), 0) = src < 0 ? 0.0 : x.value()(src, 0);
  }
  return x.tape().record(std::move(out), {x},
                         [x, idx = std::move(index)](Tape &t, const Matrix &g) {
                           Matrix gx = Matrix::Zero(x.rows(), 1);
                           for (std::size_t k = 0; k < idx.size(); ++k)
                             if (idx[k] >= 0)
                               gx(idx[k], 0) += g(static_cast<Eigen::Index>(k), 0);
                           t.accumulate(x, gx);
                         });
}

/// Rows [start, start + count) of a column vector.
inline Var segment(const Var &x, Eigen::Index start, Eigen::Index count) {
  detail::column(x, "segment");
  if (start < 0 || count < 0 || start + count > x.rows())
    throw InvalidArgument("segment: range out of bounds");
  return x.tape().record(x.value().middleRows(start, count), {x},
                         [x, start, count](Tape &t, const Matrix &g) {
                           Matrix gx = Matrix::Zero(x.rows(), 1);
                           gx.middleRows(start, count) = g;
                           t.accumulate(x, gx);
                         });
}

/// Stacks column vectors.
inline Var concat(const std::vector<Var> &parts) {
  if (parts.empty())
    throw InvalidArgument("concat: no operands");
  Tape &tape = parts.front().tape();
  Eigen::Index total = 0;
  for (const Var &p : parts) {
    detail::column(p, "concat");
    if (&p.tape() != &tape)
      throw InvalidArgument("concat: operands live on different tapes");
    total += p.rows();
  }
  Matrix out(total, 1);
  Eigen::Index offset = 0;
  for (const Var &p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return tape.record(std::move(out), std::span<const Var>(parts),
                     [parts](Tape &t, const Matrix &g) {
                       Eigen::Index off = 0;
                       for (const Var &p : parts) {
                         t.accumulate(p, g.middleRows(off, p.rows()));
                         off += p.rows();
                       }
                     });
}

/// Column-major reshape.
inline Var reshape(const Var &x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.size())
    throw InvalidArgument("reshape: element count mismatch");
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return x.tape().record(std::move(out), {x}, [x, r0, c0](Tape &t, const Matrix &g) {
    t.accumulate(x, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

/// Replaces masked rows of a column vector with `fill`; no gradient flows to
/// the replaced entries.
inline Var mask_fill(const Var &x, const std::vector<bool> &mask, double fill) {
  detail::column(x, "mask_fill");
  if (static_cast<Eigen::Index>(mask.size()) != x.rows())
    throw InvalidArgument("mask_fill: mask length mismatch");
  Matrix out = x.value();
  Matrix keep = Matrix::Ones(x.rows(), 1);
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k]) {
      out(static_cast<Eigen::Index>(k), 0) = fill;
      keep(static_cast<Eigen::Index>(k), 0) = 0.0;
    }
  return x.tape().record(std::move(out), {x}, [x, keep](Tape &t, const Matrix &g) {
    t.accumulate(x, g.cwiseProduct(keep));
  });
}

// ---------------------------------------------------------------------------
// Linear solve with an adjoint backward rule

/// Describes a parameterized SPD system K(p) u = f.
struct LinearSolveRule {
  /// Assembles K(p) (already reduced to free unknowns).
  std::function<SparseMatrix(const Vector &params)> assemble;
  /// Returns, per parameter e, lambda^T (dK/dp_e) u.
  std::function<Vector(const Vector &params, const Vector &lambda, const Vector &u)>
      contract_derivative;
};

/// Factorization shared by the forward solve and the backward adjoint solve.
class SpdFactorization {
public:
  explicit SpdFactorization(const SparseMatrix &K) {
    solver_.compute(K);
    if (solver_.info() != Eigen::Success)
      throw SolverFailure("stiffness factorization failed", 0.0);
    const Vector &d = solver_.vectorD();
    const double smallest = d.size() ? d.minCoeff() : 0.0;
    const double largest = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
    if (d.size() == 0 || !(smallest > 1e-13 * largest))
      throw SolverFailure("reduced stiffness is singular or indefinite", smallest);
  }
  Vector solve(const Vector &rhs) const { return solver_.solve(rhs); }

private:
  Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

/// u = K(p)^-1 f. Backward: solve K lambda = u_bar with the same
/// factorization and push -lambda^T (dK/dp) u to p.
inline Var linear_solve(const Var &params, const Vector &rhs, LinearSolveRule rule) {
  detail::column(params, "linear_solve");
  const Vector p = params.value().col(0);
  const SparseMatrix K = rule.assemble(p);
  if (K.rows() != K.cols() || K.rows() != rhs.size())
    throw InvalidArgument("linear_solve: system size mismatch");
  auto factor = std::make_shared<const SpdFactorization>(K);
  Vector u = factor->solve(rhs);
  return params.tape().record(
      Matrix(u), {params},
      [params, factor, u, rule = std::move(rule)](Tape &t, const Matrix &g) {
        const Vector lambda = factor->solve(g.col(0));
        const Vector p = params.value().col(0);
        t.accumulate(params, -rule.contract_derivative(p, lambda, u));
      });
}

} // namespace ntopo::ad
