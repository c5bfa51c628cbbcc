#pragma once

// Brute-force oracles: dense Jacobian assembly by probing, central finite
// differences, and direct linear solves. Everything here is deliberately
// slow and independent of the adjoint/tape machinery it is used to check.

#include "deqbl/equilibrium.hpp"
#include "deqbl/regnet.hpp"

#include <functional>

namespace deqbl::verify {

// Dense matrix of a linear map by applying it to every basis vector.
inline Matrix assemble(Eigen::Index in_dim, const std::function<Vector(const Vector&)>& op) {
  Vector e = Vector::Zero(in_dim);
  Matrix m;
  for (Eigen::Index j = 0; j < in_dim; ++j) {
    e[j] = 1.0;
    const Vector col = op(e);
    if (j == 0) m.resize(col.size(), in_dim);
    m.col(j) = col;
    e[j] = 0.0;
  }
  return m;
}

// Central finite-difference Jacobian of f at x.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Matrix jac;
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    const Vector fp = f(xp);
    xp[j] = x[j] - h;
    const Vector fm = f(xp);
    xp[j] = x[j];
    if (j == 0) jac.resize(fp.size(), x.size());
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

inline double fd_scalar(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

// Fixed point of G by a direct dense Newton-free route: for the tied,
// identity-activation DeGrad map the fixed point solves
// (lambda K^T K + gamma A^T A) u = lambda K^T f - gamma A^T b.
inline Vector tikhonov_like_solution(const LinearOperator& K, const Vector& f, double lambda, const Matrix& A,
                                     const Vector& b, double gamma) {
  const Matrix Kd = assemble(K.input_size(), [&](const Vector& x) { return K.apply(x); });
  const Matrix H = lambda * Kd.transpose() * Kd + gamma * A.transpose() * A;
  Vector rhs = lambda * Kd.transpose() * f;
  if (b.size() > 0) rhs -= gamma * A.transpose() * b;
  return H.fullPivLu().solve(rhs);
}

// Loss gradient obtained by re-solving the fixed point for every perturbed
// parameter (central differences over all entries of A, C, b). Weights are
// perturbed in place; tied parameters are perturbed together.
template <class Layer>
ParamGrads fd_param_gradient(const EquilibriumProblem& prob, RegularizerParams<Layer> psi, const Activation& sigma,
                             const std::function<double(const Vector&)>& loss, double h = 1e-6) {
  auto eval = [&](const RegularizerParams<Layer>& p) { return loss(solve_forward(prob, p, sigma).u); };
  ParamGrads g = ParamGrads::zeros_like(psi);
  for (Eigen::Index i = 0; i < g.A.size(); ++i) {
    const double x = psi.A.weights()[i];
    psi.A.weights()[i] = x + h;
    psi.sync_tied();
    const double fp = eval(psi);
    psi.A.weights()[i] = x - h;
    psi.sync_tied();
    const double fm = eval(psi);
    psi.A.weights()[i] = x;
    psi.sync_tied();
    g.A[i] = (fp - fm) / (2.0 * h);
  }
  if (!psi.tied) {
    for (Eigen::Index i = 0; i < g.C.size(); ++i) {
      const double x = psi.C.weights()[i];
      psi.C.weights()[i] = x + h;
      const double fp = eval(psi);
      psi.C.weights()[i] = x - h;
      const double fm = eval(psi);
      psi.C.weights()[i] = x;
      g.C[i] = (fp - fm) / (2.0 * h);
    }
  }
  for (Eigen::Index i = 0; i < g.b.size(); ++i) {
    const double x = psi.b[i];
    psi.b[i] = x + h;
    const double fp = eval(psi);
    psi.b[i] = x - h;
    const double fm = eval(psi);
    psi.b[i] = x;
    g.b[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace deqbl::verify
