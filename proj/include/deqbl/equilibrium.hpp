#pragma once

// Fixed-point solvers for the two update maps
//
//   DeGrad: G(u) = u - tau * (lambda K^T (K u - f) + N(u))
//   DeProx: G(u) = N(u - tau * lambda K^T (K u - f))
//
// and three interchangeable ways to get dJ/dPsi at the fixed point:
// the adjoint fixed-point iteration, a dense implicit-function-theorem
// solve, and reverse-mode through a stored iterate tape.

#include "deqbl/linops.hpp"
#include "deqbl/proxmap.hpp"
#include "deqbl/regnet.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace deqbl {

enum class UpdateMap { degrad, deprox };

struct StoppingRule {
  double rel_tol = 1e-3;
  int max_iter = 500;

  void validate() const {
    if (!(rel_tol > 0.0)) throw std::invalid_argument("StoppingRule: rel_tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("StoppingRule: max_iter must be >= 1");
  }
};

struct EquilibriumProblem {
  std::shared_ptr<const LinearOperator> K;
  Vector f_delta;
  double lambda = 1.0;
  double tau = 0.5;
  UpdateMap map = UpdateMap::degrad;
  StoppingRule stop;

  void validate() const {
    if (!K) throw std::invalid_argument("EquilibriumProblem: missing forward operator");
    if (f_delta.size() != K->output_size())
      throw std::invalid_argument("EquilibriumProblem: measurement length does not match operator");
    if (!(lambda > 0.0)) throw std::invalid_argument("EquilibriumProblem: lambda must be positive");
    if (!(tau >= 0.0)) throw std::invalid_argument("EquilibriumProblem: tau must be non-negative");
    stop.validate();
  }
  [[nodiscard]] Eigen::Index size() const { return K->input_size(); }
};

struct FixedPointResult {
  Vector u;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool diverged = false;
  std::vector<Vector> tape;      // u_0, u_1, ..., u_k when recorded
  std::vector<double> residuals;  // per-iteration relative residual when recorded
};

struct SolveOptions {
  bool record_tape = false;
  bool record_trace = false;
};

// Solves abort when an iterate is non-finite, the relative residual
// exceeds this, or the iterate norm blows past kBlowupFactor * scale.
inline constexpr double kDivergenceResidual = 1e6;
inline constexpr double kBlowupFactor = 1e8;

// ||x_new - x_old|| / ||x_new||, with 0/0 read as converged.
inline double relative_change(const Vector& x_new, const Vector& x_old) {
  const double diff = (x_new - x_old).norm();
  const double nrm = x_new.norm();
  if (diff == 0.0) return 0.0;
  if (nrm == 0.0) return std::numeric_limits<double>::infinity();
  return diff / nrm;
}

// lambda K^T (K u - f)
inline Vector data_gradient(const EquilibriumProblem& prob, const Vector& u) {
  return prob.lambda * prob.K->adjoint(prob.K->apply(u) - prob.f_delta);
}

inline Vector normal_apply(const EquilibriumProblem& prob, const Vector& v) {
  return prob.K->adjoint(prob.K->apply(v));
}

template <class Layer>
Vector degrad_step(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi, const Activation& sigma,
                   const Vector& u) {
  Vector g = data_gradient(prob, u);
  if (psi.gamma != 0.0) g += regnet_forward(psi, sigma, u).value;
  return u - prob.tau * g;
}

template <class Layer>
Vector deprox_step(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi, const Activation& sigma,
                   const Vector& u) {
  const Vector v = u - prob.tau * data_gradient(prob, u);
  return regnet_forward(psi, sigma, v).value;
}

template <class Layer>
Vector fixed_point_step(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi, const Activation& sigma,
                        const Vector& u) {
  return prob.map == UpdateMap::degrad ? degrad_step(prob, psi, sigma, u) : deprox_step(prob, psi, sigma, u);
}

namespace detail {

template <class Layer>
FixedPointResult iterate(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                         const Activation& sigma, Vector u, int max_steps, double rel_tol, const SolveOptions& opts) {
  FixedPointResult res;
  const double scale = 1.0 + prob.f_delta.norm() + u.norm();
  if (opts.record_tape) res.tape.push_back(u);
  for (int k = 1; k <= max_steps; ++k) {
    Vector next = fixed_point_step(prob, psi, sigma, u);
    const double r = relative_change(next, u);
    res.iterations = k;
    res.residual = r;
    if (opts.record_trace) res.residuals.push_back(r);
    if (!next.allFinite() || !std::isfinite(r) || r > kDivergenceResidual || next.norm() > kBlowupFactor * scale) {
      res.diverged = true;
      res.u = std::move(next);
      return res;
    }
    u = std::move(next);
    if (opts.record_tape) res.tape.push_back(u);
    if (r <= rel_tol) {
      res.converged = true;
      break;
    }
  }
  res.u = std::move(u);
  return res;
}

}  // namespace detail

// Iterates the selected update map from u0 (zero when empty) until the
// relative change drops to rel_tol or max_iter steps were taken.
template <class Layer>
FixedPointResult solve_forward(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                               const Activation& sigma, const Vector& u0 = Vector(), const SolveOptions& opts = {}) {
  prob.validate();
  Vector start = u0.size() == 0 ? Vector::Zero(prob.size()) : u0;
  if (start.size() != prob.size()) throw std::invalid_argument("solve_forward: u0 length mismatch");
  return detail::iterate(prob, psi, sigma, std::move(start), prob.stop.max_iter, prob.stop.rel_tol, opts);
}

// Exactly `steps` iterations with no early exit (divergence still aborts).
template <class Layer>
FixedPointResult run_iterations(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                                const Activation& sigma, const Vector& u0, int steps, bool record_tape = true) {
  prob.validate();
  Vector start = u0.size() == 0 ? Vector::Zero(prob.size()) : u0;
  SolveOptions opts{record_tape, true};
  return detail::iterate(prob, psi, sigma, std::move(start), steps, 0.0, opts);
}

// tau_max = 2 / (lambda ||K||^2 + gamma xi ||A|| ||C||)
template <class Layer>
double contraction_bound(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi) {
  const double nk = prob.K->norm();
  return 2.0 / (prob.lambda * nk * nk + psi.lipschitz_bound());
}

// Linearization of one update map at a point u; reuses the network tape
// for every product.
template <class Layer>
class StepJacobian {
 public:
  StepJacobian(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi, const Activation& sigma,
               const Vector& u)
      : prob_(prob), psi_(psi), sigma_(sigma) {
    const Vector at = prob.map == UpdateMap::degrad ? u : Vector(u - prob.tau * data_gradient(prob, u));
    tape_ = regnet_forward(psi, sigma, at).tape;
  }

  // (dG/du)^T w
  [[nodiscard]] Vector vjp_input(const Vector& w) const {
    if (prob_.map == UpdateMap::degrad) {
      Vector out = prob_.lambda * normal_apply(prob_, w);
      if (psi_.gamma != 0.0) out += regnet_vjp_input(psi_, sigma_, tape_, w);
      return w - prob_.tau * out;
    }
    const Vector t = regnet_vjp_input(psi_, sigma_, tape_, w);
    return t - (prob_.tau * prob_.lambda) * normal_apply(prob_, t);
  }

  // (dG/du) v
  [[nodiscard]] Vector jvp_input(const Vector& v) const {
    if (prob_.map == UpdateMap::degrad) {
      Vector out = prob_.lambda * normal_apply(prob_, v);
      if (psi_.gamma != 0.0) out += regnet_jvp_input(psi_, sigma_, tape_, v);
      return v - prob_.tau * out;
    }
    const Vector t = v - (prob_.tau * prob_.lambda) * normal_apply(prob_, v);
    return regnet_jvp_input(psi_, sigma_, tape_, t);
  }

  // (dG/dPsi)^T w
  [[nodiscard]] ParamGrads vjp_params(const Vector& w) const {
    ParamGrads g = regnet_vjp_params(psi_, sigma_, tape_, w);
    if (prob_.map == UpdateMap::degrad) g *= -prob_.tau;
    return g;
  }

 private:
  const EquilibriumProblem& prob_;
  const RegularizerParams<Layer>& psi_;
  const Activation& sigma_;
  RegNetTape tape_;
};

struct AdjointResult {
  Vector mu;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// Solves mu = (dG/du)^T mu - grad_J by fixed-point iteration from
// mu_0 = -grad_J, under the problem's stopping rule.
template <class Layer>
AdjointResult solve_adjoint(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                            const Activation& sigma, const Vector& u_star, const Vector& grad_J) {
  prob.validate();
  if (grad_J.size() != prob.size()) throw std::invalid_argument("solve_adjoint: gradient length mismatch");
  AdjointResult res;
  res.mu = -grad_J;
  if (grad_J.squaredNorm() == 0.0) {
    res.converged = true;
    return res;
  }
  const StepJacobian<Layer> jac(prob, psi, sigma, u_star);
  for (int k = 1; k <= prob.stop.max_iter; ++k) {
    Vector next = jac.vjp_input(res.mu) - grad_J;
    res.residual = relative_change(next, res.mu);
    res.iterations = k;
    res.mu = std::move(next);
    if (!res.mu.allFinite()) return res;
    if (res.residual <= prob.stop.rel_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// (dG/dPsi)^T mu at u_star.
template <class Layer>
ParamGrads param_jacobian_transpose(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                                    const Activation& sigma, const Vector& u_star, const Vector& mu) {
  return StepJacobian<Layer>(prob, psi, sigma, u_star).vjp_params(mu);
}

// dJ/dPsi = -(dG/dPsi)^T mu_star. The minus sign comes from
// mu_star = -(I - (dG/du)^T)^{-1} grad_J.
template <class Layer>
ParamGrads param_gradient(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                          const Activation& sigma, const Vector& u_star, const Vector& mu_star) {
  ParamGrads g = param_jacobian_transpose(prob, psi, sigma, u_star, mu_star);
  g *= -1.0;
  return g;
}

namespace detail {

template <class Layer>
ParamGrads unflatten(const RegularizerParams<Layer>& psi, const Vector& flat) {
  ParamGrads g = ParamGrads::zeros_like(psi);
  g.A = flat.segment(0, g.A.size());
  g.C = flat.segment(g.A.size(), g.C.size());
  g.b = flat.segment(g.A.size() + g.C.size(), g.b.size());
  return g;
}

}  // namespace detail

// Implicit-function-theorem gradient for the tied DeGrad form. S(u) =
// lambda K^T (K u - f) + N(u) vanishes at u_star; with dense Jacobians
//   dJ/dPsi = -(dS/dPsi)^T (dS/du)^{-T} grad_J.
// Small problems only: both Jacobians are assembled column by column.
template <class Layer>
ParamGrads ift_gradient(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                        const Activation& sigma, const Vector& u_star, const Vector& grad_J) {
  prob.validate();
  if (!psi.tied) throw std::invalid_argument("ift_gradient: requires tied weights (C = A)");
  if (prob.map != UpdateMap::degrad) throw std::invalid_argument("ift_gradient: requires the gradient-step map");
  const Eigen::Index n = prob.size();
  if (grad_J.size() != n) throw std::invalid_argument("ift_gradient: gradient length mismatch");

  const RegNetTape tape = regnet_forward(psi, sigma, u_star).tape;
  Matrix dS_du(n, n);
  Matrix dS_dpsi(n, ParamGrads::zeros_like(psi).size());
  Vector e = Vector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    Vector col = prob.lambda * normal_apply(prob, e);
    if (psi.gamma != 0.0) col += regnet_jvp_input(psi, sigma, tape, e);
    dS_du.col(j) = col;
    // row j of dS/dPsi is dN_j/dPsi
    dS_dpsi.row(j) = regnet_vjp_params(psi, sigma, tape, e).flat().transpose();
    e[j] = 0.0;
  }

  Eigen::FullPivLU<Matrix> lu(dS_du.transpose());
  if (!lu.isInvertible()) throw std::runtime_error("ift_gradient: dS/du is singular at the fixed point");
  const Vector nu = lu.solve(grad_J);
  return detail::unflatten(psi, -(dS_dpsi.transpose() * nu));
}

// Exact gradient of J(u_K) for the K-step iterate recorded in fwd.tape,
// by reverse recurrence through the update map.
template <class Layer>
ParamGrads unrolled_gradient(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                             const Activation& sigma, const FixedPointResult& fwd,
                             const std::function<Vector(const Vector&)>& grad_J_fn) {
  if (fwd.tape.empty()) throw std::invalid_argument("unrolled_gradient: forward solve has no iterate tape");
  ParamGrads g = ParamGrads::zeros_like(psi);
  Vector bar = grad_J_fn(fwd.tape.back());
  for (std::size_t k = fwd.tape.size() - 1; k-- > 0;) {
    const StepJacobian<Layer> jac(prob, psi, sigma, fwd.tape[k]);
    g += jac.vjp_params(bar);
    bar = jac.vjp_input(bar);
  }
  return g;
}

// lambda/2 ||K u - f||^2 + R(u), the objective the tied DeGrad iteration descends.
template <class Layer>
double lower_level_objective(const EquilibriumProblem& prob, const RegularizerParams<Layer>& psi,
                             const Activation& sigma, const Vector& u) {
  const double data = 0.5 * prob.lambda * (prob.K->apply(u) - prob.f_delta).squaredNorm();
  return data + (psi.gamma == 0.0 ? 0.0 : regularizer_value(psi, sigma, u));
}

inline void write_trace_csv(std::ostream& os, const FixedPointResult& res) {
  os << "iteration,residual\n";
  for (std::size_t k = 0; k < res.residuals.size(); ++k) os << (k + 1) << ',' << res.residuals[k] << '\n';
}

}  // namespace deqbl
