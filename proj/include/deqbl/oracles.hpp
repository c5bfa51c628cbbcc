#pragma once

// Oracle suite shared by `deqbl selftest` and the acceptance runner. Each
// check draws its own seeded random instances and reports the worst
// measured error next to the tolerance it is judged against.

#include "deqbl/equilibrium.hpp"
#include "deqbl/forward_models.hpp"
#include "deqbl/training.hpp"
#include "deqbl/verify.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace deqbl::oracles {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline Vector uniform(std::mt19937_64& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

inline Matrix uniform(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  Matrix m(r, c);
  m.reshaped() = uniform(rng, r * c, lo, hi);
  return m;
}

inline double inner_gap(double lhs, double rhs) { return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)); }

inline std::shared_ptr<const LinearOperator> share(LinearOperator k) {
  return std::make_shared<const LinearOperator>(std::move(k));
}

template <class Fn>
CheckResult timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

// <Ku, v> = <u, K^T v> for identity, row-mask and convolution operators
// and for the regularizer's input linearization, `instances` draws each.
inline CheckResult check_adjointness(int instances = 25, std::uint64_t seed = 1) {
  return detail::timed([&] {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dim(2, 9);
    std::uniform_int_distribution<int> ksz(0, 2);
    double worst = 0.0;
    int count = 0;
    for (int t = 0; t < instances; ++t) {
      const int rows = dim(rng);
      const int cols = dim(rng);
      const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
      std::vector<int> mask;
      for (int r = 0; r < rows; r += 2) mask.push_back(r);
      ConvKernelBank k(1, 2 * ksz(rng) + 1, 2 * ksz(rng) + 1);
      k.weights = detail::uniform(rng, k.weights.size());
      for (const LinearOperator& K : {LinearOperator::identity(rows, cols), LinearOperator::row_mask(rows, cols, mask),
                                      LinearOperator::convolution(rows, cols, k)}) {
        const Vector u = detail::uniform(rng, n);
        const Vector v = detail::uniform(rng, n);
        worst = std::max(worst, detail::inner_gap(K.apply(u).dot(v), u.dot(K.adjoint(v))));
        ++count;
      }
      ConvKernelBank bank(2, 3, 3);
      bank.weights = detail::uniform(rng, bank.weights.size());
      const ConvParams conv{ConvLayer(bank, rows, cols), ConvLayer(bank, rows, cols), Vector(), 0.7, 1.3, true};
      const Eigen::Index s = dim(rng);
      const DenseParams dense{DenseLayer(detail::uniform(rng, s, n, -1, 1)), DenseLayer(detail::uniform(rng, s, n, -1, 1)),
                              detail::uniform(rng, s), 0.7, 1.3, false};
      const Activation sig = Activation::softshrink(0.3);
      auto lin = [&](const auto& p) {
        const Vector u = detail::uniform(rng, n);
        const RegNetTape tape = regnet_forward(p, sig, u).tape;
        const Vector v = detail::uniform(rng, n);
        const Vector w = detail::uniform(rng, n);
        worst = std::max(worst, detail::inner_gap(regnet_jvp_input(p, sig, tape, v).dot(w),
                                                  v.dot(regnet_vjp_input(p, sig, tape, w))));
        ++count;
      };
      lin(dense);
      lin(conv);
    }
    return CheckResult{"adjointness", worst, 1e-10, worst <= 1e-10, std::to_string(count) + " instances"};
  });
}

// prox_R(w) + prox_{R*}(w) = w for the paired activations.
inline CheckResult check_moreau(std::uint64_t seed = 2) {
  return detail::timed([&] {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (const auto& m : {ProxMap::identity(), ProxMap::relu(), ProxMap::softshrink(0.5), ProxMap::clamp(1.3)}) {
      const Vector w = detail::uniform(rng, 1000, -10, 10);
      worst = std::max(worst, (apply(m, w) + apply(moreau_partner(m), w) - w).cwiseAbs().maxCoeff());
    }
    return CheckResult{"moreau", worst, 1e-12, worst <= 1e-12, "identity, relu, softshrink/clamp"};
  });
}

// Tied identity-activation network with A = I, b = 0, gamma = 1: the fixed
// point is (lambda K^T K + I)^{-1} lambda K^T f, computed by a dense solve.
inline CheckResult check_tikhonov(std::uint64_t seed = 3) {
  return detail::timed([&] {
    std::mt19937_64 rng(seed);
    const int rows = 2;
    const int cols = 4;
    const Eigen::Index n = rows * cols;
    const DenseParams net{DenseLayer(Matrix::Identity(n, n)), DenseLayer(Matrix::Identity(n, n)), Vector::Zero(n), 1.0,
                          1.0, true};
    double worst = 0.0;
    for (double lambda : {0.5, 1.0, 3.0}) {
      for (const LinearOperator& K : {LinearOperator::identity(rows, cols), LinearOperator::row_mask(rows, cols, {0}),
                                      LinearOperator::convolution(rows, cols, ConvKernelBank::single(Matrix::Constant(3, 3, 1.0 / 9.0)))}) {
        EquilibriumProblem prob;
        prob.K = detail::share(K);
        prob.f_delta = detail::uniform(rng, n);
        prob.lambda = lambda;
        prob.stop = {1e-15, 1000000};
        prob.tau = 0.9 * contraction_bound(prob, net);
        const Vector u = solve_forward(prob, net, Activation::identity()).u;
        const Vector ref = verify::tikhonov_like_solution(K, prob.f_delta, lambda, Matrix::Identity(n, n), Vector(), 1.0);
        worst = std::max(worst, (u - ref).cwiseAbs().maxCoeff());
      }
    }
    return CheckResult{"tikhonov", worst, 1e-6, worst <= 1e-6, "8-pixel instances, 3 operators x 3 lambdas"};
  });
}

// Adjoint fixed point, IFT dense solve and unrolled tape agree with each
// other and with re-solved central differences on a 4x4 inpainting problem.
inline CheckResult check_three_way(std::uint64_t seed = 4) {
  return detail::timed([&] {
    std::mt19937_64 rng(seed);
    const int side = 4;
    const Eigen::Index n = side * side;
    const auto K = detail::share(LinearOperator::row_mask(side, side, default_mask(side)));
    // square A: fewer hidden units than masked pixels make dS/du singular
    const Matrix a = detail::uniform(rng, n, n, -0.5, 0.5);
    const DenseParams psi{DenseLayer(a), DenseLayer(a), detail::uniform(rng, n, -0.2, 0.2), 0.6, 1.0, true};
    const Vector truth = detail::uniform(rng, n);
    EquilibriumProblem prob;
    prob.K = K;
    prob.f_delta = K->apply(truth) + 0.05 * detail::uniform(rng, n);
    prob.tau = 0.5;
    prob.stop = {1e-12, 200000};
    auto loss = [&](const Vector& u) { return mse_loss(u, truth).loss; };
    double worst = 0.0;
    std::string detail_text;
    for (const auto& s : {Activation::tanh(), Activation::softshrink(0.05)}) {
      const auto fwd = solve_forward(prob, psi, s, Vector(), {true, false});
      const Vector gJ = mse_loss(fwd.u, truth).grad;
      const auto adj = solve_adjoint(prob, psi, s, fwd.u, gJ);
      const Vector g_adj = param_gradient(prob, psi, s, fwd.u, adj.mu).flat();
      const Vector g_ift = ift_gradient(prob, psi, s, fwd.u, gJ).flat();
      const Vector g_unr = unrolled_gradient(prob, psi, s, fwd, [&](const Vector& u) { return mse_loss(u, truth).grad; }).flat();
      const Vector g_fd = verify::fd_param_gradient<DenseLayer>(prob, psi, s, loss).flat();
      const double e = std::max({verify::relative_error(g_adj, g_ift), verify::relative_error(g_adj, g_unr),
                                 verify::relative_error(g_ift, g_unr), verify::relative_error(g_adj, g_fd),
                                 verify::relative_error(g_ift, g_fd), verify::relative_error(g_unr, g_fd)});
      if (!fwd.converged || !adj.converged) detail_text += std::string(to_string(s.kind)) + " unconverged; ";
      worst = std::max(worst, e);
    }
    if (detail_text.empty()) detail_text = "tanh and softshrink, 272 parameters";
    const bool ok = worst <= 1e-4 && detail_text.find("unconverged") == std::string::npos;
    return CheckResult{"three_way_gradient", worst, 1e-4, ok, detail_text};
  });
}

// Below the bound the step norms ||u_{k+1} - u_k|| never grow after a burn-in
// of 5 iterations; far above it (zero network) divergence is flagged.
inline CheckResult check_contraction(std::uint64_t seed = 5) {
  return detail::timed([&] {
    std::mt19937_64 rng(seed);
    const int side = 5;
    const Eigen::Index n = side * side;
    double worst_growth = 0.0;
    bool diverged_all = true;
    for (TaskKind task : {TaskKind::denoise, TaskKind::inpaint, TaskKind::deblur}) {
      ProblemKind pk;
      pk.kind = task;
      const auto K = detail::share(build_operator(pk, side, side));
      const Matrix a = detail::uniform(rng, n, n, -0.3, 0.3);
      const DenseParams psi{DenseLayer(a), DenseLayer(a), detail::uniform(rng, n, -0.2, 0.2), 0.5, 1.0, true};
      EquilibriumProblem prob;
      prob.K = K;
      prob.f_delta = K->apply(detail::uniform(rng, n));
      prob.tau = 0.9 * contraction_bound(prob, psi);
      const auto res = run_iterations(prob, psi, Activation::softshrink(0.1), Vector(), 300);
      for (std::size_t k = 6; k + 1 < res.tape.size(); ++k) {
        const double prev = (res.tape[k] - res.tape[k - 1]).norm();
        const double next = (res.tape[k + 1] - res.tape[k]).norm();
        if (prev > 1e-13) worst_growth = std::max(worst_growth, next / prev - 1.0);
      }
      DenseParams off = psi;
      off.gamma = 0.0;
      const double nk = K->norm();
      prob.tau = 2.5 * 2.0 / (prob.lambda * nk * nk);
      prob.stop = {1e-6, 5000};
      diverged_all = diverged_all && solve_forward(prob, off, Activation::relu()).diverged;
    }
    const bool ok = worst_growth <= 1e-9 && diverged_all;
    return CheckResult{"contraction", worst_growth, 1e-9, ok,
                       std::string("max relative step growth; divergence above bound ") +
                           (diverged_all ? "detected" : "MISSED")};
  });
}

inline std::vector<CheckResult> run_all() {
  return {check_adjointness(), check_moreau(), check_tikhonov(), check_three_way(), check_contraction()};
}

}  // namespace deqbl::oracles
