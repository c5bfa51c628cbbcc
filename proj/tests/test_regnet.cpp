#include "deqbl/regnet.hpp"
#include "deqbl/verify.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace deqbl;

namespace {

DenseParams identity_params(Eigen::Index n) {
  return {DenseLayer(Matrix::Identity(n, n)), DenseLayer(Matrix::Identity(n, n)), Vector::Zero(n), 1.0, 1.0, true};
}

DenseParams random_dense(std::mt19937_64& rng, Eigen::Index s, Eigen::Index n, bool tied, double gamma = 0.7,
                         double xi = 1.0) {
  const Matrix a = testutil::random_matrix(rng, s, n);
  const Matrix c = tied ? a : testutil::random_matrix(rng, s, n);
  return {DenseLayer(a), DenseLayer(c), testutil::random_vector(rng, s, -0.3, 0.3), gamma, xi, tied};
}

ConvParams random_conv(std::mt19937_64& rng, int rows, int cols, bool tied, double gamma = 0.7, double xi = 1.3) {
  const ConvKernelBank a = testutil::random_bank(rng, 2, 3, 3);
  const ConvKernelBank c = tied ? a : testutil::random_bank(rng, 2, 3, 3);
  return {ConvLayer(a, rows, cols), ConvLayer(c, rows, cols), Vector(), gamma, xi, tied};
}

const std::vector<Activation> kSmoothish{Activation::identity(), Activation::relu(), Activation::softshrink(0.3),
                                         Activation::tanh()};

// <N(u), w> as a function of a flat parameter entry, for finite differences.
template <class Layer>
double probe(RegularizerParams<Layer> p, const Activation& s, const Vector& u, const Vector& w, int block,
             Eigen::Index i, double value) {
  if (block == 0) p.A.weights()[i] = value;
  if (block == 1) p.C.weights()[i] = value;
  if (block == 2) p.b[i] = value;
  if (block == 0) p.sync_tied();
  return regnet_forward(p, s, u).value.dot(w);
}

template <class Layer>
void check_param_grads(const RegularizerParams<Layer>& p, const Activation& s, const Vector& u, const Vector& w,
                       double tol) {
  const RegNetOutput out = regnet_forward(p, s, u);
  const ParamGrads g = regnet_vjp_params(p, s, out.tape, w);
  for (Eigen::Index i = 0; i < g.A.size(); ++i) {
    const double x = p.A.weights()[i];
    const double fd = verify::fd_scalar([&](double t) { return probe(p, s, u, w, 0, i, t); }, x);
    EXPECT_NEAR(g.A[i], fd, tol * (1 + std::abs(fd))) << "A[" << i << "]";
  }
  if (!p.tied)
    for (Eigen::Index i = 0; i < g.C.size(); ++i) {
      const double x = p.C.weights()[i];
      const double fd = verify::fd_scalar([&](double t) { return probe(p, s, u, w, 1, i, t); }, x);
      EXPECT_NEAR(g.C[i], fd, tol * (1 + std::abs(fd))) << "C[" << i << "]";
    }
  for (Eigen::Index i = 0; i < g.b.size(); ++i) {
    const double fd = verify::fd_scalar([&](double t) { return probe(p, s, u, w, 2, i, t); }, p.b[i]);
    EXPECT_NEAR(g.b[i], fd, tol * (1 + std::abs(fd))) << "b[" << i << "]";
  }
}

template <class Layer>
void check_input_vjp(const RegularizerParams<Layer>& p, const Activation& s, const Vector& u, std::mt19937_64& rng) {
  const RegNetOutput out = regnet_forward(p, s, u);
  const Matrix jac = verify::fd_jacobian([&](const Vector& x) { return regnet_forward(p, s, x).value; }, u);
  const Vector w = testutil::random_vector(rng, u.size());
  const Vector v = testutil::random_vector(rng, u.size());
  const Vector vjp = regnet_vjp_input(p, s, out.tape, w);
  const Vector jvp = regnet_jvp_input(p, s, out.tape, v);
  EXPECT_LE(verify::relative_error(vjp, jac.transpose() * w), 1e-5) << to_string(s.kind);
  EXPECT_LE(verify::relative_error(jvp, jac * v), 1e-5) << to_string(s.kind);
  // exact transpose pair
  EXPECT_NEAR(vjp.dot(v), w.dot(jvp), 1e-10 * (1 + std::abs(vjp.dot(v))));
}

}  // namespace

TEST(RegnetForward, IdentityExamples) {
  Vector u(2);
  u << 1, -2;
  EXPECT_EQ(regnet_forward(identity_params(2), Activation::identity(), u).value, u);
  Vector expect(2);
  expect << 1, 0;
  EXPECT_EQ(regnet_forward(identity_params(2), Activation::relu(), u).value, expect);
}

TEST(RegnetForward, MatchesScalarLoop) {
  std::mt19937_64 rng(20);
  const DenseParams p = random_dense(rng, 3, 3, false, 0.8, 1.5);
  const Vector u = testutil::random_vector(rng, 3);
  const Vector got = regnet_forward(p, Activation::softshrink(0.2), u).value;
  for (int j = 0; j < 3; ++j) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
      double pre = p.b[i];
      for (int k = 0; k < 3; ++k) pre += p.xi * p.A.weight(i, k) * u[k];
      s += p.C.weight(i, j) * apply_scalar(Activation::softshrink(0.2), pre);
    }
    EXPECT_NEAR(got[j], p.gamma * s, 1e-14);
  }
}

TEST(RegnetForward, ShapeMismatchThrows) {
  EXPECT_THROW(regnet_forward(identity_params(3), Activation::relu(), Vector::Zero(2)), std::invalid_argument);
  const RegNetOutput out = regnet_forward(identity_params(3), Activation::relu(), Vector::Zero(3));
  EXPECT_THROW(regnet_vjp_input(identity_params(4), Activation::relu(), out.tape, Vector::Zero(4)),
               std::invalid_argument);
}

TEST(RegnetVjp, IdentityPassesThrough) {
  std::mt19937_64 rng(21);
  const Vector u = testutil::random_vector(rng, 4);
  const Vector w = testutil::random_vector(rng, 4);
  const auto out = regnet_forward(identity_params(4), Activation::identity(), u);
  EXPECT_EQ(regnet_vjp_input(identity_params(4), Activation::identity(), out.tape, w), w);
}

TEST(RegnetVjp, TiedIdentityJacobianIsSymmetric) {
  std::mt19937_64 rng(22);
  const DenseParams p = random_dense(rng, 4, 4, true);
  const auto tape = regnet_forward(p, Activation::identity(), testutil::random_vector(rng, 4)).tape;
  const Matrix jt = verify::assemble(4, [&](const Vector& w) { return regnet_vjp_input(p, Activation::identity(), tape, w); });
  const Matrix j = verify::assemble(4, [&](const Vector& v) { return regnet_jvp_input(p, Activation::identity(), tape, v); });
  EXPECT_LT((j - jt).norm(), 1e-14);
  EXPECT_LT((j - p.gamma * p.A.weight.transpose() * p.A.weight).norm(), 1e-14);
}

TEST(RegnetVjp, InputMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (const auto& s : kSmoothish) {
    check_input_vjp(random_dense(rng, 5, 4, false), s, testutil::random_vector(rng, 4), rng);
    check_input_vjp(random_conv(rng, 4, 5, false), s, testutil::random_vector(rng, 20), rng);
  }
}

TEST(RegnetParams, ZeroCotangentGivesZero) {
  std::mt19937_64 rng(24);
  const DenseParams p = random_dense(rng, 3, 3, false);
  const auto tape = regnet_forward(p, Activation::relu(), testutil::random_vector(rng, 3)).tape;
  EXPECT_EQ(regnet_vjp_params(p, Activation::relu(), tape, Vector::Zero(3)).flat(), Vector::Zero(21));
}

TEST(RegnetParams, MatchesFiniteDifferences) {
  std::mt19937_64 rng(25);
  for (const auto& s : kSmoothish) {
    for (bool tied : {false, true}) {
      check_param_grads(random_dense(rng, 3, 3, tied), s, testutil::random_vector(rng, 3),
                        testutil::random_vector(rng, 3), 1e-5);
      check_param_grads(random_dense(rng, 5, 4, tied), s, testutil::random_vector(rng, 4),
                        testutil::random_vector(rng, 4), 1e-5);
      check_param_grads(random_conv(rng, 4, 4, tied), s, testutil::random_vector(rng, 16),
                        testutil::random_vector(rng, 16), 1e-5);
    }
  }
}

TEST(RegnetParams, TiedGradientIsSumOfBlocks) {
  std::mt19937_64 rng(26);
  DenseParams untied = random_dense(rng, 4, 4, true);
  untied.tied = false;
  DenseParams tied = untied;
  tied.tied = true;
  const Vector u = testutil::random_vector(rng, 4);
  const Vector w = testutil::random_vector(rng, 4);
  const auto gu = regnet_vjp_params(untied, Activation::tanh(), regnet_forward(untied, Activation::tanh(), u).tape, w);
  const auto gt = regnet_vjp_params(tied, Activation::tanh(), regnet_forward(tied, Activation::tanh(), u).tape, w);
  EXPECT_LT((gt.A - (gu.A + gu.C)).norm(), 1e-14);
  EXPECT_EQ(gt.C, Vector::Zero(16));
  EXPECT_EQ(gt.b, gu.b);
}

TEST(RegnetProperties, LipschitzBound) {
  std::mt19937_64 rng(27);
  for (const auto& s : kSmoothish) {
    const DenseParams p = random_dense(rng, 6, 5, false, 0.9, 1.7);
    const double L = p.lipschitz_bound();
    for (int k = 0; k < 50; ++k) {
      const Vector u = testutil::random_vector(rng, 5, -3, 3);
      const Vector v = testutil::random_vector(rng, 5, -3, 3);
      const double lhs = (regnet_forward(p, s, u).value - regnet_forward(p, s, v).value).norm();
      EXPECT_LE(lhs, L * (u - v).norm() * (1 + 1e-9));
    }
  }
}

// Tied N is a gradient field: line integrals along two different polylines
// between the same endpoints agree, and equal the regularizer difference.
TEST(RegnetProperties, TiedFieldIsConservative) {
  std::mt19937_64 rng(28);
  auto line_integral = [](const auto& p, const Activation& s, const std::vector<Vector>& pts) {
    double total = 0.0;
    const int m = 4000;  // composite Simpson, even
    for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
      const Vector d = pts[seg + 1] - pts[seg];
      double acc = 0.0;
      for (int k = 0; k <= m; ++k) {
        const double t = static_cast<double>(k) / m;
        const double wgt = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        acc += wgt * regnet_forward(p, s, Vector(pts[seg] + t * d)).value.dot(d);
      }
      total += acc / (3.0 * m);
    }
    return total;
  };
  for (const auto& s : {Activation::identity(), Activation::relu(), Activation::softshrink(0.3), Activation::tanh(),
                        Activation::clamp(0.4)}) {
    const DenseParams p = random_dense(rng, 5, 4, true, 0.8, 1.2);
    const Vector u0 = testutil::random_vector(rng, 4, -2, 2);
    const Vector u1 = testutil::random_vector(rng, 4, -2, 2);
    const Vector a = testutil::random_vector(rng, 4, -2, 2);
    const Vector b1 = testutil::random_vector(rng, 4, -2, 2);
    const Vector b2 = testutil::random_vector(rng, 4, -2, 2);
    const double i1 = line_integral(p, s, {u0, a, u1});
    const double i2 = line_integral(p, s, {u0, b1, b2, u1});
    EXPECT_NEAR(i1, i2, 1e-4) << to_string(s.kind);
    EXPECT_NEAR(i1, regularizer_value(p, s, u1) - regularizer_value(p, s, u0), 1e-4) << to_string(s.kind);
  }
}

TEST(RegnetProperties, ConvTiedFieldIsGradientOfRegularizer) {
  std::mt19937_64 rng(29);
  const ConvParams p = random_conv(rng, 4, 4, true);
  const Vector u = testutil::random_vector(rng, 16);
  const Activation s = Activation::tanh();
  const Matrix grad = verify::fd_jacobian(
      [&](const Vector& x) {
        Vector r(1);
        r[0] = regularizer_value(p, s, x);
        return r;
      },
      u);
  EXPECT_LE(verify::relative_error(grad.row(0).transpose(), regnet_forward(p, s, u).value), 1e-6);
}

TEST(RegularizerParams, Validation) {
  std::mt19937_64 rng(30);
  DenseParams p = random_dense(rng, 3, 3, true);
  EXPECT_NO_THROW(p.validate());
  p.C.weight(0, 0) += 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.sync_tied();
  EXPECT_NO_THROW(p.validate());
  p.gamma = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.gamma = 0.0;
  EXPECT_NO_THROW(p.validate());
  p.xi = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Init, DenseRangeAndTying) {
  const DenseParams p = init_dense(16, 10, 7, 0.5, false);
  EXPECT_EQ(p.A.weight.rows(), 10);
  EXPECT_LE(p.A.weight.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_EQ(p.A.weight, p.C.weight);
  EXPECT_EQ(p.b, Vector::Zero(10));
  EXPECT_EQ(init_dense(16, 10, 7, 0.5, false).A.weight, p.A.weight);
  EXPECT_NE(init_dense(16, 10, 8, 0.5, false).A.weight, p.A.weight);
}

TEST(Init, TvKernelsAnnihilateConstants) {
  const ConvKernelBank bank = tv_like_kernels(6, 3);
  for (int c = 0; c < 6; ++c) EXPECT_NEAR(bank.kernel(c).sum(), 0.0, 1e-15);
  const ConvParams p = init_conv(8, 8, 2, 11, ConvInit::tv_like, 0, 1.0, true, 100.0);
  EXPECT_EQ(p.A.bank.kh, 11);
  EXPECT_FALSE(p.has_bias());
}

TEST(SpectralNormalize, UnitNormAfterwards) {
  std::mt19937_64 rng(31);
  DenseParams d = random_dense(rng, 6, 5, false);
  spectral_normalize(d);
  EXPECT_NEAR(d.A.spectral_norm().value, 1.0, 1e-2);
  EXPECT_NEAR(d.C.spectral_norm().value, 1.0, 1e-2);
  ConvParams c = random_conv(rng, 8, 8, true);
  spectral_normalize(c);
  EXPECT_NEAR(c.A.spectral_norm().value, 1.0, 1e-2);
  EXPECT_EQ(c.A.bank.weights, c.C.bank.weights);
}
