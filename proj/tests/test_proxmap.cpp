#include "deqbl/proxmap.hpp"
#include "deqbl/verify.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace deqbl;

namespace {

Vector vec3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

// Distance to the nearest kink of m.
double kink_distance(const ProxMap& m, double x) {
  switch (m.kind) {
    case MapKind::relu: return std::abs(x);
    case MapKind::softshrink:
    case MapKind::clamp: return std::min(std::abs(x - m.eps), std::abs(x + m.eps));
    default: return 1e9;
  }
}

const std::vector<ProxMap> kAll{ProxMap::identity(), ProxMap::relu(), ProxMap::softshrink(0.5), ProxMap::clamp(0.5),
                                ProxMap::tanh()};

}  // namespace

TEST(Apply, Relu) { EXPECT_EQ(apply(ProxMap::relu(), vec3(-1, 0, 2)), vec3(0, 0, 2)); }

TEST(Apply, Softshrink) {
  const Vector out = apply(ProxMap::softshrink(0.5), vec3(-1, 0.3, 0.9));
  EXPECT_NEAR(out[0], -0.5, 1e-15);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_NEAR(out[2], 0.4, 1e-15);
}

TEST(Apply, Clamp) { EXPECT_EQ(apply(ProxMap::clamp(0.5), vec3(-1, 0.3, 0.9)), vec3(-0.5, 0.3, 0.5)); }

TEST(Apply, IdentityAndTanh) {
  const Vector x = vec3(-2, 0, 0.7);
  EXPECT_EQ(apply(ProxMap::identity(), x), x);
  EXPECT_DOUBLE_EQ(apply(ProxMap::tanh(), x)[2], std::tanh(0.7));
}

TEST(Derivative, SpecialPoints) {
  EXPECT_EQ(apply_derivative(ProxMap::tanh(), Vector::Zero(1))[0], 1.0);
  Vector x(2);
  x << -1, 2;
  Vector expect(2);
  expect << 0, 1;
  EXPECT_EQ(apply_derivative(ProxMap::relu(), x), expect);
}

TEST(Derivative, KinksGetZero) {
  EXPECT_EQ(derivative_scalar(ProxMap::relu(), 0.0), 0.0);
  EXPECT_EQ(derivative_scalar(ProxMap::softshrink(0.5), 0.5), 0.0);
  EXPECT_EQ(derivative_scalar(ProxMap::softshrink(0.5), -0.5), 0.0);
  EXPECT_EQ(derivative_scalar(ProxMap::clamp(0.5), 0.5), 0.0);
}

TEST(Derivative, MatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-3, 3);
  for (const auto& m : kAll)
    for (int k = 0; k < 500; ++k) {
      const double x = d(rng);
      if (kink_distance(m, x) <= 1e-3) continue;
      const double fd = verify::fd_scalar([&](double t) { return apply_scalar(m, t); }, x, 1e-7);
      EXPECT_NEAR(derivative_scalar(m, x), fd, 1e-6) << to_string(m.kind) << " at " << x;
    }
}

TEST(MoreauPartner, Pairs) {
  EXPECT_EQ(moreau_partner(ProxMap::softshrink(0.5)), ProxMap::clamp(0.5));
  EXPECT_EQ(moreau_partner(ProxMap::clamp(0.5)), ProxMap::softshrink(0.5));
  EXPECT_EQ(moreau_partner(ProxMap::identity()).kind, MapKind::zero);
  EXPECT_EQ(moreau_partner(ProxMap::relu()).kind, MapKind::neg_part);
  EXPECT_THROW(moreau_partner(ProxMap::tanh()), std::invalid_argument);
  std::mt19937_64 rng(12);
  const Vector w = testutil::random_vector(rng, 50, -10, 10);
  EXPECT_EQ(apply(moreau_partner(ProxMap::identity()), w), Vector::Zero(50));
}

TEST(MoreauPartner, DecompositionIsExact) {
  std::mt19937_64 rng(13);
  for (const auto& m : {ProxMap::identity(), ProxMap::relu(), ProxMap::softshrink(0.5), ProxMap::clamp(1.3)}) {
    const Vector w = testutil::random_vector(rng, 1000, -10, 10);
    const Vector sum = apply(m, w) + apply(moreau_partner(m), w);
    EXPECT_LE((sum - w).cwiseAbs().maxCoeff(), 1e-12) << to_string(m.kind);
  }
}

TEST(Properties, Nonexpansive) {
  std::mt19937_64 rng(14);
  for (const auto& m : kAll)
    for (int k = 0; k < 100; ++k) {
      const Vector x = testutil::random_vector(rng, 10, -5, 5);
      const Vector y = testutil::random_vector(rng, 10, -5, 5);
      EXPECT_LE((apply(m, x) - apply(m, y)).norm(), (x - y).norm() * (1 + 1e-15));
    }
}

TEST(Properties, OddSymmetry) {
  std::mt19937_64 rng(15);
  const Vector x = testutil::random_vector(rng, 200, -3, 3);
  for (const auto& m : {ProxMap::softshrink(0.4), ProxMap::clamp(0.4)}) EXPECT_EQ(apply(m, -x), -apply(m, x));
}

TEST(Envelope, DerivativeIsTheMap) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> d(-3, 3);
  for (const auto& m : kAll)
    for (int k = 0; k < 200; ++k) {
      const double x = d(rng);
      const double fd = verify::fd_scalar([&](double t) { return envelope_scalar(m, t); }, x, 1e-6);
      EXPECT_NEAR(fd, apply_scalar(m, x), 1e-6) << to_string(m.kind) << " at " << x;
    }
}

TEST(ProxMap, Validation) {
  EXPECT_THROW(ProxMap::softshrink(0.0), std::invalid_argument);
  EXPECT_THROW(ProxMap::clamp(-1.0), std::invalid_argument);
  EXPECT_EQ(map_kind_from_string("softshrink"), MapKind::softshrink);
  EXPECT_THROW(map_kind_from_string("gelu"), std::invalid_argument);
}
