#pragma once

// Elementwise activations realized as proximal maps of convex conjugates.
//
//   identity   = prox of R* for R = indicator of {0}
//   relu       = prox of R* for R = indicator of (-inf, 0]
//   softshrink = prox of R* for R = indicator of the box [-eps, eps]
//   clamp      = prox of R* for R = eps * ||.||_1
//   tanh       = prox of R* for the log-barrier-like R* with tanh prox
//
// zero and neg_part are the Moreau partners of identity and relu; they are
// only reachable through moreau_partner().

#include "deqbl/linops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace deqbl {

enum class MapKind { identity, relu, softshrink, clamp, tanh, zero, neg_part };

struct ProxMap {
  MapKind kind = MapKind::identity;
  double eps = 0.0;  // threshold for softshrink and clamp

  static ProxMap identity() { return {MapKind::identity, 0.0}; }
  static ProxMap relu() { return {MapKind::relu, 0.0}; }
  static ProxMap softshrink(double eps) { return checked({MapKind::softshrink, eps}); }
  static ProxMap clamp(double eps) { return checked({MapKind::clamp, eps}); }
  static ProxMap tanh() { return {MapKind::tanh, 0.0}; }

  [[nodiscard]] bool has_threshold() const { return kind == MapKind::softshrink || kind == MapKind::clamp; }

  void validate() const {
    if (has_threshold() && !(eps > 0.0)) throw std::invalid_argument("ProxMap: threshold must be positive");
  }

  friend bool operator==(const ProxMap&, const ProxMap&) = default;

 private:
  static ProxMap checked(ProxMap m) {
    m.validate();
    return m;
  }
};

using Activation = ProxMap;
using ClampMap = ProxMap;

inline double apply_scalar(const ProxMap& m, double x) {
  switch (m.kind) {
    case MapKind::identity: return x;
    case MapKind::zero: return 0.0;
    case MapKind::relu: return x >= 0.0 ? x : 0.0;
    case MapKind::neg_part: return x < 0.0 ? x : 0.0;
    case MapKind::softshrink:
      if (x > m.eps) return x - m.eps;
      if (x < -m.eps) return x + m.eps;
      return 0.0;
    case MapKind::clamp: return std::clamp(x, -m.eps, m.eps);
    case MapKind::tanh: return std::tanh(x);
  }
  return x;
}

// a.e. derivative; kinks (0 for relu, +-eps for softshrink/clamp) get 0.
inline double derivative_scalar(const ProxMap& m, double x) {
  switch (m.kind) {
    case MapKind::identity: return 1.0;
    case MapKind::zero: return 0.0;
    case MapKind::relu: return x > 0.0 ? 1.0 : 0.0;
    case MapKind::neg_part: return x < 0.0 ? 1.0 : 0.0;
    case MapKind::softshrink: return std::abs(x) > m.eps ? 1.0 : 0.0;
    case MapKind::clamp: return std::abs(x) < m.eps ? 1.0 : 0.0;
    case MapKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

inline Vector apply(const ProxMap& m, const Vector& x) {
  m.validate();
  return x.unaryExpr([&](double v) { return apply_scalar(m, v); });
}

inline Vector apply_derivative(const ProxMap& m, const Vector& x) {
  m.validate();
  return x.unaryExpr([&](double v) { return derivative_scalar(m, v); });
}

// prox_R paired with prox_{R*} = m through w = prox_R(w) + prox_{R*}(w).
inline ProxMap moreau_partner(const ProxMap& m) {
  m.validate();
  switch (m.kind) {
    case MapKind::identity: return {MapKind::zero, 0.0};
    case MapKind::zero: return ProxMap::identity();
    case MapKind::relu: return {MapKind::neg_part, 0.0};
    case MapKind::neg_part: return ProxMap::relu();
    case MapKind::softshrink: return ProxMap::clamp(m.eps);
    case MapKind::clamp: return ProxMap::softshrink(m.eps);
    case MapKind::tanh: break;
  }
  throw std::invalid_argument("moreau_partner: tanh has no closed-form partner");
}

// Scalar Moreau envelope e(w) = inf_v 1/2 (v - w)^2 + R(v), whose derivative
// is m(w). Closed form through the partner prox p = prox_R(w):
// e(w) = 1/2 (w - p)^2 + R(p). For tanh, e(w) = log cosh(w).
inline double envelope_scalar(const ProxMap& m, double w) {
  switch (m.kind) {
    case MapKind::identity:
    case MapKind::relu:
    case MapKind::softshrink: {
      // R is an indicator, R(p) = 0.
      const double p = apply_scalar(moreau_partner(m), w);
      return 0.5 * (w - p) * (w - p);
    }
    case MapKind::clamp: {
      const double p = apply_scalar(moreau_partner(m), w);
      return 0.5 * (w - p) * (w - p) + m.eps * std::abs(p);
    }
    case MapKind::zero: return 0.0;
    case MapKind::neg_part: return 0.5 * (w < 0.0 ? w * w : 0.0);
    case MapKind::tanh: {
      const double a = std::abs(w);
      return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
    }
  }
  return 0.0;
}

inline double envelope(const ProxMap& m, const Vector& w) {
  m.validate();
  double s = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) s += envelope_scalar(m, w[i]);
  return s;
}

inline std::string_view to_string(MapKind k) {
  switch (k) {
    case MapKind::identity: return "identity";
    case MapKind::relu: return "relu";
    case MapKind::softshrink: return "softshrink";
    case MapKind::clamp: return "clamp";
    case MapKind::tanh: return "tanh";
    case MapKind::zero: return "zero";
    case MapKind::neg_part: return "neg_part";
  }
  return "?";
}

inline MapKind map_kind_from_string(std::string_view s) {
  for (MapKind k : {MapKind::identity, MapKind::relu, MapKind::softshrink, MapKind::clamp, MapKind::tanh,
                    MapKind::zero, MapKind::neg_part})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

}  // namespace deqbl
