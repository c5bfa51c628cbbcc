#pragma once

// Two-layer regularizer network
//
//   N(u) = gamma * C^T sigma(xi * A u + b)
//
// with hand-derived Jacobian products. With tied weights (C == A) and sigma
// the prox of a conjugate, N is the gradient of the Moreau-envelope
// regularizer (gamma / xi) * sum_i e(xi * A u + b)_i.
//
// The layer type is a template parameter: DenseLayer (fully connected,
// with bias) or ConvLayer (zero-padded single-input convolution bank,
// no bias).

#include "deqbl/linops.hpp"
#include "deqbl/proxmap.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace deqbl {

struct DenseLayer {
  Matrix weight;  // s x n

  DenseLayer() = default;
  explicit DenseLayer(Matrix w) : weight(std::move(w)) {}

  [[nodiscard]] Eigen::Index input_size() const { return weight.cols(); }
  [[nodiscard]] Eigen::Index output_size() const { return weight.rows(); }
  [[nodiscard]] Eigen::Index num_weights() const { return weight.size(); }

  [[nodiscard]] Vector apply(const Vector& x) const { return matvec(weight, x); }
  [[nodiscard]] Vector adjoint(const Vector& y) const { return matvec_transpose(weight, y); }

  // g += scale * d<v, W u>/dW, g laid out like weight (column-major).
  void accumulate_grad(Vector& g, const Vector& v, const Vector& u, double scale) const {
    Eigen::Map<Matrix>(g.data(), weight.rows(), weight.cols()).noalias() += scale * v * u.transpose();
  }

  Eigen::Map<Vector> weights() { return {weight.data(), weight.size()}; }
  [[nodiscard]] Eigen::Map<const Vector> weights() const { return {weight.data(), weight.size()}; }

  [[nodiscard]] SpectralNormEstimate spectral_norm(int iters = 200, double tol = 1e-10) const {
    return deqbl::spectral_norm(weight, iters, tol);
  }

  void validate() const {
    if (weight.size() == 0) throw std::invalid_argument("DenseLayer: empty weight");
    if (!weight.allFinite()) throw std::invalid_argument("DenseLayer: non-finite weight");
  }

  [[nodiscard]] bool same_shape(const DenseLayer& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols();
  }
};

struct ConvLayer {
  ConvKernelBank bank;
  int rows = 0;  // image shape the layer acts on
  int cols = 0;

  ConvLayer() = default;
  ConvLayer(ConvKernelBank k, int r, int c) : bank(std::move(k)), rows(r), cols(c) {}

  [[nodiscard]] Eigen::Index input_size() const { return static_cast<Eigen::Index>(rows) * cols; }
  [[nodiscard]] Eigen::Index output_size() const { return bank.channels * input_size(); }
  [[nodiscard]] Eigen::Index num_weights() const { return bank.weights.size(); }

  [[nodiscard]] Vector apply(const Vector& x) const { return conv2d_apply(bank, x, rows, cols); }
  [[nodiscard]] Vector adjoint(const Vector& y) const { return conv2d_adjoint(bank, y, rows, cols); }

  void accumulate_grad(Vector& g, const Vector& v, const Vector& u, double scale) const {
    conv2d_accumulate_kernel_grad(bank, v, u, rows, cols, scale, g);
  }

  Eigen::Map<Vector> weights() { return {bank.weights.data(), bank.weights.size()}; }
  [[nodiscard]] Eigen::Map<const Vector> weights() const { return {bank.weights.data(), bank.weights.size()}; }

  [[nodiscard]] SpectralNormEstimate spectral_norm(int iters = 200, double tol = 1e-10) const {
    return deqbl::spectral_norm(bank, rows, cols, iters, tol);
  }

  void validate() const {
    bank.validate();
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("ConvLayer: image shape must be positive");
  }

  [[nodiscard]] bool same_shape(const ConvLayer& o) const {
    return bank.channels == o.bank.channels && bank.kh == o.bank.kh && bank.kw == o.bank.kw && rows == o.rows &&
           cols == o.cols;
  }
};

template <class Layer>
struct RegularizerParams {
  Layer A;
  Layer C;
  Vector b;  // empty for the convolutional variant
  double gamma = 1.0;
  double xi = 1.0;
  bool tied = false;

  [[nodiscard]] Eigen::Index input_size() const { return A.input_size(); }
  [[nodiscard]] Eigen::Index hidden_size() const { return A.output_size(); }
  [[nodiscard]] bool has_bias() const { return b.size() > 0; }

  // Copies A into C; afterwards the two are bit-identical.
  void sync_tied() {
    if (tied) C = A;
  }

  // gamma = 0 is accepted and switches the network off.
  void validate() const {
    A.validate();
    C.validate();
    if (!A.same_shape(C)) throw std::invalid_argument("RegularizerParams: A and C must have the same shape");
    if (has_bias() && b.size() != A.output_size())
      throw std::invalid_argument("RegularizerParams: bias length must match hidden size");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("RegularizerParams: gamma must be >= 0");
    if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("RegularizerParams: xi must be > 0");
    if (tied && A.weights() != C.weights()) throw std::invalid_argument("RegularizerParams: tied but C != A");
  }

  // Upper bound on the Lipschitz constant of N for a 1-Lipschitz sigma.
  [[nodiscard]] double lipschitz_bound() const {
    if (gamma == 0.0) return 0.0;
    const double na = A.spectral_norm().value;
    const double nc = tied ? na : C.spectral_norm().value;
    return gamma * xi * na * nc;
  }
};

using DenseParams = RegularizerParams<DenseLayer>;
using ConvParams = RegularizerParams<ConvLayer>;

struct RegNetTape {
  Vector input;           // u
  Vector pre_activation;  // xi * A u + b
  Vector activation;      // sigma(pre_activation)
  Vector mask;            // sigma'(pre_activation)
};

struct RegNetOutput {
  Vector value;
  RegNetTape tape;
};

// Parameter-shaped gradients. In tied mode the A block already holds the
// total dA + dC and the C block is zero.
struct ParamGrads {
  Vector A;
  Vector C;
  Vector b;

  template <class Layer>
  static ParamGrads zeros_like(const RegularizerParams<Layer>& p) {
    return {Vector::Zero(p.A.num_weights()), Vector::Zero(p.C.num_weights()), Vector::Zero(p.b.size())};
  }

  ParamGrads& operator+=(const ParamGrads& o) {
    A += o.A;
    C += o.C;
    b += o.b;
    return *this;
  }
  ParamGrads& operator*=(double s) {
    A *= s;
    C *= s;
    b *= s;
    return *this;
  }
  [[nodiscard]] bool all_finite() const { return A.allFinite() && C.allFinite() && b.allFinite(); }
  [[nodiscard]] Eigen::Index size() const { return A.size() + C.size() + b.size(); }
  [[nodiscard]] Vector flat() const {
    Vector v(size());
    v << A, C, b;
    return v;
  }
};

template <class Layer>
RegNetOutput regnet_forward(const RegularizerParams<Layer>& p, const Activation& sigma, const Vector& u) {
  if (u.size() != p.input_size()) throw std::invalid_argument("regnet_forward: input length mismatch");
  RegNetOutput out;
  out.tape.input = u;
  out.tape.pre_activation = p.xi * p.A.apply(u);
  if (p.has_bias()) out.tape.pre_activation += p.b;
  out.tape.activation = apply(sigma, out.tape.pre_activation);
  out.tape.mask = apply_derivative(sigma, out.tape.pre_activation);
  out.value = p.gamma * p.C.adjoint(out.tape.activation);
  return out;
}

template <class Layer>
void check_tape(const RegularizerParams<Layer>& p, const RegNetTape& tape, const Vector& w, const char* what) {
  if (tape.input.size() != p.input_size() || tape.mask.size() != p.hidden_size() || w.size() != p.input_size())
    throw std::invalid_argument(std::string(what) + ": stale tape or vector length mismatch");
}

// (dN/du)^T w = gamma * xi * A^T (mask .* (C w))
template <class Layer>
Vector regnet_vjp_input(const RegularizerParams<Layer>& p, const Activation&, const RegNetTape& tape,
                        const Vector& w) {
  check_tape(p, tape, w, "regnet_vjp_input");
  return (p.gamma * p.xi) * p.A.adjoint(tape.mask.cwiseProduct(p.C.apply(w)));
}

// (dN/du) v = gamma * xi * C^T (mask .* (A v))
template <class Layer>
Vector regnet_jvp_input(const RegularizerParams<Layer>& p, const Activation&, const RegNetTape& tape,
                        const Vector& v) {
  check_tape(p, tape, v, "regnet_jvp_input");
  return (p.gamma * p.xi) * p.C.adjoint(tape.mask.cwiseProduct(p.A.apply(v)));
}

// (dN/dPsi)^T w for Psi = (A, C, b).
template <class Layer>
ParamGrads regnet_vjp_params(const RegularizerParams<Layer>& p, const Activation&, const RegNetTape& tape,
                             const Vector& w) {
  check_tape(p, tape, w, "regnet_vjp_params");
  ParamGrads g = ParamGrads::zeros_like(p);
  const Vector d = tape.mask.cwiseProduct(p.C.apply(w));
  p.C.accumulate_grad(g.C, tape.activation, w, p.gamma);
  p.A.accumulate_grad(g.A, d, tape.input, p.gamma * p.xi);
  if (p.has_bias()) g.b = p.gamma * d;
  if (p.tied) {
    g.A += g.C;
    g.C.setZero();
  }
  return g;
}

// Value of the regularizer whose gradient N is in tied mode:
// (gamma / xi) * sum_i e(xi * A u + b)_i with e the Moreau envelope.
template <class Layer>
double regularizer_value(const RegularizerParams<Layer>& p, const Activation& sigma, const Vector& u) {
  Vector w = p.xi * p.A.apply(u);
  if (p.has_bias()) w += p.b;
  return p.gamma / p.xi * envelope(sigma, w);
}

// Dense init: A entries iid uniform on [-1/sqrt(n), 1/sqrt(n)], b = 0, C = A.
inline DenseParams init_dense(Eigen::Index n, Eigen::Index s, std::uint64_t seed, double gamma, bool tied,
                              double xi = 1.0) {
  if (n <= 0 || s <= 0) throw std::invalid_argument("init_dense: sizes must be positive");
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(n));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix a(s, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < s; ++i) a(i, j) = dist(rng);
  DenseParams p{DenseLayer(a), DenseLayer(a), Vector::Zero(s), gamma, xi, tied};
  p.validate();
  return p;
}

enum class ConvInit { tv_like, random };

// Finite-difference stencils cycled over channels: forward differences in
// both directions, then second differences, then mixed. Placed at the
// kernel center, so any odd kernel size >= 3 works. Conv is true
// convolution, so tap (i, j) reads U[h - i, k - j].
inline ConvKernelBank tv_like_kernels(int channels, int ksize) {
  if (ksize < 3) throw std::invalid_argument("tv_like_kernels: kernel size must be >= 3");
  ConvKernelBank bank(channels, ksize, ksize);
  for (int c = 0; c < channels; ++c) {
    switch (c % 6) {
      case 0:  // U[h, k+1] - U[h, k]
        bank.at(c, 0, -1) = 1.0;
        bank.at(c, 0, 0) = -1.0;
        break;
      case 1:  // U[h+1, k] - U[h, k]
        bank.at(c, -1, 0) = 1.0;
        bank.at(c, 0, 0) = -1.0;
        break;
      case 2:
        bank.at(c, 0, -1) = 1.0;
        bank.at(c, 0, 0) = -2.0;
        bank.at(c, 0, 1) = 1.0;
        break;
      case 3:
        bank.at(c, -1, 0) = 1.0;
        bank.at(c, 0, 0) = -2.0;
        bank.at(c, 1, 0) = 1.0;
        break;
      case 4:
        bank.at(c, -1, -1) = 1.0;
        bank.at(c, 0, 0) = -1.0;
        break;
      default:
        bank.at(c, -1, 1) = 1.0;
        bank.at(c, 0, 0) = -1.0;
        break;
    }
  }
  return bank;
}

inline ConvParams init_conv(int rows, int cols, int channels, int ksize, ConvInit init, std::uint64_t seed,
                            double gamma, bool tied, double xi = 1.0) {
  ConvKernelBank bank = init == ConvInit::tv_like ? tv_like_kernels(channels, ksize)
                                                  : ConvKernelBank(channels, ksize, ksize);
  if (init == ConvInit::random) {
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(bank.taps()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < bank.weights.size(); ++i) bank.weights[i] = dist(rng);
  }
  ConvLayer layer(bank, rows, cols);
  ConvParams p{layer, layer, Vector(), gamma, xi, tied};
  p.validate();
  return p;
}

// Divides A and C by their power-iteration norms (C mirrors A when tied).
template <class Layer>
void spectral_normalize(RegularizerParams<Layer>& p, int iters = 200, double tol = 1e-10) {
  const double na = p.A.spectral_norm(iters, tol).value;
  if (na > 0.0) p.A.weights() /= na;
  if (p.tied) {
    p.sync_tied();
    return;
  }
  const double nc = p.C.spectral_norm(iters, tol).value;
  if (nc > 0.0) p.C.weights() /= nc;
}

}  // namespace deqbl
