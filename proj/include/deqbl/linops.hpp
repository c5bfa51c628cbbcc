#pragma once

// Dense and convolutional linear operators with exact adjoints, plus
// power-iteration spectral norm estimation.
//
// Images are stored column-stacked: pixel (r, c) of an rows x cols image
// lives at index c * rows + r, which is Eigen's default column-major order.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace deqbl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using DenseMatrix = Matrix;

struct ImageSignal {
  Vector data;
  int rows = 0;
  int cols = 0;

  ImageSignal() = default;
  ImageSignal(int r, int c) : data(Vector::Zero(static_cast<Eigen::Index>(r) * c)), rows(r), cols(c) {
    if (r <= 0 || c <= 0) throw std::invalid_argument("ImageSignal: shape must be positive");
  }
  ImageSignal(Vector d, int r, int c) : data(std::move(d)), rows(r), cols(c) {
    if (r <= 0 || c <= 0) throw std::invalid_argument("ImageSignal: shape must be positive");
    if (data.size() != static_cast<Eigen::Index>(r) * c)
      throw std::invalid_argument("ImageSignal: data length does not match rows*cols");
  }

  [[nodiscard]] Eigen::Index size() const { return data.size(); }
  [[nodiscard]] double at(int r, int c) const { return data[static_cast<Eigen::Index>(c) * rows + r]; }
  double& at(int r, int c) { return data[static_cast<Eigen::Index>(c) * rows + r]; }
};

inline Vector matvec(const DenseMatrix& m, const Vector& x) {
  if (m.cols() != x.size())
    throw std::invalid_argument("matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
                                std::to_string(x.size()) + " entries");
  return m * x;
}

inline Vector matvec_transpose(const DenseMatrix& m, const Vector& y) {
  if (m.rows() != y.size()) throw std::invalid_argument("matvec_transpose: dimension mismatch");
  return m.transpose() * y;
}

// A stack of single-input-channel 2-D kernels. Kernel c is stored
// column-major as a kh x kw block starting at c * kh * kw. Tap (i, j) with
// i in [-kh/2, kh/2] is stored at row i + kh/2.
struct ConvKernelBank {
  int channels = 0;
  int kh = 0;
  int kw = 0;
  Vector weights;

  ConvKernelBank() = default;
  ConvKernelBank(int c, int h, int w) : channels(c), kh(h), kw(w), weights(Vector::Zero(static_cast<Eigen::Index>(c) * h * w)) {
    validate();
  }

  static ConvKernelBank single(const Matrix& kernel) {
    ConvKernelBank bank(1, static_cast<int>(kernel.rows()), static_cast<int>(kernel.cols()));
    bank.weights = Eigen::Map<const Vector>(kernel.data(), kernel.size());
    bank.validate();
    return bank;
  }

  void validate() const {
    if (channels <= 0) throw std::invalid_argument("ConvKernelBank: need at least one channel");
    if (kh <= 0 || kw <= 0 || kh % 2 == 0 || kw % 2 == 0)
      throw std::invalid_argument("ConvKernelBank: kernel sizes must be odd and positive");
    if (weights.size() != static_cast<Eigen::Index>(channels) * kh * kw)
      throw std::invalid_argument("ConvKernelBank: weight count does not match shape");
    if (!weights.allFinite()) throw std::invalid_argument("ConvKernelBank: non-finite kernel entry");
  }

  [[nodiscard]] Eigen::Index taps() const { return static_cast<Eigen::Index>(kh) * kw; }
  // Offsets relative to the kernel center.
  [[nodiscard]] double at(int c, int di, int dj) const {
    return weights[c * taps() + static_cast<Eigen::Index>(dj + kw / 2) * kh + (di + kh / 2)];
  }
  double& at(int c, int di, int dj) { return weights[c * taps() + static_cast<Eigen::Index>(dj + kw / 2) * kh + (di + kh / 2)]; }

  [[nodiscard]] Matrix kernel(int c) const {
    return Eigen::Map<const Matrix>(weights.data() + c * taps(), kh, kw);
  }
};

namespace detail {

inline void check_image(const Vector& u, int rows, int cols, const char* what) {
  if (rows <= 0 || cols <= 0 || u.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument(std::string(what) + ": image shape mismatch");
}

}  // namespace detail

// Zero-padded true convolution per output channel:
//   out_c[h, k] = sum_{i, j} K_c[i, j] * U[h - i, k - j]
// Output is channel-major, each channel column-stacked, same spatial size.
inline Vector conv2d_apply(const ConvKernelBank& bank, const Vector& u, int rows, int cols) {
  detail::check_image(u, rows, cols, "conv2d_apply");
  const Eigen::Index n = u.size();
  Vector out = Vector::Zero(bank.channels * n);
  const int a = bank.kh / 2;
  const int b = bank.kw / 2;
  for (int c = 0; c < bank.channels; ++c) {
    double* oc = out.data() + c * n;
    for (int j = -b; j <= b; ++j) {
      for (int i = -a; i <= a; ++i) {
        const double w = bank.at(c, i, j);
        if (w == 0.0) continue;
        // out[h, k] += w * U[h - i, k - j] over the valid range.
        const int h0 = std::max(0, i), h1 = std::min(rows, rows + i);
        const int k0 = std::max(0, j), k1 = std::min(cols, cols + j);
        for (int k = k0; k < k1; ++k) {
          const double* src = u.data() + static_cast<Eigen::Index>(k - j) * rows - i;
          double* dst = oc + static_cast<Eigen::Index>(k) * rows;
          for (int h = h0; h < h1; ++h) dst[h] += w * src[h];
        }
      }
    }
  }
  return out;
}

inline ImageSignal conv2d_apply(const ConvKernelBank& bank, const ImageSignal& u) {
  if (bank.channels != 1) throw std::invalid_argument("conv2d_apply: ImageSignal overload needs one channel");
  return {conv2d_apply(bank, u.data, u.rows, u.cols), u.rows, u.cols};
}

// Exact adjoint of conv2d_apply: flipped-kernel correlation summed over channels.
inline Vector conv2d_adjoint(const ConvKernelBank& bank, const Vector& v, int rows, int cols) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
  if (rows <= 0 || cols <= 0 || v.size() != bank.channels * n)
    throw std::invalid_argument("conv2d_adjoint: field shape mismatch");
  Vector out = Vector::Zero(n);
  const int a = bank.kh / 2;
  const int b = bank.kw / 2;
  for (int c = 0; c < bank.channels; ++c) {
    const double* vc = v.data() + c * n;
    for (int j = -b; j <= b; ++j) {
      for (int i = -a; i <= a; ++i) {
        const double w = bank.at(c, i, j);
        if (w == 0.0) continue;
        // out[p, q] += w * V[p + i, q + j]
        const int p0 = std::max(0, -i), p1 = std::min(rows, rows - i);
        const int q0 = std::max(0, -j), q1 = std::min(cols, cols - j);
        for (int q = q0; q < q1; ++q) {
          const double* src = vc + static_cast<Eigen::Index>(q + j) * rows + i;
          double* dst = out.data() + static_cast<Eigen::Index>(q) * rows;
          for (int p = p0; p < p1; ++p) dst[p] += w * src[p];
        }
      }
    }
  }
  return out;
}

// Gradient of <v, conv2d_apply(bank, u)> with respect to the kernel
// weights, scaled and added into grad (same layout as bank.weights).
inline void conv2d_accumulate_kernel_grad(const ConvKernelBank& bank, const Vector& v, const Vector& u, int rows,
                                          int cols, double scale, Vector& grad) {
  detail::check_image(u, rows, cols, "conv2d_accumulate_kernel_grad");
  const Eigen::Index n = u.size();
  if (v.size() != bank.channels * n || grad.size() != bank.weights.size())
    throw std::invalid_argument("conv2d_accumulate_kernel_grad: shape mismatch");
  const int a = bank.kh / 2;
  const int b = bank.kw / 2;
  for (int c = 0; c < bank.channels; ++c) {
    const double* vc = v.data() + c * n;
    for (int j = -b; j <= b; ++j) {
      for (int i = -a; i <= a; ++i) {
        const int h0 = std::max(0, i), h1 = std::min(rows, rows + i);
        const int k0 = std::max(0, j), k1 = std::min(cols, cols + j);
        double acc = 0.0;
        for (int k = k0; k < k1; ++k) {
          const double* src = u.data() + static_cast<Eigen::Index>(k - j) * rows - i;
          const double* dv = vc + static_cast<Eigen::Index>(k) * rows;
          for (int h = h0; h < h1; ++h) acc += dv[h] * src[h];
        }
        grad[c * bank.taps() + static_cast<Eigen::Index>(j + b) * bank.kh + (i + a)] += scale * acc;
      }
    }
  }
}

struct SpectralNormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  bool restarted = false;  // all-ones start was rejected in favour of a seeded random start
};

// Power iteration on op^T op. Starts from the normalized all-ones vector;
// if that start collapses into the null space (Rayleigh quotient stalls
// at zero) it restarts once from a seeded random vector.
template <class Apply, class Adjoint>
SpectralNormEstimate power_iteration(Eigen::Index dim, Apply&& apply, Adjoint&& adjoint, int iters, double tol,
                                     std::uint64_t fallback_seed = 0x5eed) {
  if (iters < 1) throw std::invalid_argument("spectral_norm: iters must be >= 1");
  if (dim <= 0) throw std::invalid_argument("spectral_norm: empty operator");
  SpectralNormEstimate est;
  Vector x = Vector::Ones(dim) / std::sqrt(static_cast<double>(dim));
  double prev = -1.0;
  for (int k = 0; k < iters; ++k) {
    const Vector y = apply(x);
    const double sigma = y.norm();
    Vector z = adjoint(y);
    const double nz = z.norm();
    est.iterations = k + 1;
    est.value = sigma;
    if (nz == 0.0 || sigma <= 1e-14 * std::max(1.0, prev)) {
      if (est.restarted || k > 0) {
        // zero operator (or exactly annihilated twice): nothing to find
        est.value = 0.0;
        est.converged = true;
        return est;
      }
      est.restarted = true;
      std::mt19937_64 rng(fallback_seed);
      std::normal_distribution<double> normal;
      for (Eigen::Index i = 0; i < dim; ++i) x[i] = normal(rng);
      x.normalize();
      prev = -1.0;
      continue;
    }
    if (prev >= 0.0 && std::abs(sigma - prev) <= tol * sigma) {
      est.converged = true;
      return est;
    }
    prev = sigma;
    x = z / nz;
  }
  return est;
}

inline SpectralNormEstimate spectral_norm(const DenseMatrix& m, int iters = 200, double tol = 1e-10) {
  if (!m.allFinite()) throw std::invalid_argument("spectral_norm: non-finite matrix");
  return power_iteration(
      m.cols(), [&](const Vector& x) -> Vector { return m * x; },
      [&](const Vector& y) -> Vector { return m.transpose() * y; }, iters, tol);
}

inline SpectralNormEstimate spectral_norm(const ConvKernelBank& bank, int rows, int cols, int iters = 200,
                                          double tol = 1e-10) {
  return power_iteration(
      static_cast<Eigen::Index>(rows) * cols,
      [&](const Vector& x) { return conv2d_apply(bank, x, rows, cols); },
      [&](const Vector& y) { return conv2d_adjoint(bank, y, rows, cols); }, iters, tol);
}

// Forward operator K of the inverse problem, mapping images to
// measurements of the same size.
class LinearOperator {
 public:
  struct Identity {};
  struct RowMask {
    std::vector<int> masked_rows;
    Vector keep;  // 1 for observed pixels, 0 for masked ones (column-stacked)
  };
  struct Conv2D {
    ConvKernelBank kernel;
  };

  static LinearOperator identity(int rows, int cols) { return LinearOperator(rows, cols, Identity{}); }

  static LinearOperator row_mask(int rows, int cols, std::vector<int> masked_rows) {
    RowMask mask;
    mask.keep = Vector::Ones(static_cast<Eigen::Index>(rows) * cols);
    for (int r : masked_rows) {
      if (r < 0 || r >= rows) throw std::invalid_argument("row_mask: masked row outside image height");
      for (int c = 0; c < cols; ++c) mask.keep[static_cast<Eigen::Index>(c) * rows + r] = 0.0;
    }
    mask.masked_rows = std::move(masked_rows);
    return LinearOperator(rows, cols, std::move(mask));
  }

  static LinearOperator convolution(int rows, int cols, ConvKernelBank kernel) {
    kernel.validate();
    if (kernel.channels != 1) throw std::invalid_argument("convolution operator: kernel must have one channel");
    return LinearOperator(rows, cols, Conv2D{std::move(kernel)});
  }

  [[nodiscard]] int rows() const { return rows_; }
  [[nodiscard]] int cols() const { return cols_; }
  [[nodiscard]] Eigen::Index input_size() const { return static_cast<Eigen::Index>(rows_) * cols_; }
  [[nodiscard]] Eigen::Index output_size() const { return input_size(); }

  [[nodiscard]] Vector apply(const Vector& u) const {
    check(u);
    return std::visit(
        [&](const auto& op) -> Vector {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Identity>) return u;
          else if constexpr (std::is_same_v<T, RowMask>) return op.keep.cwiseProduct(u);
          else return conv2d_apply(op.kernel, u, rows_, cols_);
        },
        op_);
  }

  [[nodiscard]] Vector adjoint(const Vector& v) const {
    check(v);
    return std::visit(
        [&](const auto& op) -> Vector {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Identity>) return v;
          else if constexpr (std::is_same_v<T, RowMask>) return op.keep.cwiseProduct(v);
          else return conv2d_adjoint(op.kernel, v, rows_, cols_);
        },
        op_);
  }

  // Operator norm: exact for identity and masks, power iteration otherwise.
  [[nodiscard]] double norm() const {
    return std::visit(
        [&](const auto& op) -> double {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Identity>) return 1.0;
          else if constexpr (std::is_same_v<T, RowMask>) return op.keep.maxCoeff();
          else return spectral_norm(op.kernel, rows_, cols_, 500, 1e-12).value;
        },
        op_);
  }

  [[nodiscard]] bool is_identity() const { return std::holds_alternative<Identity>(op_); }
  [[nodiscard]] const RowMask* mask() const { return std::get_if<RowMask>(&op_); }
  [[nodiscard]] const Conv2D* conv() const { return std::get_if<Conv2D>(&op_); }

 private:
  using Variant = std::variant<Identity, RowMask, Conv2D>;
  LinearOperator(int rows, int cols, Variant op) : rows_(rows), cols_(cols), op_(std::move(op)) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("LinearOperator: shape must be positive");
  }

  void check(const Vector& x) const {
    if (x.size() != input_size()) throw std::invalid_argument("LinearOperator: vector length mismatch");
  }

  int rows_;
  int cols_;
  Variant op_;
};

}  // namespace deqbl
