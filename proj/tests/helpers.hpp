#pragma once

#include "deqbl/linops.hpp"

#include <cstdint>
#include <random>

namespace testutil {

inline deqbl::Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  deqbl::Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

inline deqbl::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  deqbl::Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(rng);
  return m;
}

inline deqbl::ConvKernelBank random_bank(std::mt19937_64& rng, int channels, int kh, int kw) {
  deqbl::ConvKernelBank bank(channels, kh, kw);
  bank.weights = random_vector(rng, bank.weights.size());
  return bank;
}

// Scalar-loop convolution: out_c[h,k] = sum_{i,j} K_c[i,j] U[h-i, k-j], zero outside.
inline deqbl::Vector conv_loop(const deqbl::ConvKernelBank& bank, const deqbl::Vector& u, int rows, int cols) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
  deqbl::Vector out = deqbl::Vector::Zero(bank.channels * n);
  for (int c = 0; c < bank.channels; ++c)
    for (int h = 0; h < rows; ++h)
      for (int k = 0; k < cols; ++k) {
        double s = 0.0;
        for (int i = -bank.kh / 2; i <= bank.kh / 2; ++i)
          for (int j = -bank.kw / 2; j <= bank.kw / 2; ++j) {
            const int r = h - i;
            const int q = k - j;
            if (r < 0 || r >= rows || q < 0 || q >= cols) continue;
            s += bank.at(c, i, j) * u[static_cast<Eigen::Index>(q) * rows + r];
          }
        out[c * n + static_cast<Eigen::Index>(k) * rows + h] = s;
      }
  return out;
}

}  // namespace testutil
