#pragma once

// The three inverse problems (denoising, row inpainting, deblurring) and
// keyed Gaussian measurement noise.

#include "deqbl/linops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deqbl {

enum class TaskKind { denoise, inpaint, deblur };

struct ProblemKind {
  TaskKind kind = TaskKind::denoise;
  std::vector<int> mask_rows;  // inpaint; empty means default_mask(rows)
  Matrix kernel;               // deblur; empty means default_blur_kernel()
};

// Rows 0 .. ceil(rows / 3) - 1.
inline std::vector<int> default_mask(int rows) {
  if (rows < 1) throw std::invalid_argument("default_mask: rows must be >= 1");
  const int count = (rows + 2) / 3;
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) out[i] = i;
  return out;
}

// Diagonal motion blur, 1/5 on the main diagonal of a 5x5 kernel.
inline ConvKernelBank default_blur_kernel() {
  return ConvKernelBank::single(Matrix::Identity(5, 5) / 5.0);
}

inline LinearOperator build_operator(const ProblemKind& kind, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("build_operator: shape must be positive");
  switch (kind.kind) {
    case TaskKind::denoise: return LinearOperator::identity(rows, cols);
    case TaskKind::inpaint:
      return LinearOperator::row_mask(rows, cols, kind.mask_rows.empty() ? default_mask(rows) : kind.mask_rows);
    case TaskKind::deblur: {
      ConvKernelBank k = kind.kernel.size() == 0 ? default_blur_kernel() : ConvKernelBank::single(kind.kernel);
      if (std::abs(k.weights.sum() - 1.0) > 1e-12) throw std::invalid_argument("build_operator: blur kernel must sum to 1");
      return LinearOperator::convolution(rows, cols, std::move(k));
    }
  }
  throw std::invalid_argument("build_operator: unknown task");
}

struct NoiseSpec {
  double alpha = 0.0;  // standard deviation
  std::uint64_t seed = 0;
  bool regenerate_per_epoch = true;
  bool noise_on_masked_rows = true;  // masked entries of f carry pure noise when true
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Stream key for (seed, sample, epoch); independent of call order.
inline std::uint64_t noise_key(const NoiseSpec& noise, std::uint64_t sample_id, std::uint64_t epoch) {
  std::uint64_t k = detail::splitmix64(noise.seed);
  k = detail::splitmix64(k ^ sample_id);
  if (noise.regenerate_per_epoch) k = detail::splitmix64(k ^ (epoch + 0x51ed270b27ULL));
  return k;
}

inline Vector gaussian_noise(const NoiseSpec& noise, Eigen::Index m, std::uint64_t sample_id, std::uint64_t epoch) {
  if (!(noise.alpha >= 0.0)) throw std::invalid_argument("NoiseSpec: alpha must be >= 0");
  Vector delta = Vector::Zero(m);
  if (noise.alpha == 0.0) return delta;
  std::mt19937_64 rng(noise_key(noise, sample_id, epoch));
  std::normal_distribution<double> normal(0.0, noise.alpha);
  for (Eigen::Index i = 0; i < m; ++i) delta[i] = normal(rng);
  return delta;
}

// f = K u + delta, delta ~ N(0, alpha^2 I) drawn from the keyed stream.
inline Vector measure(const LinearOperator& K, const Vector& u, const NoiseSpec& noise, std::uint64_t sample_id,
                      std::uint64_t epoch) {
  Vector f = K.apply(u);
  Vector delta = gaussian_noise(noise, f.size(), sample_id, epoch);
  if (!noise.noise_on_masked_rows)
    if (const auto* mask = K.mask()) delta = delta.cwiseProduct(mask->keep);
  f += delta;
  return f;
}

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::denoise: return "denoise";
    case TaskKind::inpaint: return "inpaint";
    case TaskKind::deblur: return "deblur";
  }
  return "?";
}

inline TaskKind task_kind_from_string(std::string_view s) {
  for (TaskKind k : {TaskKind::denoise, TaskKind::inpaint, TaskKind::deblur})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

// Column-stacked indices of the unobserved pixels; empty unless inpainting.
inline std::vector<Eigen::Index> masked_indices(const ProblemKind& kind, int rows, int cols) {
  std::vector<Eigen::Index> idx;
  if (kind.kind != TaskKind::inpaint) return idx;
  const std::vector<int> mask = kind.mask_rows.empty() ? default_mask(rows) : kind.mask_rows;
  for (int c = 0; c < cols; ++c)
    for (int r : mask) idx.push_back(static_cast<Eigen::Index>(c) * rows + r);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Mean of (u - truth)^2 over idx; NaN when idx is empty.
inline double masked_mse(const Vector& u, const Vector& truth, const std::vector<Eigen::Index>& idx) {
  if (u.size() != truth.size()) throw std::invalid_argument("masked_mse: length mismatch");
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (Eigen::Index i : idx) s += (u[i] - truth[i]) * (u[i] - truth[i]);
  return s / static_cast<double>(idx.size());
}

}  // namespace deqbl
