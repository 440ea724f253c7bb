#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "delip/numerics/autodiff.hpp"
#include "delip/numerics/rng.hpp"

namespace delip {

// Range every network-emitted log standard deviation is clamped into.
inline constexpr double kMinLogStd = -10.0;
inline constexpr double kMaxLogStd = 5.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Diagonal Gaussian, parameterized by mean and log standard deviation.
struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> log_std;

  GaussianParams() = default;
  GaussianParams(std::vector<double> m, std::vector<double> ls);

  std::size_t dim() const { return mean.size(); }
  std::vector<double> stddev() const;
};

double gaussian_log_pdf(std::span<const double> x, const GaussianParams& p);

// KL(q || p) between diagonal Gaussians.
double kl_gaussian(const GaussianParams& q, const GaussianParams& p);

std::vector<double> sample_reparam(const GaussianParams& p, Rng& rng);

/// Differentiable draw mean + exp(log_std) * eps. The standard-normal noise is
/// drawn from `rng` unless `replay` is given, in which case it is reused;
/// `record`, when non-null, receives the noise actually used.
Var sample_reparam(Var mean, Var log_std, Rng& rng, const Tensor* replay = nullptr, Tensor* record = nullptr);

// log N(x; mean, exp(log_std)) summed over dimensions; plain scalar form.
double gaussian_log_pdf(std::span<const double> x, std::span<const double> mean, std::span<const double> log_std);

}  // namespace delip
