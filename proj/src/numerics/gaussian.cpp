#include "delip/numerics/gaussian.hpp"

#include <cmath>

#include "delip/numerics/errors.hpp"

namespace delip {

GaussianParams::GaussianParams(std::vector<double> m, std::vector<double> ls)
    : mean(std::move(m)), log_std(std::move(ls)) {
  if (mean.size() != log_std.size()) throw ContractError("gaussian: mean/log_std length mismatch");
}

std::vector<double> GaussianParams::stddev() const {
  std::vector<double> s(log_std.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(log_std[i]);
  return s;
}

double gaussian_log_pdf(std::span<const double> x, std::span<const double> mean, std::span<const double> log_std) {
  if (x.size() != mean.size() || x.size() != log_std.size()) {
    throw ContractError("gaussian_log_pdf: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) * std::exp(-log_std[i]);
    s += -kHalfLog2Pi - log_std[i] - 0.5 * z * z;
  }
  return s;
}

double gaussian_log_pdf(std::span<const double> x, const GaussianParams& p) {
  return gaussian_log_pdf(x, p.mean, p.log_std);
}

double kl_gaussian(const GaussianParams& q, const GaussianParams& p) {
  if (q.dim() != p.dim()) throw ContractError("kl_gaussian: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double var_ratio = std::exp(2.0 * (q.log_std[i] - p.log_std[i]));
    const double d = q.mean[i] - p.mean[i];
    s += (p.log_std[i] - q.log_std[i]) + 0.5 * (var_ratio + d * d * std::exp(-2.0 * p.log_std[i])) - 0.5;
  }
  // Cancellation can leave tiny negatives for identical inputs.
  return s < 0.0 ? 0.0 : s;
}

std::vector<double> sample_reparam(const GaussianParams& p, Rng& rng) {
  std::vector<double> out(p.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.mean[i] + std::exp(p.log_std[i]) * rng.normal();
  return out;
}

Var sample_reparam(Var mean, Var log_std, Rng& rng, const Tensor* replay, Tensor* record) {
  Graph& g = *mean.graph();
  Tensor eps(mean.rows(), mean.cols());
  if (replay != nullptr) {
    if (!replay->same_shape(eps)) throw ContractError("sample_reparam: replay noise shape mismatch");
    eps = *replay;
  } else {
    for (double& v : eps.values()) v = rng.normal();
  }
  if (record != nullptr) *record = eps;
  return ad::add(mean, ad::mul(ad::exp(log_std), g.constant(std::move(eps))));
}

}  // namespace delip
