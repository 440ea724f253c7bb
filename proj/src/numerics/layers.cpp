#include "delip/numerics/layers.hpp"

#include <cmath>

#include "delip/numerics/errors.hpp"
#include "delip/numerics/kernels.hpp"

namespace delip {

Dense::Dense(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out)
    : w_(&store.add(prefix + ".w", in, out)), b_(&store.add(prefix + ".b", 1, out)), in_(in), out_(out) {}

void Dense::init_fan_in(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (double& v : w_->value.values()) v = bound * (2.0 * rng.uniform() - 1.0);
  b_->value.fill(0.0);
}

void Dense::init_constant(double bias) {
  w_->value.fill(0.0);
  b_->value.fill(bias);
}

Var Dense::forward(Graph& g, Var x) const {
  return ad::add_row(ad::matmul(x, g.parameter(*w_)), g.parameter(*b_));
}

Tensor Dense::eval(const Tensor& x) const {
  if (x.cols() != in_) throw ContractError("dense: input width mismatch");
  Tensor y;
  kernels::matmul(x, w_->value, y);
  const Tensor& b = b_->value;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yi = y.row(i);
    for (std::size_t j = 0; j < out_; ++j) yi[j] += b[j];
  }
  return y;
}

void Dense::eval_row(std::span<const double> x, std::span<double> y) const {
  const double* w = w_->value.data();
  const double* b = b_->value.data();
  for (std::size_t j = 0; j < out_; ++j) y[j] = b[j];
  for (std::size_t i = 0; i < in_; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* wi = w + i * out_;
    for (std::size_t j = 0; j < out_; ++j) y[j] += xi * wi[j];
  }
}

Mlp::Mlp(ParameterStore& store, const std::string& prefix, std::vector<std::size_t> widths) {
  if (widths.size() < 2) throw ContractError("mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(store, prefix + ".l" + std::to_string(i), widths[i], widths[i + 1]);
  }
}

void Mlp::init_fan_in(Rng& rng) {
  for (auto& l : layers_) l.init_fan_in(rng);
}

Var Mlp::forward(Graph& g, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(g, h);
    if (i + 1 < layers_.size()) h = ad::relu(h);
  }
  return h;
}

Tensor Mlp::eval(const Tensor& x) const {
  Tensor h = layers_[0].eval(x);
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    relu_inplace(h);
    h = layers_[i].eval(h);
  }
  return h;
}

void Mlp::eval_row(std::span<const double> x, std::vector<double>& out, std::vector<double>& scratch) const {
  out.assign(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0) {
      for (double& v : out) v = v > 0.0 ? v : 0.0;
    }
    scratch.resize(layers_[i].out());
    layers_[i].eval_row(out, scratch);
    out.swap(scratch);
  }
}

LstmCell::LstmCell(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden)
    : wx_(&store.add(prefix + ".wx", in, 4 * hidden)),
      wh_(&store.add(prefix + ".wh", hidden, 4 * hidden)),
      b_(&store.add(prefix + ".b", 1, 4 * hidden)),
      in_(in),
      hidden_(hidden) {}

void LstmCell::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (double& v : wx_->value.values()) v = bound * (2.0 * rng.uniform() - 1.0);
  for (double& v : wh_->value.values()) v = bound * (2.0 * rng.uniform() - 1.0);
  b_->value.fill(0.0);
  for (std::size_t j = hidden_; j < 2 * hidden_; ++j) b_->value[j] = 1.0;
}

std::pair<Var, Var> LstmCell::step(Graph& g, Var x, Var h, Var c) const {
  Var gates = ad::add_row(ad::add(ad::matmul(x, g.parameter(*wx_)), ad::matmul(h, g.parameter(*wh_))),
                          g.parameter(*b_));
  const std::size_t n = hidden_;
  Var i = ad::sigmoid(ad::slice_cols(gates, 0, n));
  Var f = ad::sigmoid(ad::slice_cols(gates, n, n));
  Var cell = ad::tanh(ad::slice_cols(gates, 2 * n, n));
  Var o = ad::sigmoid(ad::slice_cols(gates, 3 * n, n));
  Var c_next = ad::add(ad::mul(f, c), ad::mul(i, cell));
  Var h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

std::pair<Tensor, Tensor> LstmCell::eval_step(const Tensor& x, const Tensor& h, const Tensor& c) const {
  Tensor gates;
  kernels::matmul(x, wx_->value, gates);
  kernels::matmul(h, wh_->value, gates, true);
  const std::size_t n = hidden_;
  Tensor h_next(x.rows(), n);
  Tensor c_next(x.rows(), n);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gi = sig(gates(r, j) + b_->value[j]);
      const double gf = sig(gates(r, n + j) + b_->value[n + j]);
      const double gc = std::tanh(gates(r, 2 * n + j) + b_->value[2 * n + j]);
      const double go = sig(gates(r, 3 * n + j) + b_->value[3 * n + j]);
      const double cn = gf * c(r, j) + gi * gc;
      c_next(r, j) = cn;
      h_next(r, j) = go * std::tanh(cn);
    }
  }
  return {std::move(h_next), std::move(c_next)};
}

void relu_inplace(Tensor& t) {
  for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

}  // namespace delip
