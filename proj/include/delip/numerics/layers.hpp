#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "delip/numerics/autodiff.hpp"
#include "delip/numerics/parameters.hpp"
#include "delip/numerics/rng.hpp"
#include "delip/numerics/tensor.hpp"

namespace delip {

/// Affine map y = x W + b with W [in x out] and b [1 x out]. Holds pointers
/// into a ParameterStore, which must outlive the layer.
class Dense {
public:
  Dense() = default;
  Dense(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out);

  // W ~ U(-1/sqrt(in), 1/sqrt(in)), b = 0.
  void init_fan_in(Rng& rng);
  // W = 0, b = constant (used for heads whose initial output is prescribed).
  void init_constant(double bias);

  Var forward(Graph& g, Var x) const;
  Tensor eval(const Tensor& x) const;
  // y = x W + b for a single row; y must have out() entries.
  void eval_row(std::span<const double> x, std::span<double> y) const;

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  Parameter& weight() const { return *w_; }
  Parameter& bias() const { return *b_; }

private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

/// Stack of Dense layers with ReLU between them (no activation after the last).
class Mlp {
public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& prefix, std::vector<std::size_t> widths);

  void init_fan_in(Rng& rng);
  Var forward(Graph& g, Var x) const;
  Tensor eval(const Tensor& x) const;

  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }
  // Single-row evaluation; `scratch` is reused between calls to avoid allocation.
  void eval_row(std::span<const double> x, std::vector<double>& out, std::vector<double>& scratch) const;
  Dense& layer(std::size_t i) { return layers_[i]; }
  const Dense& layer(std::size_t i) const { return layers_[i]; }
  std::size_t depth() const { return layers_.size(); }

private:
  std::vector<Dense> layers_;
};

/// LSTM cell with gate layout [input | forget | cell | output] along columns.
class LstmCell {
public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden);

  // Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, forget-gate bias 1.
  void init(Rng& rng);

  // Returns (h', c').
  std::pair<Var, Var> step(Graph& g, Var x, Var h, Var c) const;
  std::pair<Tensor, Tensor> eval_step(const Tensor& x, const Tensor& h, const Tensor& c) const;

  std::size_t in() const { return in_; }
  std::size_t hidden() const { return hidden_; }

private:
  Parameter* wx_ = nullptr;
  Parameter* wh_ = nullptr;
  Parameter* b_ = nullptr;
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
};

// Plain (non-recording) activations used by the eval paths.
void relu_inplace(Tensor& t);

}  // namespace delip
