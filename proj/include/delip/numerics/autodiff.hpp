#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "delip/numerics/parameters.hpp"
#include "delip/numerics/tensor.hpp"

namespace delip {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a single
/// descending sweep over node ids is a valid reverse topological order.
///
/// Every recorded value is checked for NaN/Inf; the first offending op raises
/// NumericError naming the op and node id.
class Graph {
public:
  using Backward = std::function<void(Graph&, std::uint32_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // One leaf per parameter per graph; frozen parameters act as constants.
  Var parameter(Parameter& p);

  Var record(Tensor value, const char* op, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, const char* op, std::span<const Var> inputs, Backward backward);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  // Gradient accumulator of a node, allocated (zeroed) on first access.
  Tensor& grad(std::uint32_t id);
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Seeds d(root)=1 and accumulates into Parameter::grad of every reached leaf.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    const char* op = "";
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
};

/// Differentiable primitives. All operate on 2-D tensors; shapes are checked
/// and violations raise ContractError.
namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);        // a[m x n] + row[1 x n] broadcast over rows
Var broadcast_rows(Var row, std::size_t m);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
// Elementwise clamp; gradient is zero where the input lies outside [lo, hi].
Var clamp(Var a, double lo, double hi);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var sum(Var a);        // -> 1x1
Var sum_rows(Var a);   // -> m x 1
// a[(k*groups + g) x n] -> out[g x n] summed over k; folds time-stacked rows back per sequence.
Var fold_rows(Var a, std::size_t groups);
// Row-wise sum over columns of the diagonal Gaussian log-density -> m x 1.
Var gaussian_log_pdf_rows(Var x, Var mean, Var log_std);
Var log_softmax_rows(Var a);
Var logsumexp_rows(Var a);   // -> m x 1
// Row i selects columns [idx[i]*width, (idx[i]+1)*width).
Var gather_blocks(Var a, std::span<const std::uint32_t> idx, std::size_t width);

}  // namespace ad
}  // namespace delip
