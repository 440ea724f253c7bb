#include "delip/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "delip/numerics/errors.hpp"
#include "delip/numerics/kernels.hpp"

namespace delip {

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) { return record(std::move(value), "constant", std::span<const Var>{}, nullptr); }

Var Graph::parameter(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = record(p.value, "parameter", std::span<const Var>{}, nullptr);
  nodes_[v.id_].param = &p;
  nodes_[v.id_].requires_grad = !p.frozen;
  param_nodes_[&p] = v.id_;
  return v;
}

Var Graph::record(Tensor value, const char* op, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), op, std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Graph::record(Tensor value, const char* op, std::span<const Var> inputs, Backward backward) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by op '") + op + "' (node " +
                       std::to_string(id) + ")");
  }
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[in.id_].requires_grad;
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, id);
}

Tensor& Graph::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph_ != this) throw ContractError("backward: variable belongs to another graph");
  if (root.value().size() != 1) throw ContractError("backward: root must be a scalar");
  if (!nodes_[root.id_].requires_grad) return;
  grad(root.id_).fill(1.0);
  for (std::int64_t i = root.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, static_cast<std::uint32_t>(i));
    } else if (n.param != nullptr) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    if (!n.grad.all_finite()) {
      throw NumericError(std::string("non-finite gradient at op '") + n.op + "' (node " +
                         std::to_string(i) + ")");
    }
  }
}

namespace ad {
namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ContractError(std::string(op) + ": " + what);
}

std::string dims(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

void require_same(const Var& a, const Var& b, const char* op) {
  require(a.value().same_shape(b.value()), op, "shape mismatch " + dims(a.value()) + " vs " + dims(b.value()));
  require(a.graph() == b.graph(), op, "variables from different graphs");
}

// Elementwise unary op: forward f(x), backward dy * df(x, y).
template <typename F, typename DF>
Var unary(Var a, const char* op, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const auto ia = a.id();
  return a.graph()->record(std::move(y), op, {a}, [ia, df](Graph& g, std::uint32_t self) {
    if (!g.requires_grad(ia)) return;
    const Tensor& xv = g.value(ia);
    const Tensor& yv = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", "inner dimension mismatch " + dims(a.value()) + " * " + dims(b.value()));
  Tensor c;
  kernels::matmul(a.value(), b.value(), c);
  const auto ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(c), "matmul", {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(ia)) kernels::matmul_nt_acc(dc, g.value(ib), g.grad(ia));
    if (g.requires_grad(ib)) kernels::matmul_tn_acc(g.value(ia), dc, g.grad(ib));
  });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(c), "add", {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    for (auto id : {ia, ib}) {
      if (!g.requires_grad(id)) continue;
      Tensor& d = g.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(c), "sub", {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& d = g.grad(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& d = g.grad(ib);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dc[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor c = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph()->record(std::move(c), "mul", {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& d = g.grad(ia);
      const Tensor& bv = g.value(ib);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& d = g.grad(ib);
      const Tensor& av = g.value(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i] * av[i];
    }
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row",
          "row " + dims(row.value()) + " does not broadcast over " + dims(a.value()));
  Tensor c = a.value();
  const Tensor& r = row.value();
  for (std::size_t i = 0; i < c.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t j = 0; j < c.cols(); ++j) ci[j] += r[j];
  }
  const auto ia = a.id(), ir = row.id();
  return a.graph()->record(std::move(c), "add_row", {a, row}, [ia, ir](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& d = g.grad(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
    }
    if (g.requires_grad(ir)) {
      Tensor& d = g.grad(ir);
      for (std::size_t i = 0; i < dc.rows(); ++i) {
        auto di = dc.row(i);
        for (std::size_t j = 0; j < dc.cols(); ++j) d[j] += di[j];
      }
    }
  });
}

Var broadcast_rows(Var row, std::size_t m) {
  require(row.rows() == 1, "broadcast_rows", "input must be a single row");
  Tensor c(m, row.cols());
  for (std::size_t i = 0; i < m; ++i) {
    auto ci = c.row(i);
    std::copy(row.value().values().begin(), row.value().values().end(), ci.begin());
  }
  const auto ir = row.id();
  return row.graph()->record(std::move(c), "broadcast_rows", {row}, [ir](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    Tensor& d = g.grad(ir);
    for (std::size_t i = 0; i < dc.rows(); ++i) {
      auto di = dc.row(i);
      for (std::size_t j = 0; j < dc.cols(); ++j) d[j] += di[j];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.cols(), "slice_cols", "range exceeds " + dims(a.value()));
  const Tensor& x = a.value();
  Tensor y(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) y(i, j) = x(i, begin + j);
  }
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "slice_cols", {a}, [ia, begin, count](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
      for (std::size_t j = 0; j < count; ++j) dx(i, begin + j) += dy(i, j);
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.rows(), "slice_rows", "range exceeds " + dims(a.value()));
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  std::vector<double> vals(x.data() + begin * n, x.data() + (begin + count) * n);
  Tensor y(count, n, std::move(vals));
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "slice_rows", {a}, [ia, begin, n](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t k = 0; k < dy.size(); ++k) dx[begin * n + k] += dy[k];
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    require(p.rows() == m, "concat_cols", "row count mismatch");
    n += p.cols();
  }
  Tensor y(m, n);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) y(i, off + j) = x(i, j);
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += x.cols();
  }
  return parts[0].graph()->record(std::move(y), "concat_cols", parts, [ids, offsets](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!g.requires_grad(ids[k])) continue;
      Tensor& dx = g.grad(ids[k]);
      for (std::size_t i = 0; i < dx.rows(); ++i) {
        for (std::size_t j = 0; j < dx.cols(); ++j) dx(i, j) += dy(i, offsets[k] + j);
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    require(p.cols() == n, "concat_rows", "column count mismatch");
    m += p.rows();
  }
  std::vector<double> vals;
  vals.reserve(m * n);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(vals.size());
    ids.push_back(p.id());
    vals.insert(vals.end(), p.value().values().begin(), p.value().values().end());
  }
  Tensor y(m, n, std::move(vals));
  return parts[0].graph()->record(std::move(y), "concat_rows", parts, [ids, offsets](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!g.requires_grad(ids[k])) continue;
      Tensor& dx = g.grad(ids[k]);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[offsets[k] + i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id();
  return a.graph()->record(Tensor::scalar(s), "sum", {a}, [ia](Graph& g, std::uint32_t self) {
    const double d = g.grad(self)[0];
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d;
  });
}

Var sum_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    y[i] = s;
  }
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "sum_rows", {a}, [ia](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < dx.rows(); ++i) {
      for (std::size_t j = 0; j < dx.cols(); ++j) dx(i, j) += dy[i];
    }
  });
}

Var fold_rows(Var a, std::size_t groups) {
  require(groups > 0 && a.rows() % groups == 0, "fold_rows", "row count not a multiple of groups");
  const Tensor& x = a.value();
  Tensor y(groups, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto yi = y.row(i % groups);
    auto xi = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) yi[j] += xi[j];
  }
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "fold_rows", {a}, [ia, groups](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < dx.rows(); ++i) {
      auto di = dx.row(i);
      auto gi = dy.row(i % groups);
      for (std::size_t j = 0; j < dx.cols(); ++j) di[j] += gi[j];
    }
  });
}

Var gaussian_log_pdf_rows(Var x, Var mean, Var log_std) {
  require_same(x, mean, "gaussian_log_pdf_rows");
  require_same(x, log_std, "gaussian_log_pdf_rows");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  const Tensor& xv = x.value();
  const Tensor& mv = mean.value();
  const Tensor& lv = log_std.value();
  Tensor y(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < xv.cols(); ++j) {
      const double z = (xv(i, j) - mv(i, j)) * std::exp(-lv(i, j));
      s += -kHalfLog2Pi - lv(i, j) - 0.5 * z * z;
    }
    y[i] = s;
  }
  const auto ix = x.id(), im = mean.id(), il = log_std.id();
  return x.graph()->record(std::move(y), "gaussian_log_pdf", {x, mean, log_std},
                           [ix, im, il](Graph& g, std::uint32_t self) {
                             const Tensor& dy = g.grad(self);
                             const Tensor& xv = g.value(ix);
                             const Tensor& mv = g.value(im);
                             const Tensor& lv = g.value(il);
                             const bool gx = g.requires_grad(ix), gm = g.requires_grad(im),
                                        gl = g.requires_grad(il);
                             for (std::size_t i = 0; i < xv.rows(); ++i) {
                               for (std::size_t j = 0; j < xv.cols(); ++j) {
                                 const double inv_var = std::exp(-2.0 * lv(i, j));
                                 const double diff = xv(i, j) - mv(i, j);
                                 const double dxv = -diff * inv_var * dy[i];
                                 if (gx) g.grad(ix)(i, j) += dxv;
                                 if (gm) g.grad(im)(i, j) -= dxv;
                                 if (gl) g.grad(il)(i, j) += (diff * diff * inv_var - 1.0) * dy[i];
                               }
                             }
                           });
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double s = 0.0;
    for (double v : xi) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = xi[j] - lse;
  }
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "log_softmax", {a}, [ia](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& yv = g.value(self);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < yv.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < yv.cols(); ++j) s += dy(i, j);
      for (std::size_t j = 0; j < yv.cols(); ++j) dx(i, j) += dy(i, j) - std::exp(yv(i, j)) * s;
    }
  });
}

Var logsumexp_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double s = 0.0;
    for (double v : xi) s += std::exp(v - mx);
    y[i] = mx + std::log(s);
  }
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "logsumexp", {a}, [ia](Graph& g, std::uint32_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& yv = g.value(self);
    const Tensor& xv = g.value(ia);
    Tensor& dx = g.grad(ia);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      for (std::size_t j = 0; j < xv.cols(); ++j) dx(i, j) += dy[i] * std::exp(xv(i, j) - yv[i]);
    }
  });
}

Var gather_blocks(Var a, std::span<const std::uint32_t> idx, std::size_t width) {
  require(idx.size() == a.rows(), "gather_blocks", "one index per row required");
  const Tensor& x = a.value();
  Tensor y(x.rows(), width);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t off = static_cast<std::size_t>(idx[i]) * width;
    require(off + width <= x.cols(), "gather_blocks", "block index out of range");
    for (std::size_t j = 0; j < width; ++j) y(i, j) = x(i, off + j);
  }
  std::vector<std::uint32_t> index(idx.begin(), idx.end());
  const auto ia = a.id();
  return a.graph()->record(std::move(y), "gather_blocks", {a},
                           [ia, index = std::move(index), width](Graph& g, std::uint32_t self) {
                             const Tensor& dy = g.grad(self);
                             Tensor& dx = g.grad(ia);
                             for (std::size_t i = 0; i < dy.rows(); ++i) {
                               const std::size_t off = static_cast<std::size_t>(index[i]) * width;
                               for (std::size_t j = 0; j < width; ++j) dx(i, off + j) += dy(i, j);
                             }
                           });
}

}  // namespace ad
}  // namespace delip
