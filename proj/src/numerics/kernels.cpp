#include "delip/numerics/kernels.hpp"

#include <Eigen/Core>
#include <atomic>
#include <cstddef>
#include <string>

#include "delip/numerics/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace delip::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::atomic<Policy> g_policy{Policy::Parallel};

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;

void check_shapes(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

void prepare(Tensor& c, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (c.rows() != rows || c.cols() != cols) throw ContractError("matmul: accumulator shape mismatch");
  } else if (c.rows() != rows || c.cols() != cols) {
    c = Tensor(rows, cols);
  } else {
    c.fill(0.0);
  }
}

ConstMap view(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

// Output rows [begin, end) of each kernel.
void nn_block(const Tensor& a, const Tensor& b, Tensor& c, Eigen::Index begin, Eigen::Index end) {
  view(c).middleRows(begin, end - begin).noalias() += view(a).middleRows(begin, end - begin) * view(b);
}

void nt_block(const Tensor& a, const Tensor& b, Tensor& c, Eigen::Index begin, Eigen::Index end) {
  view(c).middleRows(begin, end - begin).noalias() += view(a).middleRows(begin, end - begin) * view(b).transpose();
}

void tn_block(const Tensor& a, const Tensor& b, Tensor& c, Eigen::Index begin, Eigen::Index end) {
  view(c).middleRows(begin, end - begin).noalias() += view(a).middleCols(begin, end - begin).transpose() * view(b);
}

// Runs block(begin, end) over a static contiguous partition of [0, rows).
template <class Block>
void partitioned(std::size_t rows, bool big, Block&& block) {
  if (rows == 0) return;
#pragma omp parallel if (big)
  {
#ifdef _OPENMP
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t id = static_cast<std::size_t>(omp_get_thread_num());
#else
    const std::size_t nt = 1;
    const std::size_t id = 0;
#endif
    const std::size_t chunk = (rows + nt - 1) / nt;
    const std::size_t begin = std::min(rows, id * chunk);
    const std::size_t end = std::min(rows, begin + chunk);
    if (begin < end) block(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end));
  }
}

}  // namespace

Policy default_policy() { return g_policy.load(); }
void set_default_policy(Policy p) { g_policy.store(p); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check_shapes(a.cols() == b.rows(), "matmul", a, b);
  prepare(c, a.rows(), b.cols(), accumulate);
  if (c.empty()) return;
  nn_block(a, b, c, 0, static_cast<Eigen::Index>(a.rows()));
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  check_shapes(a.cols() == b.cols(), "matmul_nt", a, b);
  prepare(c, a.rows(), b.rows(), true);
  if (c.empty()) return;
  nt_block(a, b, c, 0, static_cast<Eigen::Index>(a.rows()));
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  check_shapes(a.rows() == b.rows(), "matmul_tn", a, b);
  prepare(c, a.cols(), b.cols(), true);
  if (c.empty()) return;
  tn_block(a, b, c, 0, static_cast<Eigen::Index>(a.cols()));
}

}  // namespace serial

namespace parallel {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check_shapes(a.cols() == b.rows(), "matmul", a, b);
  prepare(c, a.rows(), b.cols(), accumulate);
  if (c.empty()) return;
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWork;
  partitioned(a.rows(), big, [&](Eigen::Index s, Eigen::Index e) { nn_block(a, b, c, s, e); });
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  check_shapes(a.cols() == b.cols(), "matmul_nt", a, b);
  prepare(c, a.rows(), b.rows(), true);
  if (c.empty()) return;
  const bool big = a.rows() * a.cols() * b.rows() >= kParallelWork;
  partitioned(a.rows(), big, [&](Eigen::Index s, Eigen::Index e) { nt_block(a, b, c, s, e); });
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  check_shapes(a.rows() == b.rows(), "matmul_tn", a, b);
  prepare(c, a.cols(), b.cols(), true);
  if (c.empty()) return;
  const bool big = a.rows() * a.cols() * b.cols() >= kParallelWork;
  partitioned(a.cols(), big, [&](Eigen::Index s, Eigen::Index e) { tn_block(a, b, c, s, e); });
}

}  // namespace parallel

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (default_policy() == Policy::Parallel) {
    parallel::matmul(a, b, c, accumulate);
  } else {
    serial::matmul(a, b, c, accumulate);
  }
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  if (default_policy() == Policy::Parallel) {
    parallel::matmul_nt_acc(a, b, c);
  } else {
    serial::matmul_nt_acc(a, b, c);
  }
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  if (default_policy() == Policy::Parallel) {
    parallel::matmul_tn_acc(a, b, c);
  } else {
    serial::matmul_tn_acc(a, b, c);
  }
}

}  // namespace delip::kernels
