#pragma once

#include "delip/numerics/tensor.hpp"

// Dense matrix kernels, built on Eigen's GEMM. Each kernel exists in a serial
// reference form (one GEMM over the whole problem) and an OpenMP form that
// splits the output rows into one contiguous block per thread and runs a GEMM
// per block. With one thread the two forms are the same call.
namespace delip::kernels {

enum class Policy { Serial, Parallel };

// Process-wide choice used by the dispatching overloads below.
Policy default_policy();
void set_default_policy(Policy p);

namespace serial {
// C = A * B  (or C += A * B when accumulate)
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
// C += A * B^T
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c);
// C += A^T * B
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c);
}  // namespace serial

namespace parallel {
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c);
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c);
}  // namespace parallel

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c);
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c);

int max_threads();

}  // namespace delip::kernels
