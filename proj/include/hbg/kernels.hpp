#pragma once

#include <span>

// Dense row-major kernels used by the autodiff engine. Each OpenMP kernel has a
// serial twin with the same summation order; tests require bit-identical output.
namespace hbg::kernels {

/// Rows below this much work run on the calling thread.
inline constexpr long kParallelWork = 1 << 14;

// C[n x m] = A[n x k] * B[k x m]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, int n, int k, int m);
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, int n, int k, int m);

// C[k x m] += A^T * G, with A[n x k], G[n x m]
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c, int n, int k, int m);
void matmul_at_b_acc_serial(std::span<const double> a, std::span<const double> g, std::span<double> c, int n, int k,
                            int m);

// C[n x k] += G * B^T, with G[n x m], B[k x m]
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c, int n, int k, int m);
void matmul_a_bt_acc_serial(std::span<const double> g, std::span<const double> b, std::span<double> c, int n, int k,
                            int m);

// out[s] = mean of rows x[offsets[s] .. offsets[s+1]) ; empty segments give zero rows.
void segment_mean(std::span<const double> x, std::span<const int> offsets, std::span<double> out, int cols);
void segment_mean_serial(std::span<const double> x, std::span<const int> offsets, std::span<double> out, int cols);

}  // namespace hbg::kernels
