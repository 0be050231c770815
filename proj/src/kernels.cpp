#include "hbg/kernels.hpp"

#include <cstddef>

namespace hbg::kernels {

namespace {

inline void matmul_row(const double* a, const double* b, double* c, int k, int m) {
    for (int j = 0; j < m; ++j) c[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double av = a[p];
        const double* brow = b + static_cast<std::ptrdiff_t>(p) * m;
        for (int j = 0; j < m; ++j) c[j] += av * brow[j];
    }
}

// Row p of C (k x m) accumulates sum_i A[i,p] * G[i,:] in ascending i.
inline void at_b_row(const double* a, const double* g, double* c, int n, int k, int m, int p) {
    for (int i = 0; i < n; ++i) {
        const double av = a[static_cast<std::ptrdiff_t>(i) * k + p];
        if (av == 0.0) continue;
        const double* grow = g + static_cast<std::ptrdiff_t>(i) * m;
        for (int j = 0; j < m; ++j) c[j] += av * grow[j];
    }
}

inline void a_bt_row(const double* g, const double* b, double* c, int k, int m) {
    for (int p = 0; p < k; ++p) {
        const double* brow = b + static_cast<std::ptrdiff_t>(p) * m;
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += g[j] * brow[j];
        c[p] += s;
    }
}

inline void segment_row(const double* x, const int* offsets, double* out, int cols, int s) {
    const int lo = offsets[s];
    const int hi = offsets[s + 1];
    for (int c = 0; c < cols; ++c) out[c] = 0.0;
    if (hi <= lo) return;
    for (int r = lo; r < hi; ++r) {
        const double* row = x + static_cast<std::ptrdiff_t>(r) * cols;
        for (int c = 0; c < cols; ++c) out[c] += row[c];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (int c = 0; c < cols; ++c) out[c] *= inv;
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int i = 0; i < n; ++i)
        matmul_row(a.data() + static_cast<std::ptrdiff_t>(i) * k, b.data(), c.data() + static_cast<std::ptrdiff_t>(i) * m,
                   k, m);
}

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, int n, int k, int m) {
    for (int i = 0; i < n; ++i)
        matmul_row(a.data() + static_cast<std::ptrdiff_t>(i) * k, b.data(), c.data() + static_cast<std::ptrdiff_t>(i) * m,
                   k, m);
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> c, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int p = 0; p < k; ++p) at_b_row(a.data(), g.data(), c.data() + static_cast<std::ptrdiff_t>(p) * m, n, k, m, p);
}

void matmul_at_b_acc_serial(std::span<const double> a, std::span<const double> g, std::span<double> c, int n, int k,
                            int m) {
    for (int p = 0; p < k; ++p) at_b_row(a.data(), g.data(), c.data() + static_cast<std::ptrdiff_t>(p) * m, n, k, m, p);
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> c, int n, int k, int m) {
    const long work = static_cast<long>(n) * k * m;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int i = 0; i < n; ++i)
        a_bt_row(g.data() + static_cast<std::ptrdiff_t>(i) * m, b.data(), c.data() + static_cast<std::ptrdiff_t>(i) * k,
                 k, m);
}

void matmul_a_bt_acc_serial(std::span<const double> g, std::span<const double> b, std::span<double> c, int n, int k,
                            int m) {
    for (int i = 0; i < n; ++i)
        a_bt_row(g.data() + static_cast<std::ptrdiff_t>(i) * m, b.data(), c.data() + static_cast<std::ptrdiff_t>(i) * k,
                 k, m);
}

void segment_mean(std::span<const double> x, std::span<const int> offsets, std::span<double> out, int cols) {
    const int segments = static_cast<int>(offsets.size()) - 1;
    const long work = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (int s = 0; s < segments; ++s)
        segment_row(x.data(), offsets.data(), out.data() + static_cast<std::ptrdiff_t>(s) * cols, cols, s);
}

void segment_mean_serial(std::span<const double> x, std::span<const int> offsets, std::span<double> out, int cols) {
    const int segments = static_cast<int>(offsets.size()) - 1;
    for (int s = 0; s < segments; ++s)
        segment_row(x.data(), offsets.data(), out.data() + static_cast<std::ptrdiff_t>(s) * cols, cols, s);
}

}  // namespace hbg::kernels
