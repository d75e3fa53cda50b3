#pragma once

#include <omp.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>

// Hot loops for the tensor ops. Every kernel exists twice: kernels::ref is
// plain serial code and stays the oracle; kernels::par splits the output
// rows into one contiguous block per OpenMP thread and runs the ref kernel
// on each block. Because every element goes through the same machine code
// in the same per-row order, par output is bitwise equal to ref at any
// thread count. ref kernels are noinline so the compiler cannot respecialize
// them (fma contraction differs between inlined copies). Dispatch picks par
// only above a work threshold; reductions that cross rows stay serial.

#if defined(__clang__)
#define GDT_NOINLINE __attribute__((noinline))
#elif defined(__GNUC__)
#define GDT_NOINLINE __attribute__((noinline, noclone))
#else
#define GDT_NOINLINE
#endif

namespace gdt::kernels {

inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC = 0.044715;

namespace ref {

// C[M,N] = A[M,K] * B[K,N], += when accum
template <typename T>
GDT_NOINLINE void matmul_nn(T* C, const T* A, const T* B, int M, int K, int N, bool accum) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<size_t>(i) * N;
        if (!accum)
            for (int j = 0; j < N; ++j) c[j] = T(0);
        const T* a = A + static_cast<size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// out[C,R] = in[R,C]^T, output rows (= input columns) [clo,chi). Products
// against a transposed right operand go through an explicit transpose plus
// matmul_nn; the axpy-form inner loops vectorize where a fused dot-product
// kernel cannot (no fp reassociation).
template <typename T>
GDT_NOINLINE void transpose_cols(T* out, const T* in, int R, int C, int clo, int chi) {
    for (int c = clo; c < chi; ++c) {
        T* o = out + static_cast<size_t>(c) * R;
        const T* p = in + c;
        for (int r = 0; r < R; ++r) o[r] = p[static_cast<size_t>(r) * C];
    }
}

template <typename T>
void transpose(T* out, const T* in, int R, int C) {
    transpose_cols(out, in, R, C, 0, C);
}

// C[M,N] = A[K,M]^T * B[K,N], rows [ilo,ihi). A is indexed with the full M
// stride, so row blocks need the explicit range instead of pointer offsets.
template <typename T>
GDT_NOINLINE void matmul_tn_rows(T* C, const T* A, const T* B, int M, int K, int N,
                                 int ilo, int ihi, bool accum) {
    for (int i = ilo; i < ihi; ++i) {
        T* c = C + static_cast<size_t>(i) * N;
        if (!accum)
            for (int j = 0; j < N; ++j) c[j] = T(0);
        for (int k = 0; k < K; ++k) {
            const T av = A[static_cast<size_t>(k) * M + i];
            const T* b = B + static_cast<size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
void matmul_tn(T* C, const T* A, const T* B, int M, int K, int N, bool accum) {
    matmul_tn_rows(C, A, B, M, K, N, 0, M, accum);
}

// Row-wise softmax; mask is per-element keep flags (may be null for dense).
// Masked entries come out exactly zero. Caller guarantees every row keeps
// at least one entry.
template <typename T>
GDT_NOINLINE void softmax_rows(T* out, const T* in, const uint8_t* mask, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const T* x = in + static_cast<size_t>(r) * cols;
        const uint8_t* m = mask ? mask + static_cast<size_t>(r) * cols : nullptr;
        T* y = out + static_cast<size_t>(r) * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < cols; ++j)
            if ((!m || m[j]) && x[j] > mx) mx = x[j];
        T sum = T(0);
        for (int j = 0; j < cols; ++j) {
            if (!m || m[j]) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            } else {
                y[j] = T(0);
            }
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < cols; ++j) y[j] *= inv;
    }
}

// dx = y * (dy - sum_j y_j dy_j), rowwise; masked entries have y == 0.
template <typename T>
GDT_NOINLINE void softmax_rows_bwd(T* dx, const T* y, const T* dy, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const T* yr = y + static_cast<size_t>(r) * cols;
        const T* gr = dy + static_cast<size_t>(r) * cols;
        T* dr = dx + static_cast<size_t>(r) * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += yr[j] * gr[j];
        for (int j = 0; j < cols; ++j) dr[j] = yr[j] * (gr[j] - dot);
    }
}

// out = (x - mean) * rstd * gain + bias per row; saves mean/rstd for backward
template <typename T>
GDT_NOINLINE void layernorm(T* out, T* mean, T* rstd, const T* in, const T* gain,
               const T* bias, int rows, int cols, T eps) {
    for (int r = 0; r < rows; ++r) {
        const T* x = in + static_cast<size_t>(r) * cols;
        T* y = out + static_cast<size_t>(r) * cols;
        T mu = T(0);
        for (int j = 0; j < cols; ++j) mu += x[j];
        mu /= static_cast<T>(cols);
        T var = T(0);
        for (int j = 0; j < cols; ++j) {
            const T d = x[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (int j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs * gain[j] + bias[j];
    }
}

template <typename T>
GDT_NOINLINE void layernorm_bwd_dx(T* dx, const T* dy, const T* in, const T* gain,
                      const T* mean, const T* rstd, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const T* x = in + static_cast<size_t>(r) * cols;
        const T* g = dy + static_cast<size_t>(r) * cols;
        T* d = dx + static_cast<size_t>(r) * cols;
        const T mu = mean[r];
        const T rs = rstd[r];
        T s1 = T(0), s2 = T(0);
        for (int j = 0; j < cols; ++j) {
            const T xh = (x[j] - mu) * rs;
            const T dxh = g[j] * gain[j];
            s1 += dxh;
            s2 += dxh * xh;
        }
        s1 /= static_cast<T>(cols);
        s2 /= static_cast<T>(cols);
        for (int j = 0; j < cols; ++j) {
            const T xh = (x[j] - mu) * rs;
            const T dxh = g[j] * gain[j];
            d[j] = rs * (dxh - s1 - xh * s2);
        }
    }
}

// cross-row reduction, serial in both variants
template <typename T>
GDT_NOINLINE void layernorm_bwd_params(T* dgain, T* dbias, const T* dy, const T* in,
                          const T* mean, const T* rstd, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const T* x = in + static_cast<size_t>(r) * cols;
        const T* g = dy + static_cast<size_t>(r) * cols;
        const T mu = mean[r];
        const T rs = rstd[r];
        for (int j = 0; j < cols; ++j) {
            dgain[j] += g[j] * (x[j] - mu) * rs;
            dbias[j] += g[j];
        }
    }
}

template <typename T>
GDT_NOINLINE void gelu(T* out, const T* in, size_t n) {
    const T k = static_cast<T>(kGeluK);
    const T c = static_cast<T>(kGeluC);
    for (size_t i = 0; i < n; ++i) {
        const T x = in[i];
        const T t = std::tanh(k * (x + c * x * x * x));
        out[i] = T(0.5) * x * (T(1) + t);
    }
}

template <typename T>
GDT_NOINLINE void gelu_bwd(T* dx, const T* in, const T* dy, size_t n) {
    const T k = static_cast<T>(kGeluK);
    const T c = static_cast<T>(kGeluC);
    for (size_t i = 0; i < n; ++i) {
        const T x = in[i];
        const T t = std::tanh(k * (x + c * x * x * x));
        const T dt = (T(1) - t * t) * k * (T(1) + T(3) * c * x * x);
        dx[i] = dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * x * dt);
    }
}

}  // namespace ref

namespace par {

// contiguous row range [lo,hi) owned by the calling thread
inline void thread_block(int rows, int& lo, int& hi) {
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
    lo = static_cast<int>(static_cast<long long>(rows) * tid / nt);
    hi = static_cast<int>(static_cast<long long>(rows) * (tid + 1) / nt);
}

template <typename T>
void matmul_nn(T* C, const T* A, const T* B, int M, int K, int N, bool accum) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(M, lo, hi);
        if (hi > lo)
            ref::matmul_nn(C + static_cast<size_t>(lo) * N, A + static_cast<size_t>(lo) * K,
                           B, hi - lo, K, N, accum);
    }
}

template <typename T>
void transpose(T* out, const T* in, int R, int C) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(C, lo, hi);
        if (hi > lo) ref::transpose_cols(out, in, R, C, lo, hi);
    }
}

template <typename T>
void matmul_tn(T* C, const T* A, const T* B, int M, int K, int N, bool accum) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(M, lo, hi);
        if (hi > lo) ref::matmul_tn_rows(C, A, B, M, K, N, lo, hi, accum);
    }
}

template <typename T>
void softmax_rows(T* out, const T* in, const uint8_t* mask, int rows, int cols) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(rows, lo, hi);
        if (hi > lo)
            ref::softmax_rows(out + static_cast<size_t>(lo) * cols,
                              in + static_cast<size_t>(lo) * cols,
                              mask ? mask + static_cast<size_t>(lo) * cols : nullptr,
                              hi - lo, cols);
    }
}

template <typename T>
void softmax_rows_bwd(T* dx, const T* y, const T* dy, int rows, int cols) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(rows, lo, hi);
        if (hi > lo)
            ref::softmax_rows_bwd(dx + static_cast<size_t>(lo) * cols,
                                  y + static_cast<size_t>(lo) * cols,
                                  dy + static_cast<size_t>(lo) * cols, hi - lo, cols);
    }
}

template <typename T>
void layernorm(T* out, T* mean, T* rstd, const T* in, const T* gain,
               const T* bias, int rows, int cols, T eps) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(rows, lo, hi);
        if (hi > lo)
            ref::layernorm(out + static_cast<size_t>(lo) * cols, mean + lo, rstd + lo,
                           in + static_cast<size_t>(lo) * cols, gain, bias, hi - lo,
                           cols, eps);
    }
}

template <typename T>
void layernorm_bwd_dx(T* dx, const T* dy, const T* in, const T* gain,
                      const T* mean, const T* rstd, int rows, int cols) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(rows, lo, hi);
        if (hi > lo)
            ref::layernorm_bwd_dx(dx + static_cast<size_t>(lo) * cols,
                                  dy + static_cast<size_t>(lo) * cols,
                                  in + static_cast<size_t>(lo) * cols, gain, mean + lo,
                                  rstd + lo, hi - lo, cols);
    }
}

template <typename T>
void gelu(T* out, const T* in, size_t n) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(static_cast<int>(n), lo, hi);
        if (hi > lo) ref::gelu(out + lo, in + lo, static_cast<size_t>(hi - lo));
    }
}

template <typename T>
void gelu_bwd(T* dx, const T* in, const T* dy, size_t n) {
#pragma omp parallel
    {
        int lo, hi;
        thread_block(static_cast<int>(n), lo, hi);
        if (hi > lo) ref::gelu_bwd(dx + lo, in + lo, dy + lo, static_cast<size_t>(hi - lo));
    }
}

}  // namespace par

// Work thresholds below which threading overhead dominates.
inline constexpr size_t kParFlops = 1 << 15;
inline constexpr size_t kParElems = 1 << 14;

template <typename T>
void matmul_nn(T* C, const T* A, const T* B, int M, int K, int N, bool accum) {
    const size_t work = static_cast<size_t>(M) * K * N;
    if (work >= kParFlops)
        par::matmul_nn(C, A, B, M, K, N, accum);
    else
        ref::matmul_nn(C, A, B, M, K, N, accum);
}

template <typename T>
void transpose(T* out, const T* in, int R, int C) {
    if (static_cast<size_t>(R) * C >= kParElems)
        par::transpose(out, in, R, C);
    else
        ref::transpose(out, in, R, C);
}

template <typename T>
void matmul_tn(T* C, const T* A, const T* B, int M, int K, int N, bool accum) {
    const size_t work = static_cast<size_t>(M) * K * N;
    if (work >= kParFlops)
        par::matmul_tn(C, A, B, M, K, N, accum);
    else
        ref::matmul_tn(C, A, B, M, K, N, accum);
}

template <typename T>
void softmax_rows(T* out, const T* in, const uint8_t* mask, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols >= kParElems)
        par::softmax_rows(out, in, mask, rows, cols);
    else
        ref::softmax_rows(out, in, mask, rows, cols);
}

template <typename T>
void softmax_rows_bwd(T* dx, const T* y, const T* dy, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols >= kParElems)
        par::softmax_rows_bwd(dx, y, dy, rows, cols);
    else
        ref::softmax_rows_bwd(dx, y, dy, rows, cols);
}

template <typename T>
void layernorm(T* out, T* mean, T* rstd, const T* in, const T* gain,
               const T* bias, int rows, int cols, T eps) {
    if (static_cast<size_t>(rows) * cols >= kParElems)
        par::layernorm(out, mean, rstd, in, gain, bias, rows, cols, eps);
    else
        ref::layernorm(out, mean, rstd, in, gain, bias, rows, cols, eps);
}

template <typename T>
void layernorm_bwd_dx(T* dx, const T* dy, const T* in, const T* gain,
                      const T* mean, const T* rstd, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols >= kParElems)
        par::layernorm_bwd_dx(dx, dy, in, gain, mean, rstd, rows, cols);
    else
        ref::layernorm_bwd_dx(dx, dy, in, gain, mean, rstd, rows, cols);
}

template <typename T>
void layernorm_bwd_params(T* dgain, T* dbias, const T* dy, const T* in,
                          const T* mean, const T* rstd, int rows, int cols) {
    ref::layernorm_bwd_params(dgain, dbias, dy, in, mean, rstd, rows, cols);
}

template <typename T>
void gelu(T* out, const T* in, size_t n) {
    if (n >= kParElems)
        par::gelu(out, in, n);
    else
        ref::gelu(out, in, n);
}

template <typename T>
void gelu_bwd(T* dx, const T* in, const T* dy, size_t n) {
    if (n >= kParElems)
        par::gelu_bwd(dx, in, dy, n);
    else
        ref::gelu_bwd(dx, in, dy, n);
}

}  // namespace gdt::kernels
