#pragma once
// Small numeric summaries shared by tests, metrics, and evaluation reports.
// All accumulation is done in double regardless of input precision.

#include <cmath>
#include <cstddef>
#include <limits>

namespace gdt {

template <typename T>
double sample_mean(const T* p, size_t n) {
    double acc = 0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]);
    return n ? acc / static_cast<double>(n) : 0.0;
}

// Unbiased (n-1 denominator) sample variance.
template <typename T>
double sample_var(const T* p, size_t n) {
    if (n < 2) return 0.0;
    double m = sample_mean(p, n);
    double acc = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(p[i]) - m;
        acc += d * d;
    }
    return acc / static_cast<double>(n - 1);
}

template <typename T>
double max_abs_diff(const T* a, const T* b, size_t n) {
    double worst = 0;
    for (size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst;
}

template <typename T>
double mse_of(const T* a, const T* b, size_t n) {
    double acc = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

// peak is the full data range (2.0 for signals in [-1,1]). Identical inputs
// give +inf.
template <typename T>
double psnr_of(const T* a, const T* b, size_t n, double peak = 2.0) {
    double m = mse_of(a, b, n);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

}  // namespace gdt
