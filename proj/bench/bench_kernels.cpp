// Times the serial reference kernels against the OpenMP variants and checks
// they agree bitwise on the benchmark inputs.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include <omp.h>

#include "gdt/kernels.hpp"
#include "gdt/rng.hpp"

using Clock = std::chrono::steady_clock;

template <typename F>
double time_best_ms(F&& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        auto t1 = Clock::now();
        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (ms < best) best = ms;
    }
    return best;
}

int main() {
    gdt::Rng rng(7);
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %10s %10s %8s %8s\n", "kernel", "ref ms", "omp ms", "speedup", "match");

    auto report = [](const char* name, double tr, double tp, bool match) {
        std::printf("%-28s %10.3f %10.3f %8.2f %8s\n", name, tr, tp, tr / tp,
                    match ? "exact" : "DIFF");
    };

    {
        const int M = 512, K = 512, N = 512;
        std::vector<float> A(static_cast<size_t>(M) * K), B(static_cast<size_t>(K) * N);
        std::vector<float> Cr(static_cast<size_t>(M) * N), Cp(Cr.size());
        rng.fill_normal(A.data(), A.size(), 1.0);
        rng.fill_normal(B.data(), B.size(), 1.0);
        double tr = time_best_ms([&] { gdt::kernels::ref::matmul_nn(Cr.data(), A.data(), B.data(), M, K, N, false); }, 3);
        double tp = time_best_ms([&] { gdt::kernels::par::matmul_nn(Cp.data(), A.data(), B.data(), M, K, N, false); }, 3);
        report("matmul_nn 512x512x512 f32", tr, tp,
               std::memcmp(Cr.data(), Cp.data(), Cr.size() * sizeof(float)) == 0);
    }
    {
        const int M = 512, K = 512, N = 512;
        std::vector<float> A(static_cast<size_t>(K) * M), B(static_cast<size_t>(K) * N);
        std::vector<float> Cr(static_cast<size_t>(M) * N), Cp(Cr.size());
        rng.fill_normal(A.data(), A.size(), 1.0);
        rng.fill_normal(B.data(), B.size(), 1.0);
        double tr = time_best_ms([&] { gdt::kernels::ref::matmul_tn(Cr.data(), A.data(), B.data(), M, K, N, false); }, 3);
        double tp = time_best_ms([&] { gdt::kernels::par::matmul_tn(Cp.data(), A.data(), B.data(), M, K, N, false); }, 3);
        report("matmul_tn 512x512x512 f32", tr, tp,
               std::memcmp(Cr.data(), Cp.data(), Cr.size() * sizeof(float)) == 0);
    }
    {
        const int R = 2048, C = 2048;
        std::vector<float> x(static_cast<size_t>(R) * C), yr(x.size()), yp(x.size());
        rng.fill_normal(x.data(), x.size(), 1.0);
        double tr = time_best_ms([&] { gdt::kernels::ref::transpose(yr.data(), x.data(), R, C); }, 5);
        double tp = time_best_ms([&] { gdt::kernels::par::transpose(yp.data(), x.data(), R, C); }, 5);
        report("transpose 2048x2048", tr, tp,
               std::memcmp(yr.data(), yp.data(), yr.size() * sizeof(float)) == 0);
    }
    {
        const int rows = 4096, cols = 256;
        std::vector<float> x(static_cast<size_t>(rows) * cols), yr(x.size()), yp(x.size());
        rng.fill_normal(x.data(), x.size(), 2.0);
        std::vector<uint8_t> mask(x.size());
        for (size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3) != 0;
        for (int r = 0; r < rows; ++r) mask[static_cast<size_t>(r) * cols] = 1;
        double tr = time_best_ms([&] { gdt::kernels::ref::softmax_rows(yr.data(), x.data(), mask.data(), rows, cols); }, 5);
        double tp = time_best_ms([&] { gdt::kernels::par::softmax_rows(yp.data(), x.data(), mask.data(), rows, cols); }, 5);
        report("softmax 4096x256 masked", tr, tp,
               std::memcmp(yr.data(), yp.data(), yr.size() * sizeof(float)) == 0);
    }
    {
        const int rows = 4096, cols = 256;
        std::vector<float> x(static_cast<size_t>(rows) * cols), yr(x.size()), yp(x.size());
        std::vector<float> gain(cols, 1.1f), bias(cols, 0.1f);
        std::vector<float> mr(rows), rr(rows), mp(rows), rp(rows);
        rng.fill_normal(x.data(), x.size(), 2.0);
        double tr = time_best_ms([&] { gdt::kernels::ref::layernorm(yr.data(), mr.data(), rr.data(), x.data(), gain.data(), bias.data(), rows, cols, 1e-5f); }, 5);
        double tp = time_best_ms([&] { gdt::kernels::par::layernorm(yp.data(), mp.data(), rp.data(), x.data(), gain.data(), bias.data(), rows, cols, 1e-5f); }, 5);
        report("layernorm 4096x256", tr, tp,
               std::memcmp(yr.data(), yp.data(), yr.size() * sizeof(float)) == 0);
    }
    {
        const size_t n = 1 << 22;
        std::vector<float> x(n), yr(n), yp(n);
        rng.fill_normal(x.data(), n, 1.5);
        double tr = time_best_ms([&] { gdt::kernels::ref::gelu(yr.data(), x.data(), n); }, 5);
        double tp = time_best_ms([&] { gdt::kernels::par::gelu(yp.data(), x.data(), n); }, 5);
        report("gelu 4M", tr, tp, std::memcmp(yr.data(), yp.data(), n * sizeof(float)) == 0);
    }
    return 0;
}
