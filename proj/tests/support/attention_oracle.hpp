#pragma once
// Naive multi-head attention in plain double loops, independent of the
// kernel and autodiff layers. Exposes the probability tensor so tests can
// verify masked attention equals dense attention with rows zeroed and
// renormalized by hand.

#include <cmath>
#include <vector>

#include "gdt/attention.hpp"
#include "gdt/tensor.hpp"

namespace gdt::testsupport {

struct OracleAttn {
    std::vector<double> probs;  // [H, Lq, Lk]
    Tensor<double> out;         // [Lq, D]
};

// probs_override, when given, bypasses the softmax and uses those
// probabilities directly.
inline OracleAttn oracle_mha(const Tensor<double>& q_in, const Tensor<double>& kv_in,
                             const AttnWeights<double>& w, const MaskBits* mask,
                             const std::vector<double>* probs_override = nullptr) {
    int Lq = q_in.dim(0), D = q_in.dim(1), Lk = kv_in.dim(0);
    int H = w.heads, Dh = D / H;
    auto proj = [D](const Tensor<double>& x, const Tensor<double>& W,
                    const Tensor<double>& b) {
        int L = x.dim(0);
        std::vector<double> out(static_cast<size_t>(L) * D);
        for (int i = 0; i < L; ++i)
            for (int d2 = 0; d2 < D; ++d2) {
                double acc = b.at(static_cast<size_t>(d2));
                for (int d = 0; d < D; ++d)
                    acc += x.at(static_cast<size_t>(i * D + d)) *
                           W.at(static_cast<size_t>(d * D + d2));
                out[static_cast<size_t>(i * D + d2)] = acc;
            }
        return out;
    };
    auto q = proj(q_in, w.wq, w.bq);
    auto k = proj(kv_in, w.wk, w.bk);
    auto v = proj(kv_in, w.wv, w.bv);

    OracleAttn r;
    r.probs.assign(static_cast<size_t>(H) * Lq * Lk, 0.0);
    std::vector<double> merged(static_cast<size_t>(Lq) * D, 0.0);
    double inv = 1.0 / std::sqrt(static_cast<double>(Dh));
    for (int h = 0; h < H; ++h) {
        for (int i = 0; i < Lq; ++i) {
            double* prow = &r.probs[(static_cast<size_t>(h) * Lq + i) * Lk];
            if (probs_override) {
                const double* src =
                    &(*probs_override)[(static_cast<size_t>(h) * Lq + i) * Lk];
                for (int j = 0; j < Lk; ++j) prow[j] = src[j];
            } else {
                double mx = -1e300;
                for (int j = 0; j < Lk; ++j) {
                    if (mask && !(*mask)[static_cast<size_t>(i) * Lk + j]) continue;
                    double s = 0;
                    for (int d = 0; d < Dh; ++d)
                        s += q[static_cast<size_t>(i * D + h * Dh + d)] *
                             k[static_cast<size_t>(j * D + h * Dh + d)];
                    s *= inv;
                    prow[j] = s;
                    mx = std::max(mx, s);
                }
                double denom = 0;
                for (int j = 0; j < Lk; ++j) {
                    if (mask && !(*mask)[static_cast<size_t>(i) * Lk + j]) {
                        prow[j] = 0;
                        continue;
                    }
                    prow[j] = std::exp(prow[j] - mx);
                    denom += prow[j];
                }
                for (int j = 0; j < Lk; ++j) prow[j] /= denom;
            }
            for (int d = 0; d < Dh; ++d) {
                double acc = 0;
                for (int j = 0; j < Lk; ++j)
                    acc += prow[j] * v[static_cast<size_t>(j * D + h * Dh + d)];
                merged[static_cast<size_t>(i * D + h * Dh + d)] = acc;
            }
        }
    }
    r.out = Tensor<double>::zeros({Lq, D});
    for (int i = 0; i < Lq; ++i)
        for (int d2 = 0; d2 < D; ++d2) {
            double acc = w.bo.at(static_cast<size_t>(d2));
            for (int d = 0; d < D; ++d)
                acc += merged[static_cast<size_t>(i * D + d)] *
                       w.wo.at(static_cast<size_t>(d * D + d2));
            r.out.data()[static_cast<size_t>(i * D + d2)] = acc;
        }
    return r;
}

}  // namespace gdt::testsupport
