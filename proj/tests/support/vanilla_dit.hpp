#pragma once
// Single-image reference transformer in plain double loops, structurally
// identical to the group model but with no group machinery at all: dense
// attention, direct-index patchify, handwritten layer norm / gelu / ffn.
// Consumes the same ParamStore so reduction tests can compare outputs on the
// same weights.

#include <cmath>
#include <vector>

#include "attention_oracle.hpp"
#include "gdt/model.hpp"

namespace gdt::testsupport {
namespace vd {

struct Mat {
    int r = 0, c = 0;
    std::vector<double> v;
    Mat() = default;
    Mat(int r_, int c_) : r(r_), c(c_), v(static_cast<size_t>(r_) * c_, 0.0) {}
    double& at(int i, int j) { return v[static_cast<size_t>(i) * c + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * c + j]; }
};

inline Mat from_tensor(const Tensor<double>& t) {
    Mat m;
    if (t.rank() == 1) {
        m.r = 1;
        m.c = t.dim(0);
    } else {
        m.r = t.dim(0);
        m.c = t.dim(1);
    }
    m.v.assign(t.data(), t.data() + t.numel());
    return m;
}

inline Tensor<double> to_tensor(const Mat& m) {
    return Tensor<double>::from({m.r, m.c}, m.v);
}

inline Mat mm(const Mat& a, const Mat& b) {
    Mat out(a.r, b.c);
    for (int i = 0; i < a.r; ++i)
        for (int j = 0; j < b.c; ++j) {
            double acc = 0;
            for (int k = 0; k < a.c; ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

inline Mat add_row(const Mat& a, const Mat& row) {
    Mat out = a;
    for (int i = 0; i < a.r; ++i)
        for (int j = 0; j < a.c; ++j) out.at(i, j) += row.at(0, j);
    return out;
}

inline Mat ln(const Mat& x) {
    Mat out(x.r, x.c);
    for (int i = 0; i < x.r; ++i) {
        double mean = 0;
        for (int j = 0; j < x.c; ++j) mean += x.at(i, j);
        mean /= x.c;
        double var = 0;
        for (int j = 0; j < x.c; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
        var /= x.c;
        double rstd = 1.0 / std::sqrt(var + 1e-5);
        for (int j = 0; j < x.c; ++j) out.at(i, j) = (x.at(i, j) - mean) * rstd;
    }
    return out;
}

inline double gelu1(double x) {
    const double k = 0.7978845608028654, c = 0.044715;
    return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x)));
}

inline Mat gelu(const Mat& x) {
    Mat out = x;
    for (double& e : out.v) e = gelu1(e);
    return out;
}

inline Mat modulate(const Mat& x, const Mat& scale, const Mat& shift) {
    Mat out(x.r, x.c);
    for (int i = 0; i < x.r; ++i)
        for (int j = 0; j < x.c; ++j)
            out.at(i, j) = x.at(i, j) * (1.0 + scale.at(0, j)) + shift.at(0, j);
    return out;
}

inline Mat gate_add(const Mat& x, const Mat& y, const Mat& g) {
    Mat out = x;
    for (int i = 0; i < x.r; ++i)
        for (int j = 0; j < x.c; ++j) out.at(i, j) += g.at(0, j) * y.at(i, j);
    return out;
}

inline Mat chunk_of(const Mat& row, int idx, int dim) {
    Mat out(1, dim);
    for (int j = 0; j < dim; ++j) out.at(0, j) = row.at(0, idx * dim + j);
    return out;
}

inline Mat sinusoid(double pos, int dim) {
    Mat out(1, dim);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double f = half == 1 ? 1.0 : std::pow(10000.0, -double(i) / double(half - 1));
        out.at(0, i) = std::sin(pos * f);
        out.at(0, half + i) = std::cos(pos * f);
    }
    return out;
}

}  // namespace vd

// Reference forward for one image. Implements the same architecture with
// dense attention (the n=1 group mask keeps everything).
inline Tensor<double> vanilla_dit_forward(const ModelConfig& cfg, ParamStore<double>& ps,
                                          const Tensor<double>& image,
                                          const std::vector<int>& ctx_ids, double t_pos) {
    using namespace vd;
    int G = cfg.grid(), P = cfg.patch, D = cfg.dim;
    int L = cfg.tokens_per_image();

    // direct-index patchify
    Mat tok(L, cfg.patch_dim_in());
    for (int gy = 0; gy < G; ++gy)
        for (int gx = 0; gx < G; ++gx)
            for (int c = 0; c < cfg.channels_in; ++c)
                for (int py = 0; py < P; ++py)
                    for (int px = 0; px < P; ++px)
                        tok.at(gy * G + gx, c * P * P + py * P + px) =
                            image.at(static_cast<size_t>(
                                (c * cfg.image_size + gy * P + py) * cfg.image_size +
                                gx * P + px));

    auto W = [&](const std::string& name) { return from_tensor(ps.at(name)); };

    Mat x = add_row(mm(tok, W("patch_embed.w")), W("patch_embed.b"));
    Mat pos = W("pos_img");
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < D; ++j) x.at(i, j) += pos.at(i, j);

    Mat ctx(static_cast<int>(ctx_ids.size()), D);
    {
        Mat table = W("ctx.table"), cpos = W("ctx.pos");
        for (size_t i = 0; i < ctx_ids.size(); ++i)
            for (int j = 0; j < D; ++j)
                ctx.at(static_cast<int>(i), j) =
                    table.at(ctx_ids[i], j) + cpos.at(static_cast<int>(i), j);
    }

    Mat t_emb = add_row(mm(gelu(add_row(mm(sinusoid(t_pos, D), W("tmlp.w1")), W("tmlp.b1"))),
                           W("tmlp.w2")),
                        W("tmlp.b2"));

    auto run_attn = [&](const Mat& q, const Mat& kv, const std::string& prefix) {
        auto w = attn_view(ps, prefix, cfg.heads);
        return from_tensor(oracle_mha(to_tensor(q), to_tensor(kv), w, nullptr).out);
    };
    auto run_ffn = [&](const Mat& h, const std::string& pre) {
        return add_row(mm(gelu(add_row(mm(h, W(pre + ".ffn.w1")), W(pre + ".ffn.b1"))),
                          W(pre + ".ffn.w2")),
                       W(pre + ".ffn.b2"));
    };

    bool joint_form = cfg.variant == Variant::EncoderOnly;
    Mat seq;
    if (joint_form) {
        seq = Mat(ctx.r + L, D);
        for (int i = 0; i < ctx.r; ++i)
            for (int j = 0; j < D; ++j) seq.at(i, j) = ctx.at(i, j);
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < D; ++j) seq.at(ctx.r + i, j) = x.at(i, j);
    } else {
        seq = x;
    }

    for (int b = 0; b < cfg.depth; ++b) {
        std::string pre = "blk" + std::to_string(b);
        Mat mrow = add_row(mm(t_emb, W(pre + ".mod.w")), W(pre + ".mod.b"));
        Mat b1 = chunk_of(mrow, 0, D), s1 = chunk_of(mrow, 1, D), g1 = chunk_of(mrow, 2, D);
        Mat b2 = chunk_of(mrow, 3, D), s2 = chunk_of(mrow, 4, D), g2 = chunk_of(mrow, 5, D);

        Mat h = modulate(ln(seq), s1, b1);
        seq = gate_add(seq, run_attn(h, h, pre + ".attn"), g1);
        if (!joint_form && ctx.r > 0) {
            Mat q = ln(seq);
            Mat cr = run_attn(q, ctx, pre + ".cross");
            for (int i = 0; i < seq.r; ++i)
                for (int j = 0; j < D; ++j) seq.at(i, j) += cr.at(i, j);
        }
        Mat h2 = modulate(ln(seq), s2, b2);
        seq = gate_add(seq, run_ffn(h2, pre), g2);
    }

    Mat frow = add_row(mm(t_emb, W("final.mod.w")), W("final.mod.b"));
    Mat fshift = chunk_of(frow, 0, D), fscale = chunk_of(frow, 1, D);
    // image rows only
    Mat img_rows(L, D);
    int base = joint_form ? ctx.r : 0;
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < D; ++j) img_rows.at(i, j) = seq.at(base + i, j);
    Mat out_tok = add_row(mm(modulate(ln(img_rows), fscale, fshift), W("final.w")),
                          W("final.b"));

    auto out = Tensor<double>::zeros({cfg.channels_out, cfg.image_size, cfg.image_size});
    for (int gy = 0; gy < G; ++gy)
        for (int gx = 0; gx < G; ++gx)
            for (int c = 0; c < cfg.channels_out; ++c)
                for (int py = 0; py < P; ++py)
                    for (int px = 0; px < P; ++px)
                        out.data()[static_cast<size_t>(
                            (c * cfg.image_size + gy * P + py) * cfg.image_size + gx * P +
                            px)] = out_tok.at(gy * G + gx, c * P * P + py * P + px);
    return out;
}

}  // namespace gdt::testsupport
