#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "gdt/kernels.hpp"
#include "gdt/mask.hpp"
#include "gdt/tensor.hpp"

// Reverse-mode autodiff. Ops run their forward pass eagerly through the
// kernel layer and, when any input can reach a requires_grad leaf, push a
// backward closure onto the tape. backward(loss) replays closures in reverse
// recording order; closures accumulate (+=) into input grads, so shared
// inputs and repeated backward calls compose correctly. Intermediate grads
// are zeroed at the start of each backward, leaf grads are left to the
// caller (optimizer) to reset.

namespace gdt {

template <typename T>
class Tape {
public:
    // out: tensor produced by the op; bwd: closure accumulating input grads
    void record(const Tensor<T>& out, std::function<void()> bwd) {
        outs_.push_back(out);
        connected_.insert(out.key());
        nodes_.push_back(std::move(bwd));
    }

    bool connected(const Tensor<T>& t) const {
        if (!recording_) return false;
        return t.requires_grad() || connected_.count(t.key()) != 0;
    }

    // Inference mode: ops skip recording entirely, forward math unchanged.
    void set_recording(bool on) { recording_ = on; }
    bool recording() const { return recording_; }

    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
        if (!connected(loss))
            throw ContractError("backward: loss is not connected to any requires_grad leaf");
        for (auto& t : outs_) t.zero_grad();
        Tensor<T> l = loss;
        l.ensure_grad();
        l.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    // drops every node and saved activation handle
    void clear() {
        nodes_.clear();
        outs_.clear();
        connected_.clear();
    }

    size_t node_count() const { return nodes_.size(); }

private:
    std::vector<std::function<void()>> nodes_;
    std::vector<Tensor<T>> outs_;
    std::unordered_set<const void*> connected_;
    bool recording_ = true;
};

namespace detail {

inline void check_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b)
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                         shape_str(b) + " differ");
}

template <typename T>
void axpy(T* dst, const T* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

inline int last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

inline size_t row_count(const Shape& s) {
    size_t n = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i) n *= static_cast<size_t>(s[i]);
    return n;
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("add", a.shape(), b.shape());
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    const bool ca = tape.connected(a), cb = tape.connected(b);
    if (ca || cb)
        tape.record(out, [out, a, b, ca, cb]() mutable {
            const T* g = out.grad();
            if (ca) detail::axpy(a.grad(), g, a.numel());
            if (cb) detail::axpy(b.grad(), g, b.numel());
        });
    return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("sub", a.shape(), b.shape());
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
    const bool ca = tape.connected(a), cb = tape.connected(b);
    if (ca || cb)
        tape.record(out, [out, a, b, ca, cb]() mutable {
            const T* g = out.grad();
            if (ca) detail::axpy(a.grad(), g, a.numel());
            if (cb) {
                T* db = b.grad();
                for (size_t i = 0; i < b.numel(); ++i) db[i] -= g[i];
            }
        });
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("mul", a.shape(), b.shape());
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
    const bool ca = tape.connected(a), cb = tape.connected(b);
    if (ca || cb)
        tape.record(out, [out, a, b, ca, cb]() mutable {
            const T* g = out.grad();
            if (ca) {
                T* da = a.grad();
                const T* pb2 = b.data();
                for (size_t i = 0; i < a.numel(); ++i) da[i] += g[i] * pb2[i];
            }
            if (cb) {
                T* db = b.grad();
                const T* pa2 = a.data();
                for (size_t i = 0; i < b.numel(); ++i) db[i] += g[i] * pa2[i];
            }
        });
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, double c) {
    Tensor<T> out(a.shape());
    const T cc = static_cast<T>(c);
    const T* pa = a.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * cc;
    if (tape.connected(a))
        tape.record(out, [out, a, cc]() mutable {
            const T* g = out.grad();
            T* da = a.grad();
            for (size_t i = 0; i < a.numel(); ++i) da[i] += g[i] * cc;
        });
    return out;
}

template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& a, double c) {
    Tensor<T> out(a.shape());
    const T cc = static_cast<T>(c);
    const T* pa = a.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + cc;
    if (tape.connected(a))
        tape.record(out, [out, a]() mutable { detail::axpy(a.grad(), out.grad(), a.numel()); });
    return out;
}

// ---- broadcast over rows (v spans the last dim) ----

template <typename T>
Tensor<T> add_rowvec(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& v) {
    const int D = detail::last_dim(x.shape());
    if (v.rank() != 1 || v.dim(0) != D)
        throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) +
                         " does not span last dim of " + shape_str(x.shape()));
    const size_t rows = detail::row_count(x.shape());
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pv = v.data();
    T* po = out.data();
    for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < D; ++j) po[r * D + j] = px[r * D + j] + pv[j];
    const bool cx = tape.connected(x), cv = tape.connected(v);
    if (cx || cv)
        tape.record(out, [out, x, v, cx, cv, rows, D]() mutable {
            const T* g = out.grad();
            if (cx) detail::axpy(x.grad(), g, x.numel());
            if (cv) {
                T* dv = v.grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int j = 0; j < D; ++j) dv[j] += g[r * D + j];
            }
        });
    return out;
}

template <typename T>
Tensor<T> mul_rowvec(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& v) {
    const int D = detail::last_dim(x.shape());
    if (v.rank() != 1 || v.dim(0) != D)
        throw ShapeError("mul_rowvec: vector " + shape_str(v.shape()) +
                         " does not span last dim of " + shape_str(x.shape()));
    const size_t rows = detail::row_count(x.shape());
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T* pv = v.data();
    T* po = out.data();
    for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < D; ++j) po[r * D + j] = px[r * D + j] * pv[j];
    const bool cx = tape.connected(x), cv = tape.connected(v);
    if (cx || cv)
        tape.record(out, [out, x, v, cx, cv, rows, D]() mutable {
            const T* g = out.grad();
            const T* px2 = x.data();
            const T* pv2 = v.data();
            if (cx) {
                T* dx = x.grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int j = 0; j < D; ++j) dx[r * D + j] += g[r * D + j] * pv2[j];
            }
            if (cv) {
                T* dv = v.grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int j = 0; j < D; ++j) dv[j] += g[r * D + j] * px2[r * D + j];
            }
        });
    return out;
}

// ---- matmul ----

namespace detail {

// da += g[M,N] * b[K,N]^T via explicit transpose, db += a[M,K]^T * g[M,N]
template <typename T>
void matmul_bwd_2d(T* da, T* db, const T* g, const T* a, const T* b, int M, int K, int N) {
    if (da) {
        std::vector<T> bt(static_cast<size_t>(N) * K);
        kernels::transpose(bt.data(), b, K, N);
        kernels::matmul_nn(da, g, bt.data(), M, N, K, true);
    }
    if (db) kernels::matmul_tn(db, a, g, K, M, N, true);
}

}  // namespace detail

// [M,K]@[K,N]; [B,M,K]@[B,K,N]; [B,M,K]@[K,N] (right operand shared)
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    int B = 1, M, K, N;
    bool batched_b;
    if (sa.size() == 2 && sb.size() == 2) {
        M = sa[0];
        K = sa[1];
        batched_b = false;
    } else if (sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0]) {
        B = sa[0];
        M = sa[1];
        K = sa[2];
        batched_b = true;
    } else if (sa.size() == 3 && sb.size() == 2) {
        B = sa[0];
        M = sa[1];
        K = sa[2];
        batched_b = false;
    } else {
        throw ShapeError("matmul: unsupported shapes " + shape_str(sa) + " and " + shape_str(sb));
    }
    const int bK = sb[sb.size() - 2];
    N = sb[sb.size() - 1];
    if (bK != K)
        throw ShapeError("matmul: inner dims differ, " + shape_str(sa) + " vs " + shape_str(sb));

    Shape os = sa;
    os[os.size() - 1] = N;
    Tensor<T> out(os);
    const size_t a_step = static_cast<size_t>(M) * K;
    const size_t b_step = batched_b ? static_cast<size_t>(K) * N : 0;
    const size_t o_step = static_cast<size_t>(M) * N;
    for (int i = 0; i < B; ++i)
        kernels::matmul_nn(out.data() + i * o_step, a.data() + i * a_step,
                           b.data() + i * b_step, M, K, N, false);

    const bool ca = tape.connected(a), cb = tape.connected(b);
    if (ca || cb)
        tape.record(out, [out, a, b, ca, cb, B, M, K, N, a_step, b_step, o_step]() mutable {
            const T* g = out.grad();
            T* da = ca ? a.grad() : nullptr;
            T* db = cb ? b.grad() : nullptr;
            for (int i = 0; i < B; ++i)
                detail::matmul_bwd_2d(da ? da + i * a_step : nullptr,
                                      db ? db + i * b_step : nullptr, g + i * o_step,
                                      a.data() + i * a_step, b.data() + i * b_step, M, K, N);
        });
    return out;
}

// ---- shape movement ----

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    Tensor<T> out(std::move(shape));
    std::copy(x.data(), x.data() + x.numel(), out.data());
    if (tape.connected(x))
        tape.record(out, [out, x]() mutable { detail::axpy(x.grad(), out.grad(), x.numel()); });
    return out;
}

template <typename T>
Tensor<T> permute(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r)
        throw ShapeError("permute: axes count " + std::to_string(axes.size()) +
                         " vs rank " + std::to_string(r));
    std::vector<bool> seen(r, false);
    Shape os(r);
    for (int i = 0; i < r; ++i) {
        if (axes[i] < 0 || axes[i] >= r || seen[axes[i]])
            throw ShapeError("permute: invalid axes");
        seen[axes[i]] = true;
        os[i] = x.dim(axes[i]);
    }
    std::vector<size_t> in_strides(r, 1), gather(r);
    for (int i = r - 2; i >= 0; --i)
        in_strides[i] = in_strides[i + 1] * static_cast<size_t>(x.dim(i + 1));
    for (int i = 0; i < r; ++i) gather[i] = in_strides[axes[i]];

    Tensor<T> out(os);
    const size_t n = out.numel();
    T* po = out.data();
    const T* px = x.data();
    std::vector<int> idx(r, 0);
    for (size_t o = 0; o < n; ++o) {
        size_t src = 0;
        for (int i = 0; i < r; ++i) src += static_cast<size_t>(idx[i]) * gather[i];
        po[o] = px[src];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < os[i]) break;
            idx[i] = 0;
        }
    }
    if (tape.connected(x))
        tape.record(out, [out, x, os, gather, r]() mutable {
            const T* g = out.grad();
            T* dx = x.grad();
            std::vector<int> ix(r, 0);
            const size_t n2 = out.numel();
            for (size_t o = 0; o < n2; ++o) {
                size_t src = 0;
                for (int i = 0; i < r; ++i) src += static_cast<size_t>(ix[i]) * gather[i];
                dx[src] += g[o];
                for (int i = r - 1; i >= 0; --i) {
                    if (++ix[i] < os[i]) break;
                    ix[i] = 0;
                }
            }
        });
    return out;
}

// rank-2 concat along axis 0; inverse of split_rows
template <typename T>
Tensor<T> concat_rows(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int D = parts[0].dim(parts[0].rank() - 1);
    int rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(1) != D)
            throw ShapeError("concat_rows: shape " + shape_str(p.shape()) +
                             " incompatible with width " + std::to_string(D));
        rows += p.dim(0);
    }
    Tensor<T> out({rows, D});
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.numel(), out.data() + off);
        off += p.numel();
    }
    bool any = false;
    std::vector<bool> conn(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) {
        conn[i] = tape.connected(parts[i]);
        any = any || conn[i];
    }
    if (any)
        tape.record(out, [out, parts, conn]() mutable {
            const T* g = out.grad();
            size_t o = 0;
            for (size_t i = 0; i < parts.size(); ++i) {
                if (conn[i]) detail::axpy(parts[i].grad(), g + o, parts[i].numel());
                o += parts[i].numel();
            }
        });
    return out;
}

// rank-2 split along axis 0; inverse of concat_rows
template <typename T>
std::vector<Tensor<T>> split_rows(Tape<T>& tape, const Tensor<T>& x,
                                  const std::vector<int>& sizes) {
    if (x.rank() != 2) throw ShapeError("split_rows: need rank 2, got " + shape_str(x.shape()));
    int total = 0;
    for (int s : sizes) total += s;
    if (total != x.dim(0))
        throw ShapeError("split_rows: sizes sum " + std::to_string(total) + " != rows " +
                         std::to_string(x.dim(0)));
    const int D = x.dim(1);
    const bool cx = tape.connected(x);
    std::vector<Tensor<T>> parts;
    size_t off = 0;
    for (int s : sizes) {
        Tensor<T> p({s, D});
        std::copy(x.data() + off, x.data() + off + p.numel(), p.data());
        if (cx) {
            size_t at = off;
            tape.record(p, [p, x, at]() mutable { detail::axpy(x.grad() + at, p.grad(), p.numel()); });
        }
        off += p.numel();
        parts.push_back(std::move(p));
    }
    return parts;
}

// rank-2 column slice [lo,hi)
template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, int lo, int hi) {
    if (x.rank() != 2 || lo < 0 || hi > x.dim(1) || lo >= hi)
        throw ShapeError("slice_cols: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                         ") on " + shape_str(x.shape()));
    const int R = x.dim(0), C = x.dim(1), W = hi - lo;
    Tensor<T> out({R, W});
    for (int r = 0; r < R; ++r)
        std::copy(x.data() + static_cast<size_t>(r) * C + lo,
                  x.data() + static_cast<size_t>(r) * C + hi,
                  out.data() + static_cast<size_t>(r) * W);
    if (tape.connected(x))
        tape.record(out, [out, x, lo, R, C, W]() mutable {
            const T* g = out.grad();
            T* dx = x.grad();
            for (int r = 0; r < R; ++r)
                for (int j = 0; j < W; ++j)
                    dx[static_cast<size_t>(r) * C + lo + j] += g[static_cast<size_t>(r) * W + j];
        });
    return out;
}

// ---- attention / norm / activation ----

// logits [Q,K] or [H,Q,K]; mask bits [Q,K] shared across heads, null = dense.
// Masked entries get exactly zero probability.
template <typename T>
Tensor<T> masked_softmax(Tape<T>& tape, const Tensor<T>& logits, const MaskPtr& mask) {
    const int r = logits.rank();
    if (r != 2 && r != 3)
        throw ShapeError("masked_softmax: need rank 2 or 3, got " + shape_str(logits.shape()));
    const int H = r == 3 ? logits.dim(0) : 1;
    const int Q = logits.dim(r - 2), K = logits.dim(r - 1);
    if (mask) {
        if (mask->size() != static_cast<size_t>(Q) * K)
            throw ContractError("masked_softmax: mask size " + std::to_string(mask->size()) +
                                " != " + std::to_string(Q) + "x" + std::to_string(K));
        for (int q = 0; q < Q; ++q) {
            bool any = false;
            for (int k = 0; k < K; ++k) any = any || (*mask)[static_cast<size_t>(q) * K + k];
            if (!any)
                throw ContractError("masked_softmax: row " + std::to_string(q) + " fully masked");
        }
    }
    Tensor<T> out(logits.shape());
    const size_t plane = static_cast<size_t>(Q) * K;
    const uint8_t* mbits = mask ? mask->data() : nullptr;
    for (int h = 0; h < H; ++h)
        kernels::softmax_rows(out.data() + h * plane, logits.data() + h * plane, mbits, Q, K);
    if (tape.connected(logits))
        tape.record(out, [out, logits, H, Q, K, plane]() mutable {
            std::vector<T> dx(plane);
            for (int h = 0; h < H; ++h) {
                kernels::softmax_rows_bwd(dx.data(), out.data() + h * plane,
                                          out.grad() + h * plane, Q, K);
                detail::axpy(logits.grad() + h * plane, dx.data(), plane);
            }
        });
    return out;
}

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias) {
    const int D = detail::last_dim(x.shape());
    if (D <= 1) throw ShapeError("layer_norm: last dim must exceed 1");
    if (gain.rank() != 1 || gain.dim(0) != D || bias.rank() != 1 || bias.dim(0) != D)
        throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(D) + "]");
    const size_t rows = detail::row_count(x.shape());
    const T eps = static_cast<T>(1e-5);
    Tensor<T> out(x.shape());
    auto mean = std::make_shared<std::vector<T>>(rows);
    auto rstd = std::make_shared<std::vector<T>>(rows);
    kernels::layernorm(out.data(), mean->data(), rstd->data(), x.data(), gain.data(),
                       bias.data(), static_cast<int>(rows), D, eps);
    const bool cx = tape.connected(x), cg = tape.connected(gain), cb = tape.connected(bias);
    if (cx || cg || cb)
        tape.record(out, [out, x, gain, bias, mean, rstd, rows, D, cx, cg, cb]() mutable {
            const T* g = out.grad();
            if (cx) {
                std::vector<T> dx(x.numel());
                kernels::layernorm_bwd_dx(dx.data(), g, x.data(), gain.data(), mean->data(),
                                          rstd->data(), static_cast<int>(rows), D);
                detail::axpy(x.grad(), dx.data(), x.numel());
            }
            if (cg || cb) {
                std::vector<T> dgain(D, T(0)), dbias(D, T(0));
                kernels::layernorm_bwd_params(dgain.data(), dbias.data(), g, x.data(),
                                              mean->data(), rstd->data(),
                                              static_cast<int>(rows), D);
                if (cg) detail::axpy(gain.grad(), dgain.data(), static_cast<size_t>(D));
                if (cb) detail::axpy(bias.grad(), dbias.data(), static_cast<size_t>(D));
            }
        });
    return out;
}

template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    kernels::gelu(out.data(), x.data(), x.numel());
    if (tape.connected(x))
        tape.record(out, [out, x]() mutable {
            std::vector<T> dx(x.numel());
            kernels::gelu_bwd(dx.data(), x.data(), out.grad(), x.numel());
            detail::axpy(x.grad(), dx.data(), x.numel());
        });
    return out;
}

// table [V,D], ids in [0,V); backward scatter-adds rows
template <typename T>
Tensor<T> embedding(Tape<T>& tape, const Tensor<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2");
    const int V = table.dim(0), D = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= V)
            throw ContractError("embedding: id " + std::to_string(id) + " outside vocab " +
                                std::to_string(V));
    Tensor<T> out({static_cast<int>(ids.size()), D});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table.data() + static_cast<size_t>(ids[i]) * D,
                  table.data() + static_cast<size_t>(ids[i] + 1) * D,
                  out.data() + i * D);
    if (tape.connected(table) && !ids.empty())
        tape.record(out, [out, table, ids, D]() mutable {
            const T* g = out.grad();
            T* dt = table.grad();
            for (size_t i = 0; i < ids.size(); ++i)
                detail::axpy(dt + static_cast<size_t>(ids[i]) * D, g + i * D,
                             static_cast<size_t>(D));
        });
    return out;
}

// ---- reductions / losses ----

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    Tensor<T> out({1});
    T s = T(0);
    const T* px = x.data();
    for (size_t i = 0; i < x.numel(); ++i) s += px[i];
    out.data()[0] = s;
    if (tape.connected(x))
        tape.record(out, [out, x]() mutable {
            const T g = out.grad()[0];
            T* dx = x.grad();
            for (size_t i = 0; i < x.numel(); ++i) dx[i] += g;
        });
    return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    Tensor<T> out({1});
    T s = T(0);
    const T* px = x.data();
    for (size_t i = 0; i < x.numel(); ++i) s += px[i];
    out.data()[0] = s / static_cast<T>(x.numel());
    if (tape.connected(x))
        tape.record(out, [out, x]() mutable {
            const T g = out.grad()[0] / static_cast<T>(x.numel());
            T* dx = x.grad();
            for (size_t i = 0; i < x.numel(); ++i) dx[i] += g;
        });
    return out;
}

template <typename T>
Tensor<T> mse(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
    detail::check_same_shape("mse", pred.shape(), target.shape());
    if (pred.numel() == 0) throw ShapeError("mse: empty tensor");
    Tensor<T> out({1});
    const T* pp = pred.data();
    const T* pt = target.data();
    T s = T(0);
    for (size_t i = 0; i < pred.numel(); ++i) {
        const T d = pp[i] - pt[i];
        s += d * d;
    }
    out.data()[0] = s / static_cast<T>(pred.numel());
    const bool cp = tape.connected(pred), ct = tape.connected(target);
    if (cp || ct)
        tape.record(out, [out, pred, target, cp, ct]() mutable {
            const T g = out.grad()[0] * T(2) / static_cast<T>(pred.numel());
            const T* pp2 = pred.data();
            const T* pt2 = target.data();
            if (cp) {
                T* dp = pred.grad();
                for (size_t i = 0; i < pred.numel(); ++i) dp[i] += g * (pp2[i] - pt2[i]);
            }
            if (ct) {
                T* dt = target.grad();
                for (size_t i = 0; i < pred.numel(); ++i) dt[i] -= g * (pp2[i] - pt2[i]);
            }
        });
    return out;
}

}  // namespace gdt
