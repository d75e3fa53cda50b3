#pragma once
// Group diffusion transformer forward pass, both variants.
//   encoder-decoder: grouped self-attention over concatenated image tokens,
//     per-member cross-attention to that member's context, shared FFN.
//   encoder-only: one joint (c_1, x_1, c_2, x_2, ...) sequence under the
//     group mask for both attention and FFN.
// Members are distinguished only by their contexts and the attention
// structure; there is no member-index embedding, which makes member
// permutation an exact symmetry. Timestep conditioning is adaLN-style with
// zero-initialized gates and a zero-initialized output head, so a fresh
// model is the zero function and every block starts as identity. Parameter
// names, shapes, and count are independent of max_group.

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gdt/attention.hpp"
#include "gdt/autograd.hpp"
#include "gdt/config_file.hpp"
#include "gdt/group_layout.hpp"
#include "gdt/schedule.hpp"

namespace gdt {

enum class Variant { EncoderDecoder, EncoderOnly };

inline std::string variant_str(Variant v) {
    return v == Variant::EncoderDecoder ? "encoder-decoder" : "encoder-only";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "encoder-decoder") return Variant::EncoderDecoder;
    if (s == "encoder-only") return Variant::EncoderOnly;
    throw ConfigError("unknown variant: " + s);
}

struct ModelConfig {
    Variant variant = Variant::EncoderOnly;
    int image_size = 16;
    int channels_in = 3;
    int channels_out = 3;
    int patch = 4;
    int dim = 64;
    int heads = 4;
    int depth = 4;
    int vocab = 26;
    int ctx_len = 8;  // max context tokens per member
    int max_group = 2;
    Objective objective = Objective::Velocity;

    int grid() const { return image_size / patch; }
    int tokens_per_image() const { return grid() * grid(); }
    int patch_dim_in() const { return patch * patch * channels_in; }
    int patch_dim_out() const { return patch * patch * channels_out; }
};

inline void check_model_config(const ModelConfig& c) {
    if (c.image_size < 1 || c.patch < 1 || c.image_size % c.patch != 0)
        throw ConfigError("patch " + std::to_string(c.patch) + " must divide image size " +
                          std::to_string(c.image_size));
    if (c.dim < 4 || c.dim % 2 != 0) throw ConfigError("dim must be even and at least 4");
    if (c.heads < 1 || c.dim % c.heads != 0)
        throw ConfigError("head count " + std::to_string(c.heads) + " does not divide width " +
                          std::to_string(c.dim));
    if (c.depth < 1) throw ConfigError("depth must be positive");
    if (c.vocab < 1) throw ConfigError("vocab must be positive");
    if (c.ctx_len < 0) throw ConfigError("ctx_len cannot be negative");
    if (c.max_group < 1) throw ConfigError("max_group must be at least 1");
    if (c.channels_in < c.channels_out)
        throw ConfigError("input channels cannot be fewer than output channels");
}

inline ModelConfig model_config_from(const Config& c) {
    ModelConfig m;
    m.variant = parse_variant(c.get_str("variant", variant_str(m.variant)));
    m.image_size = c.get_int("image_size", m.image_size);
    m.channels_in = c.get_int("channels_in", m.channels_in);
    m.channels_out = c.get_int("channels_out", m.channels_out);
    m.patch = c.get_int("patch", m.patch);
    m.dim = c.get_int("dim", m.dim);
    m.heads = c.get_int("heads", m.heads);
    m.depth = c.get_int("depth", m.depth);
    m.vocab = c.get_int("vocab", m.vocab);
    m.ctx_len = c.get_int("ctx_len", m.ctx_len);
    m.max_group = c.get_int("max_group", m.max_group);
    m.objective = parse_objective(c.get_str("objective", objective_str(m.objective)));
    check_model_config(m);
    return m;
}

inline void model_config_to(const ModelConfig& m, Config& c) {
    c.set("variant", variant_str(m.variant));
    c.set("image_size", std::to_string(m.image_size));
    c.set("channels_in", std::to_string(m.channels_in));
    c.set("channels_out", std::to_string(m.channels_out));
    c.set("patch", std::to_string(m.patch));
    c.set("dim", std::to_string(m.dim));
    c.set("heads", std::to_string(m.heads));
    c.set("depth", std::to_string(m.depth));
    c.set("vocab", std::to_string(m.vocab));
    c.set("ctx_len", std::to_string(m.ctx_len));
    c.set("max_group", std::to_string(m.max_group));
    c.set("objective", objective_str(m.objective));
}

// Named parameter registry. Iteration order (and therefore manifests,
// checkpoints, and optimizer traversal) is name-sorted.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        t.set_requires_grad(true);
        auto [it, ok] = m_.emplace(name, std::move(t));
        if (!ok) throw ContractError("duplicate parameter " + name);
        return it->second;
    }
    Tensor<T>& at(const std::string& name) {
        auto it = m_.find(name);
        if (it == m_.end()) throw ContractError("unknown parameter " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = m_.find(name);
        if (it == m_.end()) throw ContractError("unknown parameter " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return m_.count(name) != 0; }
    size_t size() const { return m_.size(); }
    auto begin() { return m_.begin(); }
    auto end() { return m_.end(); }
    auto begin() const { return m_.begin(); }
    auto end() const { return m_.end(); }

    size_t total_numel() const {
        size_t n = 0;
        for (const auto& [k, v] : m_) n += v.numel();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [k, v] : m_) out.add(k, v.template cast<U>());
        return out;
    }

    void zero_grads() {
        for (auto& [k, v] : m_) v.zero_grad();
    }

private:
    std::map<std::string, Tensor<T>> m_;
};

template <typename T>
std::string param_manifest(const ParamStore<T>& ps) {
    std::ostringstream os;
    for (const auto& [name, t] : ps) {
        os << name << "\t" << shape_str(t.shape()) << "\t" << t.numel() << "\n";
    }
    os << "total\t" << ps.total_numel() << "\n";
    return os.str();
}

namespace detail {

template <typename T>
void init_trunc(Tensor<T>& t, Rng& rng) {
    rng.fill_trunc_normal(t.data(), t.numel(), 0.02);
}

// zero_out_proj keeps the sublayer silent at init (used for cross-attention,
// which has no gate of its own).
template <typename T>
void add_attn_params(ParamStore<T>& ps, const std::string& prefix, int dim, Rng& rng,
                     bool zero_out_proj = false) {
    for (const char* w : {"wq", "wk", "wv"}) {
        auto& t = ps.add(prefix + "." + w, Tensor<T>::zeros({dim, dim}));
        init_trunc(t, rng);
    }
    auto& wo = ps.add(prefix + ".wo", Tensor<T>::zeros({dim, dim}));
    if (!zero_out_proj) init_trunc(wo, rng);
    for (const char* b : {"bq", "bk", "bv", "bo"})
        ps.add(prefix + "." + b, Tensor<T>::zeros({dim}));
}

}  // namespace detail

// Fresh initialization: truncated-normal weights (sigma 0.02), zero biases,
// zero modulation projections, zero output head. Independent of max_group.
template <typename T>
ParamStore<T> param_init(const ModelConfig& cfg, uint64_t seed) {
    check_model_config(cfg);
    ParamStore<T> ps;
    Rng rng(seed);
    auto trunc = [&](const std::string& name, Shape shape) -> Tensor<T>& {
        auto& t = ps.add(name, Tensor<T>::zeros(std::move(shape)));
        detail::init_trunc(t, rng);
        return t;
    };
    auto zeros = [&](const std::string& name, Shape shape) -> Tensor<T>& {
        return ps.add(name, Tensor<T>::zeros(std::move(shape)));
    };

    trunc("patch_embed.w", {cfg.patch_dim_in(), cfg.dim});
    zeros("patch_embed.b", {cfg.dim});
    trunc("pos_img", {cfg.tokens_per_image(), cfg.dim});
    trunc("ctx.table", {cfg.vocab, cfg.dim});
    trunc("ctx.pos", {cfg.ctx_len, cfg.dim});
    trunc("tmlp.w1", {cfg.dim, cfg.dim});
    zeros("tmlp.b1", {cfg.dim});
    trunc("tmlp.w2", {cfg.dim, cfg.dim});
    zeros("tmlp.b2", {cfg.dim});

    for (int b = 0; b < cfg.depth; ++b) {
        std::string pre = "blk" + std::to_string(b);
        detail::add_attn_params(ps, pre + ".attn", cfg.dim, rng);
        if (cfg.variant == Variant::EncoderDecoder)
            detail::add_attn_params(ps, pre + ".cross", cfg.dim, rng, /*zero_out_proj=*/true);
        trunc(pre + ".ffn.w1", {cfg.dim, 4 * cfg.dim});
        zeros(pre + ".ffn.b1", {4 * cfg.dim});
        trunc(pre + ".ffn.w2", {4 * cfg.dim, cfg.dim});
        zeros(pre + ".ffn.b2", {cfg.dim});
        zeros(pre + ".mod.w", {cfg.dim, 6 * cfg.dim});
        zeros(pre + ".mod.b", {6 * cfg.dim});
    }

    zeros("final.mod.w", {cfg.dim, 2 * cfg.dim});
    zeros("final.mod.b", {2 * cfg.dim});
    zeros("final.w", {cfg.dim, cfg.patch_dim_out()});
    zeros("final.b", {cfg.patch_dim_out()});
    return ps;
}

template <typename T>
AttnWeights<T> attn_view(ParamStore<T>& ps, const std::string& prefix, int heads) {
    AttnWeights<T> w;
    w.heads = heads;
    w.wq = ps.at(prefix + ".wq");
    w.bq = ps.at(prefix + ".bq");
    w.wk = ps.at(prefix + ".wk");
    w.bk = ps.at(prefix + ".bk");
    w.wv = ps.at(prefix + ".wv");
    w.bv = ps.at(prefix + ".bv");
    w.wo = ps.at(prefix + ".wo");
    w.bo = ps.at(prefix + ".bo");
    return w;
}

// ---- tokenization ----

// [C,H,W] -> [L_img, patch*patch*C], raster patch order, feature layout
// c*P*P + py*P + px. Differentiable (pure data movement).
template <typename T>
Tensor<T> patchify(Tape<T>& tape, const Tensor<T>& image, const ModelConfig& cfg) {
    if (image.rank() != 3 || image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size)
        throw ConfigError("patchify expects [C," + std::to_string(cfg.image_size) + "," +
                          std::to_string(cfg.image_size) + "], got " + shape_str(image.shape()));
    int C = image.dim(0), G = cfg.grid(), P = cfg.patch;
    auto r = reshape(tape, image, {C, G, P, G, P});
    auto p = permute(tape, r, {1, 3, 0, 2, 4});
    return reshape(tape, p, {G * G, C * P * P});
}

// Inverse of patchify for the output head: [L_img, patch*patch*C] -> [C,H,W].
template <typename T>
Tensor<T> unpatchify(Tape<T>& tape, const Tensor<T>& tokens, int C, const ModelConfig& cfg) {
    int G = cfg.grid(), P = cfg.patch;
    if (tokens.rank() != 2 || tokens.dim(0) != G * G || tokens.dim(1) != C * P * P)
        throw ConfigError("unpatchify expects [" + std::to_string(G * G) + "," +
                          std::to_string(C * P * P) + "], got " + shape_str(tokens.shape()));
    auto r = reshape(tape, tokens, {G, G, C, P, P});
    auto p = permute(tape, r, {2, 0, 3, 1, 4});
    return reshape(tape, p, {C, G * P, G * P});
}

// Learned token embedding plus learned positional offset; [L_ctx, dim].
template <typename T>
Tensor<T> embed_context(Tape<T>& tape, ParamStore<T>& ps, const std::vector<int>& ids,
                        const ModelConfig& cfg) {
    if (static_cast<int>(ids.size()) > cfg.ctx_len)
        throw ContractError("context longer than ctx_len " + std::to_string(cfg.ctx_len));
    for (int id : ids)
        if (id < 0 || id >= cfg.vocab)
            throw ContractError("context id " + std::to_string(id) + " outside vocab " +
                                std::to_string(cfg.vocab));
    auto emb = embedding(tape, ps.at("ctx.table"), ids);
    std::vector<int> pos_ids(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) pos_ids[i] = static_cast<int>(i);
    auto pos = embedding(tape, ps.at("ctx.pos"), pos_ids);
    return add(tape, emb, pos);
}

// Sinusoidal features: half sines, half cosines, geometric frequencies from
// 1 down to 1/10000. Deterministic and injective over the training range.
template <typename T>
Tensor<T> timestep_features(double pos, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep feature dim must be even");
    int half = dim / 2;
    auto out = Tensor<T>::zeros({1, dim});
    for (int i = 0; i < half; ++i) {
        double f = half == 1 ? 1.0
                             : std::pow(10000.0, -static_cast<double>(i) /
                                                     static_cast<double>(half - 1));
        out.data()[i] = static_cast<T>(std::sin(pos * f));
        out.data()[half + i] = static_cast<T>(std::cos(pos * f));
    }
    return out;
}

namespace detail {

// x * (1 + scale) + shift, rowwise; scale/shift are [dim] vectors.
template <typename T>
Tensor<T> modulate(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& scale,
                   const Tensor<T>& shift) {
    return add_rowvec(tape, mul_rowvec(tape, x, add_scalar(tape, scale, 1.0)), shift);
}

template <typename T>
struct Modulation {
    // scale/shift/gate for the attention sublayer and the FFN sublayer
    Tensor<T> s1, b1, g1, s2, b2, g2;
};

template <typename T>
Modulation<T> block_modulation(Tape<T>& tape, ParamStore<T>& ps, const std::string& pre,
                               const Tensor<T>& t_emb, int dim) {
    auto row = add_rowvec(tape, matmul(tape, t_emb, ps.at(pre + ".mod.w")),
                          ps.at(pre + ".mod.b"));
    auto chunk = [&](int i) {
        return reshape(tape, slice_cols(tape, row, i * dim, (i + 1) * dim), {dim});
    };
    Modulation<T> m;
    m.b1 = chunk(0);
    m.s1 = chunk(1);
    m.g1 = chunk(2);
    m.b2 = chunk(3);
    m.s2 = chunk(4);
    m.g2 = chunk(5);
    return m;
}

template <typename T>
Tensor<T> ffn(Tape<T>& tape, ParamStore<T>& ps, const std::string& pre, const Tensor<T>& x) {
    auto h = gelu(tape, add_rowvec(tape, matmul(tape, x, ps.at(pre + ".ffn.w1")),
                                   ps.at(pre + ".ffn.b1")));
    return add_rowvec(tape, matmul(tape, h, ps.at(pre + ".ffn.w2")), ps.at(pre + ".ffn.b2"));
}

template <typename T>
Tensor<T> ln_plain(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& ones,
                   const Tensor<T>& zeros) {
    return layer_norm(tape, x, ones, zeros);
}

}  // namespace detail

// One encoder-decoder block over per-member image tokens. Sequence:
// modulated grouped self-attention over the concatenated image tokens,
// unmodulated per-member cross-attention to that member's context, modulated
// FFN; residuals around each. Members with empty context skip cross-attention.
template <typename T>
std::vector<Tensor<T>> encdec_block(Tape<T>& tape, ParamStore<T>& ps, const std::string& pre,
                                    const std::vector<Tensor<T>>& members,
                                    const std::vector<Tensor<T>>& contexts,
                                    const Tensor<T>& t_emb, const ModelConfig& cfg,
                                    const Tensor<T>& ones, const Tensor<T>& zeros) {
    if (members.size() != contexts.size())
        throw ShapeError("member and context counts differ");
    auto mod = detail::block_modulation(tape, ps, pre, t_emb, cfg.dim);
    auto attn_w = attn_view(ps, pre + ".attn", cfg.heads);
    auto cross_w = attn_view(ps, pre + ".cross", cfg.heads);

    auto joint = concat_image_tokens(tape, members);
    auto h = detail::modulate(tape, detail::ln_plain(tape, joint, ones, zeros), mod.s1, mod.b1);
    auto a = multihead_attention(tape, h, h, attn_w, nullptr);
    joint = add(tape, joint, mul_rowvec(tape, a, mod.g1));

    int L = members.front().dim(0);
    auto parts = split_rows(tape, joint, std::vector<int>(members.size(), L));
    for (size_t i = 0; i < parts.size(); ++i) {
        if (contexts[i].dim(0) == 0) continue;
        auto q = detail::ln_plain(tape, parts[i], ones, zeros);
        parts[i] = add(tape, parts[i], cross_attention(tape, q, contexts[i], cross_w));
    }

    auto joint2 = concat_rows(tape, parts);
    auto h2 = detail::modulate(tape, detail::ln_plain(tape, joint2, ones, zeros), mod.s2, mod.b2);
    auto f = detail::ffn(tape, ps, pre, h2);
    joint2 = add(tape, joint2, mul_rowvec(tape, f, mod.g2));
    return split_rows(tape, joint2, std::vector<int>(members.size(), L));
}

// One encoder-only block over the joint (context, image) sequence under the
// group mask.
template <typename T>
Tensor<T> enconly_block(Tape<T>& tape, ParamStore<T>& ps, const std::string& pre,
                        const Tensor<T>& joint, const MaskPtr& mask, const Tensor<T>& t_emb,
                        const ModelConfig& cfg, const Tensor<T>& ones, const Tensor<T>& zeros) {
    if (mask && static_cast<size_t>(joint.dim(0)) * static_cast<size_t>(joint.dim(0)) != mask->size())
        throw ContractError("mask does not cover the joint sequence");
    auto mod = detail::block_modulation(tape, ps, pre, t_emb, cfg.dim);
    auto attn_w = attn_view(ps, pre + ".attn", cfg.heads);

    auto h = detail::modulate(tape, detail::ln_plain(tape, joint, ones, zeros), mod.s1, mod.b1);
    auto a = multihead_attention(tape, h, h, attn_w, mask);
    auto x = add(tape, joint, mul_rowvec(tape, a, mod.g1));

    auto h2 = detail::modulate(tape, detail::ln_plain(tape, x, ones, zeros), mod.s2, mod.b2);
    auto f = detail::ffn(tape, ps, pre, h2);
    return add(tape, x, mul_rowvec(tape, f, mod.g2));
}

template <typename T>
struct GroupInput {
    std::vector<Tensor<T>> images;           // [channels_in, H, W] per member
    std::vector<std::vector<int>> contexts;  // token ids per member
};

// Full forward pass: per-member denoising prediction [channels_out, H, W].
// t_pos is the model-facing noise level (ddpm: the base timestep label;
// flow: t scaled by 1000).
template <typename T>
std::vector<Tensor<T>> model_forward(Tape<T>& tape, const ModelConfig& cfg, ParamStore<T>& ps,
                                     const GroupInput<T>& in, double t_pos) {
    int n = static_cast<int>(in.images.size());
    if (n < 1) throw ContractError("group needs at least one member");
    if (n > cfg.max_group)
        throw ContractError("group size " + std::to_string(n) + " exceeds max_group " +
                            std::to_string(cfg.max_group));
    if (static_cast<int>(in.contexts.size()) != n)
        throw ContractError("context list must have one entry per member");

    auto ones = Tensor<T>::full({cfg.dim}, T(1));
    auto zeros = Tensor<T>::zeros({cfg.dim});

    // timestep embedding, shared across the group
    auto t_feat = timestep_features<T>(t_pos, cfg.dim);
    auto t_h = gelu(tape, add_rowvec(tape, matmul(tape, t_feat, ps.at("tmlp.w1")),
                                     ps.at("tmlp.b1")));
    auto t_emb = add_rowvec(tape, matmul(tape, t_h, ps.at("tmlp.w2")), ps.at("tmlp.b2"));

    // tokenize members
    std::vector<Tensor<T>> img_tokens(static_cast<size_t>(n));
    std::vector<Tensor<T>> ctx_embs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto tok = patchify(tape, in.images[static_cast<size_t>(i)], cfg);
        auto emb = add_rowvec(tape, matmul(tape, tok, ps.at("patch_embed.w")),
                              ps.at("patch_embed.b"));
        img_tokens[static_cast<size_t>(i)] = add(tape, emb, ps.at("pos_img"));
        ctx_embs[static_cast<size_t>(i)] =
            embed_context(tape, ps, in.contexts[static_cast<size_t>(i)], cfg);
    }

    std::vector<Tensor<T>> out_tokens;
    if (cfg.variant == Variant::EncoderDecoder) {
        auto x = img_tokens;
        for (int b = 0; b < cfg.depth; ++b)
            x = encdec_block(tape, ps, "blk" + std::to_string(b), x, ctx_embs, t_emb, cfg,
                             ones, zeros);
        out_tokens = std::move(x);
    } else {
        std::vector<int> L_ctx(static_cast<size_t>(n));
        std::vector<Tensor<T>> seq;
        std::vector<int> part_sizes;
        for (int i = 0; i < n; ++i) {
            L_ctx[static_cast<size_t>(i)] = ctx_embs[static_cast<size_t>(i)].dim(0);
            seq.push_back(ctx_embs[static_cast<size_t>(i)]);
            seq.push_back(img_tokens[static_cast<size_t>(i)]);
            part_sizes.push_back(L_ctx[static_cast<size_t>(i)]);
            part_sizes.push_back(cfg.tokens_per_image());
        }
        auto layout = make_layout(n, cfg.tokens_per_image(), L_ctx);
        auto mask = build_group_mask(layout).shared();
        auto joint = concat_rows(tape, seq);
        for (int b = 0; b < cfg.depth; ++b)
            joint = enconly_block(tape, ps, "blk" + std::to_string(b), joint, mask, t_emb,
                                  cfg, ones, zeros);
        auto parts = split_rows(tape, joint, part_sizes);
        for (int i = 0; i < n; ++i)
            out_tokens.push_back(parts[static_cast<size_t>(2 * i + 1)]);
    }

    // final head: modulated layer norm then zero-initialized linear
    auto frow = add_rowvec(tape, matmul(tape, t_emb, ps.at("final.mod.w")),
                           ps.at("final.mod.b"));
    auto fshift = reshape(tape, slice_cols(tape, frow, 0, cfg.dim), {cfg.dim});
    auto fscale = reshape(tape, slice_cols(tape, frow, cfg.dim, 2 * cfg.dim), {cfg.dim});

    std::vector<Tensor<T>> preds;
    for (auto& tok : out_tokens) {
        auto h = detail::modulate(tape, detail::ln_plain(tape, tok, ones, zeros), fscale,
                                  fshift);
        auto lin = add_rowvec(tape, matmul(tape, h, ps.at("final.w")), ps.at("final.b"));
        preds.push_back(unpatchify(tape, lin, cfg.channels_out, cfg));
    }
    return preds;
}

}  // namespace gdt
