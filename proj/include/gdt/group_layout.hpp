#pragma once
// Token bookkeeping for a generation group. The joint sequence interleaves
// members as (c_1, x_1, c_2, x_2, ...): any fixed order works since attention
// is mask-governed, and interleaving keeps each member's offsets local. The
// group mask lets token p attend to token q iff they belong to the same
// member or both are image tokens.

#include <sstream>
#include <string>
#include <vector>

#include "gdt/errors.hpp"
#include "gdt/mask.hpp"

namespace gdt {

struct GroupLayout {
    int n = 0;
    int L_img = 0;
    std::vector<int> L_ctx;
    // start of member i's (context, image) block in the joint sequence
    std::vector<int> member_offsets;

    int joint_len() const { return member_offsets.back() + L_ctx.back() + L_img; }
    int image_only_len() const { return n * L_img; }

    int ctx_begin(int i) const { return member_offsets[static_cast<size_t>(i)]; }
    int ctx_end(int i) const { return ctx_begin(i) + L_ctx[static_cast<size_t>(i)]; }
    int img_begin(int i) const { return ctx_end(i); }
    int img_end(int i) const { return img_begin(i) + L_img; }
    // member i's block in the image-only (encoder-decoder) sequence
    int image_offset(int i) const { return i * L_img; }
};

inline GroupLayout make_layout(int n, int L_img, std::vector<int> L_ctx) {
    if (n < 1) throw ContractError("group needs at least one member");
    if (L_img < 1) throw ContractError("each member needs at least one image token");
    if (static_cast<int>(L_ctx.size()) != n)
        throw ContractError("context length list must have one entry per member");
    for (int c : L_ctx)
        if (c < 0) throw ContractError("context token count cannot be negative");
    GroupLayout g;
    g.n = n;
    g.L_img = L_img;
    g.L_ctx = std::move(L_ctx);
    g.member_offsets.resize(static_cast<size_t>(n));
    int off = 0;
    for (int i = 0; i < n; ++i) {
        g.member_offsets[static_cast<size_t>(i)] = off;
        off += g.L_ctx[static_cast<size_t>(i)] + L_img;
    }
    return g;
}

// Per-token member index over the joint sequence.
inline std::vector<int> token_member(const GroupLayout& g) {
    std::vector<int> mem(static_cast<size_t>(g.joint_len()));
    for (int i = 0; i < g.n; ++i)
        for (int p = g.ctx_begin(i); p < g.img_end(i); ++p) mem[static_cast<size_t>(p)] = i;
    return mem;
}

// Per-token image flag over the joint sequence (0 = context token).
inline std::vector<uint8_t> token_is_image(const GroupLayout& g) {
    std::vector<uint8_t> img(static_cast<size_t>(g.joint_len()), 0);
    for (int i = 0; i < g.n; ++i)
        for (int p = g.img_begin(i); p < g.img_end(i); ++p) img[static_cast<size_t>(p)] = 1;
    return img;
}

// Token p may attend to token q iff same member, or both image tokens.
inline AttentionMask build_group_mask(const GroupLayout& g) {
    int S = g.joint_len();
    AttentionMask m;
    m.S = S;
    m.bits.assign(static_cast<size_t>(S) * static_cast<size_t>(S), 0);
    auto mem = token_member(g);
    auto img = token_is_image(g);
    for (int p = 0; p < S; ++p)
        for (int q = 0; q < S; ++q) {
            bool keep = mem[static_cast<size_t>(p)] == mem[static_cast<size_t>(q)] ||
                        (img[static_cast<size_t>(p)] && img[static_cast<size_t>(q)]);
            m.bits[static_cast<size_t>(p) * static_cast<size_t>(S) + static_cast<size_t>(q)] =
                keep ? 1 : 0;
        }
    check_mask_invariants(m);
    return m;
}

// Plain-text grid with one labeled row per token (c<i> context, x<i> image).
inline std::string mask_dump(const GroupLayout& g) {
    auto m = build_group_mask(g);
    auto mem = token_member(g);
    auto img = token_is_image(g);
    std::ostringstream os;
    os << "n " << g.n << "\n";
    os << "L_img " << g.L_img << "\n";
    os << "L_ctx";
    for (int c : g.L_ctx) os << " " << c;
    os << "\n";
    os << "S " << m.S << "\n";
    for (int p = 0; p < m.S; ++p) {
        os << (img[static_cast<size_t>(p)] ? "x" : "c") << mem[static_cast<size_t>(p)] + 1
           << " | ";
        for (int q = 0; q < m.S; ++q) os << (m.at(p, q) ? '1' : '0');
        os << "\n";
    }
    return os.str();
}

}  // namespace gdt
