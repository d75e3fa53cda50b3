#pragma once
// Multi-head attention built from the autodiff ops, plus the two grouped
// forms: encoder-decoder style (concatenate image tokens across members,
// dense self-attention, split back) and encoder-only style (one joint
// sequence under the group mask). The mask is applied at logit level inside
// masked_softmax so rows stay stochastic and gradients exact.

#include <cmath>
#include <vector>

#include "gdt/autograd.hpp"
#include "gdt/group_layout.hpp"

namespace gdt {

template <typename T>
struct AttnWeights {
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    int heads = 1;
};

template <typename T>
AttnWeights<T> make_attn_weights(int D, int heads, Rng& rng) {
    AttnWeights<T> w;
    w.heads = heads;
    auto mk = [&](Tensor<T>& t) {
        t = Tensor<T>::zeros({D, D});
        rng.fill_trunc_normal(t.data(), t.numel(), 0.02);
        t.set_requires_grad(true);
    };
    mk(w.wq);
    mk(w.wk);
    mk(w.wv);
    mk(w.wo);
    for (Tensor<T>* b : {&w.bq, &w.bk, &w.bv, &w.bo}) {
        *b = Tensor<T>::zeros({D});
        b->set_requires_grad(true);
    }
    return w;
}

// q_in [Lq,D] attends to kv_in [Lk,D]; mask (optional) is [Lq,Lk] shared
// across heads.
template <typename T>
Tensor<T> multihead_attention(Tape<T>& tape, const Tensor<T>& q_in, const Tensor<T>& kv_in,
                              const AttnWeights<T>& w, const MaskPtr& mask) {
    if (q_in.rank() != 2 || kv_in.rank() != 2)
        throw ShapeError("attention inputs must be rank-2 token matrices");
    int Lq = q_in.dim(0), D = q_in.dim(1), Lk = kv_in.dim(0);
    if (kv_in.dim(1) != D)
        throw ShapeError("query and key/value widths differ: " + shape_str(q_in.shape()) +
                         " vs " + shape_str(kv_in.shape()));
    if (Lk == 0) throw ContractError("attention needs at least one key token");
    int H = w.heads;
    if (H < 1 || D % H != 0)
        throw ConfigError("head count " + std::to_string(H) + " does not divide width " +
                          std::to_string(D));
    int Dh = D / H;

    auto q = add_rowvec(tape, matmul(tape, q_in, w.wq), w.bq);
    auto k = add_rowvec(tape, matmul(tape, kv_in, w.wk), w.bk);
    auto v = add_rowvec(tape, matmul(tape, kv_in, w.wv), w.bv);

    // [L,D] -> [H,L,Dh]
    auto qh = permute(tape, reshape(tape, q, {Lq, H, Dh}), {1, 0, 2});
    auto kh = permute(tape, reshape(tape, k, {Lk, H, Dh}), {1, 0, 2});
    auto vh = permute(tape, reshape(tape, v, {Lk, H, Dh}), {1, 0, 2});

    auto kt = permute(tape, kh, {0, 2, 1});
    auto scores = scale(tape, matmul(tape, qh, kt), 1.0 / std::sqrt(static_cast<double>(Dh)));
    auto probs = masked_softmax(tape, scores, mask);
    auto ctx = matmul(tape, probs, vh);

    auto merged = reshape(tape, permute(tape, ctx, {1, 0, 2}), {Lq, D});
    return add_rowvec(tape, matmul(tape, merged, w.wo), w.bo);
}

// Stack per-member image token blocks [L_img,D] into [n*L_img,D].
template <typename T>
Tensor<T> concat_image_tokens(Tape<T>& tape, const std::vector<Tensor<T>>& per_member) {
    if (per_member.empty()) throw ContractError("group needs at least one member");
    for (const auto& t : per_member) {
        if (t.rank() != 2 || t.shape() != per_member.front().shape())
            throw ShapeError("member token blocks must share shape; got " +
                             shape_str(t.shape()) + " vs " +
                             shape_str(per_member.front().shape()));
    }
    return concat_rows(tape, per_member);
}

template <typename T>
std::vector<Tensor<T>> split_image_tokens(Tape<T>& tape, const Tensor<T>& joint,
                                          const GroupLayout& layout) {
    if (joint.rank() != 2 || joint.dim(0) != layout.image_only_len())
        throw ShapeError("joint image tokens have shape " + shape_str(joint.shape()) +
                         ", expected " + std::to_string(layout.image_only_len()) + " rows");
    return split_rows(tape, joint, std::vector<int>(static_cast<size_t>(layout.n), layout.L_img));
}

// Encoder-decoder form: every image token attends to all image tokens in the
// group. Equivalent to concat -> dense attention -> split.
template <typename T>
std::vector<Tensor<T>> grouped_self_attention(Tape<T>& tape,
                                              const std::vector<Tensor<T>>& per_member,
                                              const AttnWeights<T>& w) {
    auto joint = concat_image_tokens(tape, per_member);
    auto out = multihead_attention(tape, joint, joint, w, nullptr);
    int L = per_member.front().dim(0);
    return split_rows(tape, out, std::vector<int>(per_member.size(), L));
}

// Encoder-only form: one joint (context, image) sequence under the group
// mask.
template <typename T>
Tensor<T> masked_joint_attention(Tape<T>& tape, const Tensor<T>& joint,
                                 const AttentionMask& mask, const AttnWeights<T>& w) {
    if (joint.rank() != 2 || joint.dim(0) != mask.S)
        throw ContractError("mask size " + std::to_string(mask.S) +
                            " does not cover sequence " + shape_str(joint.shape()));
    check_mask_invariants(mask);
    return multihead_attention(tape, joint, joint, w, mask.shared());
}

// Per-member conditioning: image queries attend to that member's context.
template <typename T>
Tensor<T> cross_attention(Tape<T>& tape, const Tensor<T>& q_in, const Tensor<T>& kv_in,
                          const AttnWeights<T>& w) {
    return multihead_attention(tape, q_in, kv_in, w, nullptr);
}

}  // namespace gdt
