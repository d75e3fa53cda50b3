#pragma once
// Reference-conditioned generation support: channel-concat inpainting inputs,
// training-time reference sampling, and noise-matched reference replacement
// for the training-free mode.

#include <vector>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"
#include "gdt/schedule.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

// flags[i] marks member i as a reference; flagged members carry their clean
// image. Valid specs have 0 <= m < n.
template <typename T>
struct ReferenceSpec {
    std::vector<uint8_t> flags;
    std::vector<Tensor<T>> images;

    int n() const { return static_cast<int>(flags.size()); }
    int m() const {
        int c = 0;
        for (uint8_t f : flags) c += f ? 1 : 0;
        return c;
    }
    bool is_ref(int i) const { return flags[static_cast<size_t>(i)] != 0; }

    static ReferenceSpec none(int n) {
        ReferenceSpec r;
        r.flags.assign(static_cast<size_t>(n), 0);
        r.images.resize(static_cast<size_t>(n));
        return r;
    }
};

template <typename T>
void check_reference_spec(const ReferenceSpec<T>& refs) {
    if (refs.images.size() != refs.flags.size())
        throw ContractError("reference spec image list must match flag list");
    if (refs.m() >= refs.n())
        throw ContractError("at least one member must be generated (m < n)");
    for (int i = 0; i < refs.n(); ++i)
        if (refs.is_ref(i) && !refs.images[static_cast<size_t>(i)].defined())
            throw ContractError("member " + std::to_string(i) +
                                " flagged as reference but has no image");
}

// Channel concat: [noised(C) | reference-or-zeros(C) | indicator(1)] per
// member. The indicator plane disambiguates a black reference from no
// reference.
template <typename T>
std::vector<Tensor<T>> make_inpaint_input(const std::vector<Tensor<T>>& noised,
                                          const ReferenceSpec<T>& refs) {
    if (static_cast<int>(noised.size()) != refs.n())
        throw ContractError("noised member count does not match reference spec");
    check_reference_spec(refs);
    std::vector<Tensor<T>> out;
    out.reserve(noised.size());
    for (size_t i = 0; i < noised.size(); ++i) {
        const auto& x = noised[i];
        if (x.rank() != 3) throw ShapeError("inpaint input members must be [C,H,W]");
        int C = x.dim(0), H = x.dim(1), W = x.dim(2);
        size_t plane = static_cast<size_t>(H) * static_cast<size_t>(W);
        auto packed = Tensor<T>::zeros({2 * C + 1, H, W});
        std::copy(x.data(), x.data() + static_cast<size_t>(C) * plane, packed.data());
        if (refs.is_ref(static_cast<int>(i))) {
            const auto& ref = refs.images[i];
            if (ref.shape() != x.shape())
                throw ShapeError("reference image shape " + shape_str(ref.shape()) +
                                 " does not match member shape " + shape_str(x.shape()));
            std::copy(ref.data(), ref.data() + static_cast<size_t>(C) * plane,
                      packed.data() + static_cast<size_t>(C) * plane);
            std::fill(packed.data() + static_cast<size_t>(2 * C) * plane,
                      packed.data() + static_cast<size_t>(2 * C + 1) * plane, T(1));
        }
        out.push_back(std::move(packed));
    }
    return out;
}

// m drawn uniformly from {0..n-1}, then m members chosen uniformly without
// replacement (partial shuffle). The m=0 path keeps unconditional behavior
// trained.
inline std::vector<uint8_t> sample_references_for_training(int n, Rng& rng) {
    if (n < 1) throw ContractError("group needs at least one member");
    int m = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < m; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    std::vector<uint8_t> flags(static_cast<size_t>(n), 0);
    for (int i = 0; i < m; ++i) flags[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
    return flags;
}

// Overwrite each reference member's latent with its clean image noised to
// level t (fresh noise per call). Non-reference latents untouched; with m=0
// the rng is not consumed.
template <typename T>
void sdedit_replace(std::vector<Tensor<T>>& latents, const ReferenceSpec<T>& refs, double t,
                    const NoiseSchedule& sched, Rng& rng) {
    if (static_cast<int>(latents.size()) != refs.n())
        throw ContractError("latent count does not match reference spec");
    check_reference_spec(refs);
    for (size_t i = 0; i < latents.size(); ++i) {
        if (!refs.is_ref(static_cast<int>(i))) continue;
        auto eps = Tensor<T>::zeros(refs.images[i].shape());
        rng.fill_normal(eps.data(), eps.numel(), 1.0);
        latents[i] = q_sample(refs.images[i], t, eps, sched);
    }
}

}  // namespace gdt
