#pragma once
// Attention mask representation shared by the autodiff ops and the group
// layout builder.

#include <memory>
#include <vector>

#include "gdt/errors.hpp"

namespace gdt {

// row-major keep/drop flags for masked attention, shared across heads/blocks
using MaskBits = std::vector<uint8_t>;
using MaskPtr = std::shared_ptr<const MaskBits>;

// Square mask over a token sequence: bits[p*S+q] == 1 means token p may
// attend to token q.
struct AttentionMask {
    int S = 0;
    MaskBits bits;

    uint8_t at(int p, int q) const {
        return bits[static_cast<size_t>(p) * static_cast<size_t>(S) + static_cast<size_t>(q)];
    }
    MaskPtr shared() const { return std::make_shared<const MaskBits>(bits); }
};

// Throws unless the mask is square, symmetric, self-attending on the
// diagonal, and every row keeps at least one key.
inline void check_mask_invariants(const AttentionMask& m) {
    if (m.bits.size() != static_cast<size_t>(m.S) * static_cast<size_t>(m.S))
        throw ContractError("mask bit count does not match declared size");
    for (int p = 0; p < m.S; ++p) {
        if (!m.at(p, p)) throw ContractError("mask diagonal must be true");
        bool any = false;
        for (int q = 0; q < m.S; ++q) {
            if (m.at(p, q) != m.at(q, p)) throw ContractError("mask must be symmetric");
            any = any || m.at(p, q);
        }
        if (!any) throw ContractError("mask row has no true entry");
    }
}

}  // namespace gdt
