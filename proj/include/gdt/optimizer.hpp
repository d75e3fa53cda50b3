#pragma once
// Adaptive moment estimation with decoupled weight decay, plus the
// warmup-then-cosine learning-rate curve. Decay touches matrices only
// (rank >= 2); biases, gains, and other vectors are exempt. Moments live in a
// name-keyed map so checkpoints and parameter stores stay aligned by name.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gdt/errors.hpp"
#include "gdt/model.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

// Linear ramp over the first `warmup` steps (peaking exactly at base_lr),
// then cosine decay to zero across the remaining steps. step counts from 0.
// Runs shorter than the warmup never leave the ramp.
inline double lr_at(long long step, long long total_steps, double base_lr, long long warmup) {
    if (step < 0) throw ContractError("lr_at: negative step");
    if (warmup < 0) throw ContractError("lr_at: negative warmup");
    if (step < warmup) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    long long span = total_steps - warmup;
    if (span < 1) span = 1;
    double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
    if (progress > 1.0) progress = 1.0;
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

template <typename T>
class AdamW {
public:
    struct Slot {
        std::vector<T> m, v;
    };

    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    AdamW() = default;

    explicit AdamW(const ParamStore<T>& ps) { reset(ps); }

    // Fresh zero moments for every parameter; update counter restarts.
    void reset(const ParamStore<T>& ps) {
        slots_.clear();
        for (const auto& [name, p] : ps) {
            Slot s;
            s.m.assign(p.numel(), T(0));
            s.v.assign(p.numel(), T(0));
            slots_.emplace(name, std::move(s));
        }
        t_ = 0;
    }

    // One update from the gradients accumulated in ps; grads are left for the
    // caller to zero. Parameters without an allocated gradient are treated as
    // zero-gradient (decay still applies to matrices).
    void step(ParamStore<T>& ps, double lr) {
        if (slots_.size() != ps.size())
            throw ContractError("optimizer state covers " + std::to_string(slots_.size()) +
                                " parameters, store has " + std::to_string(ps.size()));
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (auto& [name, p] : ps) {
            auto it = slots_.find(name);
            if (it == slots_.end()) throw ContractError("no optimizer state for " + name);
            Slot& s = it->second;
            if (s.m.size() != p.numel())
                throw ContractError("optimizer state size mismatch for " + name);
            const bool decay = p.rank() >= 2;
            const T* g = p.grad_allocated() ? p.grad() : nullptr;
            T* w = p.data();
            for (size_t i = 0; i < p.numel(); ++i) {
                const double gi = g ? static_cast<double>(g[i]) : 0.0;
                double m = beta1 * static_cast<double>(s.m[i]) + (1.0 - beta1) * gi;
                double v = beta2 * static_cast<double>(s.v[i]) + (1.0 - beta2) * gi * gi;
                s.m[i] = static_cast<T>(m);
                s.v[i] = static_cast<T>(v);
                double upd = (m / bc1) / (std::sqrt(v / bc2) + eps);
                if (decay) upd += weight_decay * static_cast<double>(w[i]);
                w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * upd);
            }
        }
    }

    long long updates() const { return t_; }
    void set_updates(long long t) {
        if (t < 0) throw ContractError("negative optimizer update count");
        t_ = t;
    }

    std::map<std::string, Slot>& slots() { return slots_; }
    const std::map<std::string, Slot>& slots() const { return slots_; }

private:
    std::map<std::string, Slot> slots_;
    long long t_ = 0;
};

}  // namespace gdt
