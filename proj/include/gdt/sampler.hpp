#pragma once
// Joint reverse-process sampler for image groups, with optional reference
// conditioning: channel-concat inpainting (trained) or noise-matched
// replacement (training-free). Draw order from the rng is fixed: initial
// latents in member order, then per step any replacement noise (flagged
// members ascending) followed by ancestral noise (members ascending), so runs
// are bit-reproducible.

#include <string>
#include <vector>

#include "gdt/autograd.hpp"
#include "gdt/conditioning.hpp"
#include "gdt/errors.hpp"
#include "gdt/model.hpp"
#include "gdt/rng.hpp"
#include "gdt/schedule.hpp"

namespace gdt {

enum class CondMode { None, Inpaint, Sdedit };

inline std::string cond_mode_str(CondMode m) {
    switch (m) {
        case CondMode::None: return "none";
        case CondMode::Inpaint: return "inpaint";
        default: return "sdedit";
    }
}

inline CondMode parse_cond_mode(const std::string& s) {
    if (s == "none") return CondMode::None;
    if (s == "inpaint") return CondMode::Inpaint;
    if (s == "sdedit") return CondMode::Sdedit;
    throw ConfigError("unknown conditioning mode: " + s);
}

// Generate one group of n = contexts.size() images. steps <= 0 or steps >= T
// runs the full training chain, otherwise the chain is respaced to that many
// steps. Returns all n members; in sdedit mode reference slots hold the clean
// references, in inpaint mode they hold the model's reconstruction, so
// callers keep non-reference slots as generations.
//
// Channel contract: models with channels_in == 2*channels_out + 1 carry
// conditioning channels; mode none feeds them all-zero (the unconditional
// path such models are trained for), inpaint packs the references, and sdedit
// refuses them. Plain channels_in == channels_out models accept none and
// sdedit only.
//
// guidance != 1 blends caption-free and captioned predictions
// (uncond + g * (cond - uncond)); the reference channels, when packed, stay
// in both branches. 1.0 skips the extra forward pass entirely.
template <typename T>
std::vector<Tensor<T>> sample_group(const ModelConfig& cfg, ParamStore<T>& ps,
                                    const NoiseSchedule& train_sched,
                                    const std::vector<std::vector<int>>& contexts,
                                    const ReferenceSpec<T>& refs, CondMode mode, int steps,
                                    Rng& rng, double guidance = 1.0) {
    check_model_config(cfg);
    int n = static_cast<int>(contexts.size());
    if (n < 1) throw ContractError("group needs at least one member");

    const int C = cfg.channels_out;
    const bool packed = cfg.channels_in == 2 * C + 1;
    if (!packed && cfg.channels_in != C)
        throw ConfigError("channels_in must be channels_out or 2*channels_out+1");
    if (mode == CondMode::Inpaint && !packed)
        throw ConfigError("inpaint conditioning needs a model with channels_in = 2*C+1");
    if (mode == CondMode::Sdedit && packed)
        throw ConfigError("sdedit conditioning needs a plain channels_in = C model");

    auto effective = refs.flags.empty() ? ReferenceSpec<T>::none(n) : refs;
    if (effective.n() != n)
        throw ContractError("reference spec covers " + std::to_string(effective.n()) +
                            " members, group has " + std::to_string(n));
    check_reference_spec(effective);
    if (mode == CondMode::None && effective.m() != 0)
        throw ConfigError("references given but conditioning mode is none");

    // more steps than the chain holds means the full chain
    auto sched = (steps > 0 && steps < train_sched.T) ? respace(train_sched, steps)
                                                      : train_sched;

    std::vector<Tensor<T>> x(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        x[static_cast<size_t>(i)] = Tensor<T>::zeros({C, cfg.image_size, cfg.image_size});
        rng.fill_normal(x[static_cast<size_t>(i)].data(), x[static_cast<size_t>(i)].numel(),
                        1.0);
    }

    Tape<T> tape;
    tape.set_recording(false);
    auto none_refs = ReferenceSpec<T>::none(n);

    // token 0 is the null token the model is trained to treat as "no caption"
    std::vector<std::vector<int>> null_contexts(contexts.size());
    for (size_t i = 0; i < contexts.size(); ++i)
        null_contexts[i].assign(contexts[i].size(), 0);

    auto predict = [&](double t_pos) {
        GroupInput<T> in;
        in.contexts = contexts;
        in.images = packed ? make_inpaint_input(
                                 x, mode == CondMode::Inpaint ? effective : none_refs)
                           : x;
        auto cond = model_forward(tape, cfg, ps, in, t_pos);
        if (guidance == 1.0) return cond;
        in.contexts = null_contexts;
        auto uncond = model_forward(tape, cfg, ps, in, t_pos);
        for (int i = 0; i < n; ++i) {
            auto& c = cond[static_cast<size_t>(i)];
            const auto& u = uncond[static_cast<size_t>(i)];
            T* pc = c.data();
            const T* pu = u.data();
            const T g = static_cast<T>(guidance);
            for (size_t k = 0; k < c.numel(); ++k) pc[k] = pu[k] + g * (pc[k] - pu[k]);
        }
        return cond;
    };

    if (sched.kind == ScheduleKind::DdpmLinear) {
        for (int t = sched.T; t >= 1; --t) {
            if (mode == CondMode::Sdedit)
                sdedit_replace(x, effective, static_cast<double>(t), sched, rng);
            auto preds = predict(static_cast<double>(sched.base_t[static_cast<size_t>(t - 1)]));
            for (int i = 0; i < n; ++i)
                x[static_cast<size_t>(i)] = ddpm_ancestral_step(
                    x[static_cast<size_t>(i)], preds[static_cast<size_t>(i)], t, sched, rng);
        }
    } else {
        for (int i = sched.T; i >= 1; --i) {
            double t = sched.time(i);
            if (mode == CondMode::Sdedit) sdedit_replace(x, effective, t, sched, rng);
            auto preds = predict(t * 1000.0);
            double dt = t - sched.time(i - 1);
            for (int j = 0; j < n; ++j)
                x[static_cast<size_t>(j)] = flow_euler_step(
                    x[static_cast<size_t>(j)], preds[static_cast<size_t>(j)], t, dt);
        }
    }

    // final replacement at t -> 0: reference outputs are exactly the clean
    // references in the training-free mode
    if (mode == CondMode::Sdedit)
        for (int i = 0; i < n; ++i)
            if (effective.is_ref(i))
                x[static_cast<size_t>(i)] = effective.images[static_cast<size_t>(i)].clone();

    return x;
}

}  // namespace gdt
