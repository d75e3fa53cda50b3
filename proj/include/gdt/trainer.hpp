#pragma once
// Training loop for both stages (pretraining on the train split, quality
// tuning on the curated split), plus the evaluation and sampling drivers the
// command-line surface is built on. Every run is a pure function of
// (config, seed): the per-step rng draw order is fixed (group size, then per
// group: factors, context dropout, noise level, per-member noise, reference
// flags), kernels are bitwise deterministic, and logs use pinned formatting,
// so repeated runs produce identical checkpoints, samples, and reports.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gdt/checkpoint.hpp"
#include "gdt/conditioning.hpp"
#include "gdt/config_file.hpp"
#include "gdt/data.hpp"
#include "gdt/errors.hpp"
#include "gdt/image_io.hpp"
#include "gdt/metrics.hpp"
#include "gdt/model.hpp"
#include "gdt/optimizer.hpp"
#include "gdt/rng.hpp"
#include "gdt/sampler.hpp"
#include "gdt/schedule.hpp"

namespace gdt {

// Non-overlapping rng stream ids for the three drivers.
inline constexpr uint64_t kTrainStream = 0x54524149;
inline constexpr uint64_t kEvalStream = 0x4556414C;
inline constexpr uint64_t kSampleStream = 0x53414D50;

// Context dropout mixture: drop every slot, keep every slot, or drop slots
// independently. Trains full-, partial-, and un-conditioned behavior in one
// model.
inline constexpr double kCtxDropAll = 0.1;
inline constexpr double kCtxKeepAll = 0.45;
inline constexpr double kCtxSlotDrop = 0.5;

inline ScheduleKind schedule_kind_for(Objective o) {
    return o == Objective::Epsilon ? ScheduleKind::DdpmLinear : ScheduleKind::FlowLinear;
}

struct TrainConfig {
    long long steps = 1000;
    double lr = 1e-3;
    long long warmup = 500;
    long long token_budget = 512;
    CondMode cond_mode = CondMode::None;
    uint64_t seed = 0;
    long long ckpt_every = 1000;
    int timesteps = 1000;       // training chain length (ddpm steps / flow grid)
    long long corpus_size = 500000;
    long long finetune_steps = 200;
    long long finetune_warmup = 20;
    int eval_groups = 25;
    int sample_steps = 50;
};

inline void check_train_config(const TrainConfig& t) {
    if (t.steps < 0) throw ConfigError("steps cannot be negative");
    if (!(t.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (t.warmup < 0) throw ConfigError("warmup cannot be negative");
    if (t.token_budget < 1) throw ConfigError("token budget must be positive");
    if (t.ckpt_every < 1) throw ConfigError("checkpoint cadence must be positive");
    if (t.timesteps < 1) throw ConfigError("timesteps must be positive");
    if (t.corpus_size < 1) throw ConfigError("corpus size must be positive");
    if (t.finetune_steps < 0) throw ConfigError("finetune steps cannot be negative");
    if (t.finetune_warmup < 0) throw ConfigError("finetune warmup cannot be negative");
    if (t.eval_groups < 1) throw ConfigError("eval groups must be positive");
    if (t.sample_steps < 0) throw ConfigError("sample steps cannot be negative");
}

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

inline void check_run_config(const RunConfig& rc) {
    check_model_config(rc.model);
    check_train_config(rc.train);
    if (rc.model.image_size < 16 || rc.model.image_size % 16 != 0)
        throw ConfigError("training renders need image_size to be a positive multiple of 16");
    if (rc.model.ctx_len < kCaptionSlots)
        throw ConfigError("ctx_len must fit the " + std::to_string(kCaptionSlots) +
                          "-slot captions");
    if (rc.model.vocab < kVocabSize)
        throw ConfigError("vocab must cover the caption vocabulary");
    const int C = rc.model.channels_out;
    if (rc.train.cond_mode == CondMode::Inpaint) {
        if (rc.model.channels_in != 2 * C + 1)
            throw ConfigError("inpaint training needs channels_in = 2*channels_out+1");
    } else if (rc.model.channels_in != C) {
        throw ConfigError("non-inpaint training needs channels_in = channels_out");
    }
}

// Flat key=value round trip. channels_in defaults from the conditioning mode
// so inpaint configs need not spell out the packed channel count.
inline RunConfig run_config_from(const Config& c) {
    RunConfig rc;
    rc.train.cond_mode = parse_cond_mode(c.get_str("cond_mode", "none"));
    rc.model = model_config_from(c);
    if (rc.train.cond_mode == CondMode::Inpaint && !c.has("channels_in"))
        rc.model.channels_in = 2 * rc.model.channels_out + 1;
    rc.train.steps = c.get_int("steps", rc.train.steps);
    rc.train.lr = c.get_double("lr", rc.train.lr);
    rc.train.warmup = c.get_int("warmup", rc.train.warmup);
    rc.train.token_budget = c.get_int("token_budget", rc.train.token_budget);
    rc.train.seed = static_cast<uint64_t>(c.get_int("seed", 0));
    rc.train.ckpt_every = c.get_int("ckpt_every", rc.train.ckpt_every);
    rc.train.timesteps = static_cast<int>(c.get_int("timesteps", rc.train.timesteps));
    rc.train.corpus_size = c.get_int("corpus_size", rc.train.corpus_size);
    rc.train.finetune_steps = c.get_int("finetune_steps", rc.train.finetune_steps);
    rc.train.finetune_warmup = c.get_int("finetune_warmup", rc.train.finetune_warmup);
    rc.train.eval_groups = static_cast<int>(c.get_int("eval_groups", rc.train.eval_groups));
    rc.train.sample_steps = static_cast<int>(c.get_int("sample_steps", rc.train.sample_steps));
    check_run_config(rc);
    return rc;
}

inline void run_config_to(const RunConfig& rc, Config& c) {
    model_config_to(rc.model, c);
    c.set("cond_mode", cond_mode_str(rc.train.cond_mode));
    c.set("steps", std::to_string(rc.train.steps));
    std::ostringstream lr;
    lr << std::setprecision(17) << rc.train.lr;
    c.set("lr", lr.str());
    c.set("warmup", std::to_string(rc.train.warmup));
    c.set("token_budget", std::to_string(rc.train.token_budget));
    c.set("seed", std::to_string(rc.train.seed));
    c.set("ckpt_every", std::to_string(rc.train.ckpt_every));
    c.set("timesteps", std::to_string(rc.train.timesteps));
    c.set("corpus_size", std::to_string(rc.train.corpus_size));
    c.set("finetune_steps", std::to_string(rc.train.finetune_steps));
    c.set("finetune_warmup", std::to_string(rc.train.finetune_warmup));
    c.set("eval_groups", std::to_string(rc.train.eval_groups));
    c.set("sample_steps", std::to_string(rc.train.sample_steps));
}

// Per-member slot dropout. Draw order: one mixture uniform per member, then
// (only on the mixed branch) one uniform per slot.
inline void apply_context_dropout(std::vector<std::vector<int>>& captions, Rng& rng) {
    for (auto& c : captions) {
        double u = rng.uniform();
        if (u < kCtxDropAll) {
            std::fill(c.begin(), c.end(), kTokNull);
            continue;
        }
        if (u < kCtxDropAll + kCtxKeepAll) continue;
        for (auto& tok : c)
            if (rng.uniform() < kCtxSlotDrop) tok = kTokNull;
    }
}

template <typename T>
struct TrainState {
    ModelConfig model;
    TrainConfig train;
    ParamStore<T> params;
    AdamW<T> opt;
    long long step = 0;
    Rng rng{0};
};

template <typename T>
TrainState<T> init_train_state(const RunConfig& rc) {
    check_run_config(rc);
    TrainState<T> st;
    st.model = rc.model;
    st.train = rc.train;
    st.params = param_init<T>(rc.model, rc.train.seed);
    st.opt.reset(st.params);
    st.rng = Rng(rc.train.seed).fork(kTrainStream);
    return st;
}

// Resume: the checkpoint's architecture and chain length are authoritative;
// run knobs come from the config.
template <typename T>
TrainState<T> state_from_checkpoint(LoadedCheckpoint<T>&& ck, const TrainConfig& tc) {
    TrainState<T> st;
    st.model = ck.model;
    st.train = tc;
    st.train.timesteps = ck.timesteps;
    st.params = std::move(ck.params);
    st.opt = std::move(ck.opt);
    st.step = ck.step;
    st.rng = ck.rng;
    return st;
}

template <typename T>
void save_state(const TrainState<T>& st, const std::string& path) {
    save_checkpoint(path, st.model, st.train.timesteps, st.step, st.rng, st.params, st.opt);
}

struct StepInfo {
    double loss = 0.0;
    int n = 0;
    int batch = 0;
    uint64_t batch_seed = 0;
};

namespace detail {

template <typename T>
Tensor<T> to_elem(const Tensor<float>& t) {
    if constexpr (std::is_same_v<T, float>)
        return t;
    else
        return t.template cast<T>();
}

inline std::string hex_u64(uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace detail

// One optimizer step: sample a group size, fill the token budget with groups,
// noise every group at one shared level, regress on the objective target,
// update. Loss is averaged per member then per group then over the batch, so
// neither group size nor batch size rescales gradients.
template <typename T>
StepInfo train_one_step(TrainState<T>& st, Split split, const NoiseSchedule& sched,
                        double lr) {
    const ModelConfig& m = st.model;
    StepInfo info;
    info.batch_seed = st.rng.state();
    info.n = sample_group_size(m.max_group, st.rng);
    const int n = info.n;
    info.batch = dynamic_batcher(st.train.token_budget, n, m.tokens_per_image(),
                                 static_cast<long long>(n) * kCaptionSlots);

    Tape<T> tape;
    st.params.zero_grads();
    Tensor<T> acc;
    for (int b = 0; b < info.batch; ++b) {
        FactorSpec factors = sample_factors(split, n, st.rng);
        GroupSample group = render_group(factors, n, m.image_size, info.batch_seed);
        auto contexts = group.captions;
        apply_context_dropout(contexts, st.rng);

        double t, t_pos;
        if (sched.kind == ScheduleKind::DdpmLinear) {
            int ti = 1 + static_cast<int>(st.rng.below(static_cast<uint64_t>(sched.T)));
            t = static_cast<double>(ti);
            t_pos = static_cast<double>(sched.base_t[static_cast<size_t>(ti - 1)]);
        } else {
            t = 1.0 - st.rng.uniform();  // (0, 1], wide coverage incl. pure noise
            t_pos = t * 1000.0;
        }

        std::vector<Tensor<T>> x0(static_cast<size_t>(n));
        std::vector<Tensor<T>> noised(static_cast<size_t>(n));
        std::vector<Tensor<T>> target(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            x0[static_cast<size_t>(i)] = detail::to_elem<T>(group.images[static_cast<size_t>(i)]);
            auto eps = Tensor<T>::zeros(x0[static_cast<size_t>(i)].shape());
            st.rng.fill_normal(eps.data(), eps.numel(), 1.0);
            noised[static_cast<size_t>(i)] = q_sample(x0[static_cast<size_t>(i)], t, eps, sched);
            target[static_cast<size_t>(i)] =
                training_target(x0[static_cast<size_t>(i)], eps, t, m.objective);
        }

        GroupInput<T> in;
        in.contexts = std::move(contexts);
        if (st.train.cond_mode == CondMode::Inpaint) {
            ReferenceSpec<T> refs;
            refs.flags = sample_references_for_training(n, st.rng);
            refs.images.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i)
                if (refs.flags[static_cast<size_t>(i)])
                    refs.images[static_cast<size_t>(i)] = x0[static_cast<size_t>(i)];
            in.images = make_inpaint_input(noised, refs);
        } else {
            in.images = noised;
        }

        auto preds = model_forward(tape, m, st.params, in, t_pos);
        Tensor<T> gacc;
        for (int i = 0; i < n; ++i) {
            auto l = mse(tape, preds[static_cast<size_t>(i)], target[static_cast<size_t>(i)]);
            gacc = i == 0 ? l : add(tape, gacc, l);
        }
        auto gl = scale(tape, gacc, 1.0 / n);
        acc = b == 0 ? gl : add(tape, acc, gl);
    }
    auto loss = scale(tape, acc, 1.0 / info.batch);
    info.loss = static_cast<double>(loss.at(0));
    if (!std::isfinite(info.loss))
        throw TrainError("training loss is not finite at step " + std::to_string(st.step + 1) +
                         " (batch seed " + detail::hex_u64(info.batch_seed) + ")");
    tape.backward(loss);
    st.opt.step(st.params, lr);
    return info;
}

// Pinned log formatting so two identical runs produce identical log bytes.
inline std::string train_log_line(long long step, const StepInfo& info, double lr) {
    std::ostringstream os;
    os << "step " << step << " loss " << std::scientific << std::setprecision(10) << info.loss
       << " lr " << lr << " n " << info.n << " batch " << info.batch << "\n";
    return os.str();
}

// Runs steps_to_run optimizer steps on the given split. The lr curve is
// stage-local: it is driven by the optimizer's update counter, which resets
// at stage boundaries along with the moments. Writes one log line per step
// and a cadence checkpoint when ckpt_dir is given. A non-finite loss aborts
// with the offending batch seed in both the log and the error.
template <typename T>
void train_steps(TrainState<T>& st, Split split, long long steps_to_run, double lr_scale,
                 long long lr_total, long long lr_warmup, std::ostream* log,
                 const std::string& ckpt_dir = "") {
    if (steps_to_run < 0) throw ContractError("cannot run a negative number of steps");
    auto sched = build_schedule(schedule_kind_for(st.model.objective), st.train.timesteps);
    for (long long k = 0; k < steps_to_run; ++k) {
        double lr = lr_scale * lr_at(st.opt.updates(), lr_total, st.train.lr, lr_warmup);
        StepInfo info;
        try {
            info = train_one_step(st, split, sched, lr);
        } catch (const TrainError& e) {
            if (log) {
                *log << "abort " << e.what() << "\n";
                log->flush();
            }
            throw;
        }
        ++st.step;
        if (log) {
            *log << train_log_line(st.step, info, lr);
            log->flush();
        }
        if (!ckpt_dir.empty() && st.step % st.train.ckpt_every == 0)
            save_state(st, ckpt_dir + "/checkpoint_" + std::to_string(st.step) + ".bin");
    }
}

// Pretraining stage: train split, full lr, cosine horizon = configured steps.
// Resume-aware: runs only the remaining steps.
template <typename T>
void pretrain_stage(TrainState<T>& st, std::ostream* log, const std::string& ckpt_dir = "") {
    long long remaining = st.train.steps - st.step;
    if (remaining < 0) remaining = 0;
    train_steps(st, Split::Train, remaining, 1.0, st.train.steps, st.train.warmup, log,
                ckpt_dir);
}

// Quality-tuning stage: curated split, 0.1x lr, fresh optimizer moments and
// lr curve (documented stage-boundary contract).
template <typename T>
void finetune_stage(TrainState<T>& st, long long steps, std::ostream* log,
                    const std::string& ckpt_dir = "") {
    st.opt.reset(st.params);
    train_steps(st, Split::Quality, steps, 0.1, steps, st.train.finetune_warmup, log,
                ckpt_dir);
}

// ---- evaluation ----

struct EvalRequest {
    Split split = Split::Heldout;
    int groups = 25;
    int sample_steps = 50;
    uint64_t seed = 0;
    bool consistency = true;
    bool adherence = true;
    bool mmd = true;
};

struct EvalReport {
    std::string split;
    int groups = 0;
    int group_size = 0;
    int sample_steps = 0;
    uint64_t seed = 0;
    bool has_consistency = false;
    bool has_adherence = false;
    bool has_mmd = false;
    double consistency = 0.0;
    double adherence = 0.0;
    int adherence_members = 0;
    double mmd = 0.0;
    double chance_rate = 0.0;
};

std::string eval_report_json(const EvalReport& r);
std::string eval_report_text(const EvalReport& r);

// Samples eval groups with full captions drawn from the split's factor law
// and scores them; the fidelity pool is compared against real held-out
// renders of the same count. Deterministic per (request, parameters).
template <typename T>
EvalReport run_eval(const ModelConfig& mcfg, ParamStore<T>& ps, int timesteps,
                    const EvalRequest& req) {
    if (req.groups < 1) throw ContractError("eval needs at least one group");
    if (req.sample_steps < 0) throw ContractError("sample steps cannot be negative");
    const int n = mcfg.max_group;
    EvalReport rep;
    rep.split = split_name(req.split);
    rep.groups = req.groups;
    rep.group_size = n;
    rep.sample_steps = req.sample_steps;
    rep.seed = req.seed;
    rep.chance_rate = adherence_chance_rate();

    Rng rng = Rng(req.seed).fork(kEvalStream);
    auto sched = build_schedule(schedule_kind_for(mcfg.objective), timesteps);

    std::vector<Tensor<float>> all_images;
    std::vector<std::vector<int>> all_captions;
    double cons_sum = 0.0;
    for (int g = 0; g < req.groups; ++g) {
        FactorSpec f = sample_factors(req.split, n, rng);
        std::vector<std::vector<int>> captions;
        captions.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            captions.push_back(caption_tokens(f.shared, f.members[static_cast<size_t>(i)]));
        auto imgs = sample_group<T>(mcfg, ps, sched, captions, ReferenceSpec<T>{},
                                    CondMode::None, req.sample_steps, rng);
        std::vector<Tensor<float>> imgs_f;
        imgs_f.reserve(imgs.size());
        for (auto& im : imgs) imgs_f.push_back(im.template cast<float>());
        if (req.consistency) cons_sum += content_consistency(imgs_f, {}).score;
        for (size_t i = 0; i < imgs_f.size(); ++i) {
            all_images.push_back(imgs_f[i]);
            all_captions.push_back(captions[i]);
        }
    }
    if (req.consistency) {
        rep.has_consistency = true;
        rep.consistency = cons_sum / req.groups;
    }
    if (req.adherence) {
        auto a = prompt_adherence(all_images, all_captions, {});
        rep.has_adherence = true;
        rep.adherence = a.accuracy;
        rep.adherence_members = a.members;
    }
    if (req.mmd) {
        DatasetConfig dc;
        dc.image_size = mcfg.image_size;
        dc.max_group = mcfg.max_group;
        dc.seed = req.seed;
        std::vector<Tensor<float>> real;
        for (uint64_t i = 0; real.size() < all_images.size(); ++i) {
            auto s = sample_at(dc, Split::Heldout, i);
            for (auto& im : s.images) {
                if (real.size() == all_images.size()) break;
                real.push_back(im);
            }
        }
        rep.has_mmd = true;
        rep.mmd = fidelity_mmd(all_images, real);
    }
    return rep;
}

// ---- sampling to disk ----

struct SampleRequest {
    std::vector<std::vector<int>> contexts;
    ReferenceSpec<float> refs;  // empty flags = unconditional
    CondMode mode = CondMode::None;
    int steps = 50;
    uint64_t seed = 0;
    double guidance = 1.0;  // 1.0 = off
    std::string out_dir;
};

// Writes member_<i>.ppm + member_<i>.png and a manifest; returns the png
// paths in member order.
template <typename T>
std::vector<std::string> sample_to_disk(const ModelConfig& mcfg, ParamStore<T>& ps,
                                        int timesteps, const SampleRequest& req) {
    namespace fs = std::filesystem;
    if (req.contexts.empty()) throw ContractError("sample needs at least one caption");
    fs::create_directories(req.out_dir);
    Rng rng = Rng(req.seed).fork(kSampleStream);
    auto sched = build_schedule(schedule_kind_for(mcfg.objective), timesteps);

    ReferenceSpec<T> refs;
    refs.flags = req.refs.flags;
    refs.images.resize(req.refs.images.size());
    for (size_t i = 0; i < req.refs.images.size(); ++i)
        if (req.refs.images[i].defined())
            refs.images[i] = detail::to_elem<T>(req.refs.images[i]);

    auto imgs = sample_group<T>(mcfg, ps, sched, req.contexts, refs, req.mode, req.steps, rng,
                                req.guidance);

    std::vector<std::string> paths;
    std::ostringstream manifest;
    int effective = req.steps > 0 && req.steps < timesteps ? req.steps : timesteps;
    manifest << "mode " << cond_mode_str(req.mode) << "\n";
    manifest << "steps " << effective << "\n";
    manifest << "seed " << req.seed << "\n";
    manifest << "guidance " << req.guidance << "\n";
    manifest << "members " << imgs.size() << "\n";
    for (size_t i = 0; i < imgs.size(); ++i) {
        auto u8 = unit_tensor_to_image(imgs[i].template cast<float>());
        std::string base = req.out_dir + "/member_" + std::to_string(i);
        write_ppm(base + ".ppm", u8);
        write_png(base + ".png", u8);
        paths.push_back(base + ".png");
        manifest << "member " << i << " ref "
                 << (!refs.flags.empty() && refs.flags[i] ? 1 : 0) << " caption";
        for (int tok : req.contexts[i]) manifest << " " << tok;
        manifest << " file member_" << i << ".png\n";
    }
    std::ofstream mf(req.out_dir + "/manifest.txt", std::ios::binary | std::ios::trunc);
    if (!mf) throw LoadError("cannot write sample manifest in " + req.out_dir);
    mf << manifest.str();
    return paths;
}

// Caption text form used by the CLI: comma-separated slot=value pairs, e.g.
// "identity=circle,palette=red,scale=2"; omitted slots stay NULL; "" is the
// fully dropped caption. Values are names for the named families and indices
// everywhere.
std::vector<int> parse_caption_spec(const std::string& spec);

}  // namespace gdt
