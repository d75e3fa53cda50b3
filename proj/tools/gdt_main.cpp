// Command-line front end: train, finetune, sample, eval, inspect.
// All real work lives in the library; this file parses flags, moves files,
// and maps exceptions to stderr + exit 1.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gdt/checkpoint.hpp"
#include "gdt/group_layout.hpp"
#include "gdt/image_io.hpp"
#include "gdt/trainer.hpp"

namespace fs = std::filesystem;
using namespace gdt;

namespace {

// training element type; tests exercise the double path
using Elem = float;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!s.empty() && s.back() == ',') out.push_back("");
    return out;
}

// "--refs idx:file,..." -> flags + loaded unit-range images
ReferenceSpec<float> parse_refs(const std::string& spec, int n, int image_size) {
    ReferenceSpec<float> refs = ReferenceSpec<float>::none(n);
    if (spec.empty()) return refs;
    for (const auto& item : split_list(spec)) {
        auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
            throw ConfigError("--refs items must look like idx:file, got '" + item + "'");
        int idx;
        try {
            size_t used;
            idx = std::stoi(item.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw ConfigError("--refs index is not a number in '" + item + "'");
        }
        if (idx < 0 || idx >= n)
            throw ConfigError("--refs index " + std::to_string(idx) + " outside group of " +
                              std::to_string(n));
        if (refs.flags[static_cast<size_t>(idx)])
            throw ConfigError("--refs lists member " + std::to_string(idx) + " twice");
        auto img = read_image(item.substr(colon + 1));
        if (img.w != image_size || img.h != image_size)
            throw ConfigError("reference image is " + std::to_string(img.w) + "x" +
                              std::to_string(img.h) + ", model expects " +
                              std::to_string(image_size) + "x" + std::to_string(image_size));
        refs.flags[static_cast<size_t>(idx)] = 1;
        refs.images[static_cast<size_t>(idx)] = image_to_unit_tensor(img);
    }
    return refs;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + path);
    out << text;
}

std::ofstream open_log(const std::string& path) {
    std::ofstream log(path, std::ios::app);
    if (!log) throw LoadError("cannot open log " + path);
    return log;
}

int cmd_train(const CLI::App& cmd, const std::string& config_path, const std::string& out,
              const std::string& ckpt, uint64_t seed, long long steps, bool force) {
    RunConfig rc = run_config_from(Config::load(config_path));
    if (cmd.count("--seed")) rc.train.seed = seed;
    if (cmd.count("--steps")) rc.train.steps = steps;
    check_run_config(rc);

    fs::create_directories(out);
    Config resolved;
    run_config_to(rc, resolved);
    resolved.save(out + "/config.txt");

    TrainState<Elem> st;
    if (!ckpt.empty()) {
        auto loaded = load_checkpoint<Elem>(ckpt);
        require_arch_match(loaded, rc.model, rc.train.timesteps, force);
        st = state_from_checkpoint(std::move(loaded), rc.train);
        std::cout << "resumed from " << ckpt << " at step " << st.step << "\n";
    } else {
        st = init_train_state<Elem>(rc);
    }

    auto log = open_log(out + "/train_log.txt");
    pretrain_stage(st, &log, out);
    std::string final_path = out + "/checkpoint_final.bin";
    save_state(st, final_path);
    std::cout << "trained to step " << st.step << ", checkpoint " << final_path << "\n";
    return 0;
}

int cmd_finetune(const CLI::App& cmd, const std::string& ckpt, const std::string& config_path,
                 const std::string& out, long long steps, uint64_t seed, bool force,
                 bool skip_eval) {
    auto loaded = load_checkpoint<Elem>(ckpt);
    TrainConfig tc;
    if (!config_path.empty()) {
        RunConfig rc = run_config_from(Config::load(config_path));
        require_arch_match(loaded, rc.model, rc.train.timesteps, force);
        tc = rc.train;
    }
    tc.timesteps = loaded.timesteps;
    if (cmd.count("--steps")) tc.finetune_steps = steps;
    if (cmd.count("--seed")) tc.seed = seed;
    check_train_config(tc);

    auto st = state_from_checkpoint(std::move(loaded), tc);
    fs::create_directories(out);

    EvalRequest ereq;
    ereq.split = Split::Quality;
    ereq.groups = tc.eval_groups;
    ereq.sample_steps = tc.sample_steps;
    ereq.seed = tc.seed;
    ereq.mmd = false;  // fidelity pools compare against the broad held-out law
    if (!skip_eval) {
        auto before = run_eval(st.model, st.params, tc.timesteps, ereq);
        write_text(out + "/eval_before.json", eval_report_json(before));
        write_text(out + "/eval_before.txt", eval_report_text(before));
        std::cout << "before:\n" << eval_report_text(before);
    }

    auto log = open_log(out + "/finetune_log.txt");
    finetune_stage(st, tc.finetune_steps, &log, out);
    std::string final_path = out + "/checkpoint_finetuned.bin";
    save_state(st, final_path);

    if (!skip_eval) {
        auto after = run_eval(st.model, st.params, tc.timesteps, ereq);
        write_text(out + "/eval_after.json", eval_report_json(after));
        write_text(out + "/eval_after.txt", eval_report_text(after));
        std::cout << "after:\n" << eval_report_text(after);
    }
    std::cout << "finetuned to step " << st.step << ", checkpoint " << final_path << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt, const std::vector<std::string>& captions,
               const std::string& mode, const std::string& refs_spec, int steps,
               uint64_t seed, double guidance, const std::string& out) {
    auto loaded = load_checkpoint<Elem>(ckpt);
    if (captions.empty()) throw ConfigError("sample needs at least one --caption");

    SampleRequest req;
    for (const auto& c : captions) req.contexts.push_back(parse_caption_spec(c));
    req.mode = parse_cond_mode(mode);
    req.refs = parse_refs(refs_spec, static_cast<int>(captions.size()),
                          loaded.model.image_size);
    req.steps = steps;
    req.seed = seed;
    req.guidance = guidance;
    req.out_dir = out;

    auto paths = sample_to_disk(loaded.model, loaded.params, loaded.timesteps, req);
    for (const auto& p : paths) std::cout << p << "\n";
    std::cout << "manifest " << out << "/manifest.txt\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& split, const std::string& metrics,
             int groups, int steps, uint64_t seed, const std::string& out) {
    auto loaded = load_checkpoint<Elem>(ckpt);
    EvalRequest req;
    req.split = parse_split(split);
    req.groups = groups;
    req.sample_steps = steps;
    req.seed = seed;
    req.consistency = req.adherence = req.mmd = false;
    for (const auto& m : split_list(metrics)) {
        if (m == "consistency")
            req.consistency = true;
        else if (m == "adherence")
            req.adherence = true;
        else if (m == "mmd")
            req.mmd = true;
        else
            throw ConfigError("unknown metric '" + m +
                              "' (expected consistency, adherence, mmd)");
    }
    auto rep = run_eval(loaded.model, loaded.params, loaded.timesteps, req);
    std::cout << eval_report_text(rep);
    if (!out.empty()) {
        fs::create_directories(out);
        write_text(out + "/eval_report.json", eval_report_json(rep));
        write_text(out + "/eval_report.txt", eval_report_text(rep));
        std::cout << "report " << out << "/eval_report.json\n";
    }
    return 0;
}

int inspect_checkpoint(const std::string& ckpt) {
    auto loaded = load_checkpoint<Elem>(ckpt);
    Config cfg;
    model_config_to(loaded.model, cfg);
    cfg.set("timesteps", std::to_string(loaded.timesteps));
    std::cout << "file " << ckpt << "\n";
    std::cout << "arch " << loaded.arch << "\n";
    std::cout << "step " << loaded.step << "\n";
    std::cout << "opt_updates " << loaded.opt.updates() << "\n";
    std::cout << "\n" << cfg.serialize() << "\n";
    std::cout << param_manifest(loaded.params);

    // the parameter set must not depend on the group-size cap
    ModelConfig narrow = loaded.model;
    ModelConfig wide = loaded.model;
    narrow.max_group = 1;
    wide.max_group = 8;
    auto a = param_init<Elem>(narrow, 0);
    auto b = param_init<Elem>(wide, 0);
    if (a.total_numel() != b.total_numel() || a.total_numel() != loaded.params.total_numel())
        throw ContractError("parameter count depends on max_group");
    std::cout << "\nparam count invariant to max_group: ok\n";
    return 0;
}

int inspect_mask(int n, int img_tokens, const std::string& ctx_spec) {
    std::vector<int> ctx;
    for (const auto& item : split_list(ctx_spec)) {
        try {
            ctx.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("--ctx wants comma-separated token counts, got '" + item + "'");
        }
    }
    if (static_cast<int>(ctx.size()) == 1 && n > 1) ctx.assign(static_cast<size_t>(n), ctx[0]);
    std::cout << mask_dump(make_layout(n, img_tokens, ctx));
    return 0;
}

int inspect_schedule(const std::string& kind, int timesteps, int respace_steps) {
    auto sched = build_schedule(parse_schedule_kind(kind), timesteps);
    if (respace_steps > 0) sched = respace(sched, respace_steps);
    std::cout << schedule_dump(sched);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"group diffusion transformer workbench"};
    app.require_subcommand(1);

    std::string config_path, ckpt, out, mode = "none", refs_spec, split = "heldout";
    std::string metrics = "consistency,adherence,mmd";
    std::string target, mask_ctx = "6";
    std::vector<std::string> captions;
    uint64_t seed = 0;
    long long steps_ll = 0;
    int steps = 50, groups = 25, mask_n = 2, mask_img = 16;
    int timesteps = 1000, respace_steps = 0;
    double guidance = 1.0;
    bool force = false, skip_eval = false;
    std::string sched_kind = "ddpm-linear";

    auto* train = app.add_subcommand("train", "pretrain a model from a config file");
    train->add_option("--config", config_path, "key=value config file")->required();
    train->add_option("--out", out, "output directory")->capture_default_str()->default_val("out");
    train->add_option("--ckpt", ckpt, "checkpoint to resume from");
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--steps", steps_ll, "override the config step count");
    train->add_flag("--force", force, "resume despite an architecture mismatch");

    auto* finetune = app.add_subcommand("finetune", "quality-tune from a checkpoint");
    finetune->add_option("--ckpt", ckpt, "base checkpoint")->required();
    finetune->add_option("--config", config_path, "config for run knobs (architecture must match)");
    finetune->add_option("--out", out, "output directory")->capture_default_str()->default_val("out");
    finetune->add_option("--steps", steps_ll, "finetune step count");
    finetune->add_option("--seed", seed, "override the seed");
    finetune->add_flag("--force", force, "proceed despite an architecture mismatch");
    finetune->add_flag("--skip-eval", skip_eval, "skip the before/after evaluation reports");

    auto* sample = app.add_subcommand("sample", "generate one image group");
    sample->add_option("--ckpt", ckpt, "checkpoint to sample from")->required();
    sample->add_option("--caption", captions,
                       "per-member caption, repeatable; slot=value pairs, empty for none");
    sample->add_option("--mode", mode, "conditioning mode: none|inpaint|sdedit")
        ->capture_default_str();
    sample->add_option("--refs", refs_spec, "reference images as idx:file,...");
    sample->add_option("--steps", steps, "denoising steps, 0 = full chain")
        ->capture_default_str();
    sample->add_option("--seed", seed, "sampling seed")->capture_default_str();
    sample->add_option("--guidance", guidance, "caption guidance scale, 1.0 = off")
        ->capture_default_str();
    sample->add_option("--out", out, "output directory")
        ->capture_default_str()
        ->default_val("samples");

    auto* eval = app.add_subcommand("eval", "score a checkpoint on a data split");
    eval->add_option("--ckpt", ckpt, "checkpoint to evaluate")->required();
    eval->add_option("--split", split, "train|heldout|quality")->capture_default_str();
    eval->add_option("--metrics", metrics, "comma list of consistency,adherence,mmd")
        ->capture_default_str();
    eval->add_option("--groups", groups, "number of sampled groups")->capture_default_str();
    eval->add_option("--steps", steps, "denoising steps per group")->capture_default_str();
    eval->add_option("--seed", seed, "evaluation seed")->capture_default_str();
    eval->add_option("--out", out, "directory for report files (optional)");

    auto* inspect = app.add_subcommand("inspect", "dump internals as text");
    inspect->add_option("target", target, "checkpoint|mask|schedule")->required();
    inspect->add_option("--ckpt", ckpt, "checkpoint file (target checkpoint)");
    inspect->add_option("--n", mask_n, "group size (target mask)")->capture_default_str();
    inspect->add_option("--img", mask_img, "image tokens per member (target mask)")
        ->capture_default_str();
    inspect->add_option("--ctx", mask_ctx,
                        "context tokens per member, single value or comma list (target mask)")
        ->capture_default_str();
    inspect->add_option("--kind", sched_kind, "schedule kind (target schedule)")
        ->capture_default_str();
    inspect->add_option("--timesteps", timesteps, "schedule length (target schedule)")
        ->capture_default_str();
    inspect->add_option("--respace", respace_steps, "respaced step count, 0 = none")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train)
            return cmd_train(*train, config_path, out, ckpt, seed, steps_ll, force);
        if (*finetune)
            return cmd_finetune(*finetune, ckpt, config_path, out, steps_ll, seed, force,
                                skip_eval);
        if (*sample)
            return cmd_sample(ckpt, captions, mode, refs_spec, steps, seed, guidance, out);
        if (*eval)
            return cmd_eval(ckpt, split, metrics, groups, steps, seed, out);
        if (*inspect) {
            if (target == "checkpoint") {
                if (ckpt.empty()) throw ConfigError("inspect checkpoint needs --ckpt");
                return inspect_checkpoint(ckpt);
            }
            if (target == "mask") return inspect_mask(mask_n, mask_img, mask_ctx);
            if (target == "schedule")
                return inspect_schedule(sched_kind, timesteps, respace_steps);
            throw ConfigError("unknown inspect target '" + target +
                              "' (expected checkpoint, mask, schedule)");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
