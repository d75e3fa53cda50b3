#pragma once
// Checkpoint container: architecture config, step counter, rng state,
// parameters, and optimizer moments in one file. Text header, then one
// binary blob triple (value, first moment, second moment) per parameter in
// name order. Everything is written deterministically, so
// save -> load -> save is byte-identical.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "gdt/config_file.hpp"
#include "gdt/errors.hpp"
#include "gdt/model.hpp"
#include "gdt/optimizer.hpp"
#include "gdt/rng.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

// Architecture fingerprint: every field that determines parameter shapes or
// what the weights mean (variant, dims, channels, vocab, context length,
// objective, training chain length). Runtime knobs (max_group, seed, lr)
// are deliberately excluded: weights stay valid when those change.
inline std::string arch_hash_hex(const ModelConfig& m, int timesteps) {
    std::ostringstream os;
    os << variant_str(m.variant) << ";" << m.image_size << ";" << m.channels_in << ";"
       << m.channels_out << ";" << m.patch << ";" << m.dim << ";" << m.heads << ";"
       << m.depth << ";" << m.vocab << ";" << m.ctx_len << ";"
       << objective_str(m.objective) << ";" << timesteps;
    const std::string s = os.str();
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << h;
    return hex.str();
}

template <typename T>
struct LoadedCheckpoint {
    ModelConfig model;
    int timesteps = 0;
    long long step = 0;
    Rng rng{0};
    ParamStore<T> params;
    AdamW<T> opt;
    std::string arch;  // hash recorded in the file
};

namespace detail {

inline std::string ckpt_dtype_name(uint8_t code) { return code == 0 ? "f32" : "f64"; }

inline std::string expect_line(std::istream& is, const std::string& key) {
    std::string line;
    if (!std::getline(is, line)) throw LoadError("checkpoint truncated before " + key);
    if (line.rfind(key + " ", 0) != 0)
        throw LoadError("checkpoint expected '" + key + "', got '" + line + "'");
    return line.substr(key.size() + 1);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const ModelConfig& mcfg, int timesteps,
                     long long step, const Rng& rng, const ParamStore<T>& params,
                     const AdamW<T>& opt) {
    if (opt.slots().size() != params.size())
        throw ContractError("optimizer state does not cover the parameter store");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw LoadError("cannot write checkpoint " + path);

    Config cfg;
    model_config_to(mcfg, cfg);
    cfg.set("timesteps", std::to_string(timesteps));
    std::string cfg_text = cfg.serialize();

    os << "GDTCKPT1\n";
    os << "dtype " << detail::ckpt_dtype_name(dtype_code<T>::value) << "\n";
    os << "arch " << arch_hash_hex(mcfg, timesteps) << "\n";
    os << "step " << step << "\n";
    os << "opt_updates " << opt.updates() << "\n";
    os << "rng " << rng.state() << "\n";
    os << "config_bytes " << cfg_text.size() << "\n";
    os << cfg_text;
    os << "params " << params.size() << "\n";
    for (const auto& [name, p] : params) {
        const auto& slot = opt.slots().at(name);
        if (slot.m.size() != p.numel() || slot.v.size() != p.numel())
            throw ContractError("optimizer moment size mismatch for " + name);
        os << "name " << name << "\n";
        write_tensor(os, p);
        write_tensor(os, Tensor<T>::from({static_cast<int>(slot.m.size())},
                                         std::vector<T>(slot.m.begin(), slot.m.end())));
        write_tensor(os, Tensor<T>::from({static_cast<int>(slot.v.size())},
                                         std::vector<T>(slot.v.begin(), slot.v.end())));
    }
    if (!os) throw LoadError("write failure on checkpoint " + path);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(is, line) || line != "GDTCKPT1")
        throw LoadError("not a checkpoint file: " + path);

    LoadedCheckpoint<T> out;
    std::string dtype = detail::expect_line(is, "dtype");
    if (dtype != detail::ckpt_dtype_name(dtype_code<T>::value))
        throw LoadError("checkpoint dtype " + dtype + " does not match requested element type");
    out.arch = detail::expect_line(is, "arch");
    out.step = std::stoll(detail::expect_line(is, "step"));
    long long opt_updates = std::stoll(detail::expect_line(is, "opt_updates"));
    out.rng.set_state(std::stoull(detail::expect_line(is, "rng")));

    size_t cfg_bytes = std::stoull(detail::expect_line(is, "config_bytes"));
    std::string cfg_text(cfg_bytes, '\0');
    is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_bytes));
    if (!is) throw LoadError("checkpoint truncated inside config block");
    Config cfg = Config::parse(cfg_text);
    out.model = model_config_from(cfg);
    out.timesteps = static_cast<int>(cfg.get_int("timesteps"));
    if (out.timesteps < 1) throw LoadError("checkpoint has invalid timesteps");
    if (out.arch != arch_hash_hex(out.model, out.timesteps))
        throw LoadError("checkpoint arch hash does not match its own config");

    // Rebuild the store from the embedded config so names and shapes are
    // authoritative, then overwrite values from the file.
    out.params = param_init<T>(out.model, 0);
    out.opt.reset(out.params);
    out.opt.set_updates(opt_updates);

    size_t count = std::stoull(detail::expect_line(is, "params"));
    if (count != out.params.size())
        throw LoadError("checkpoint carries " + std::to_string(count) +
                        " parameters, architecture defines " +
                        std::to_string(out.params.size()));
    for (size_t i = 0; i < count; ++i) {
        std::string name = detail::expect_line(is, "name");
        if (!out.params.has(name)) throw LoadError("checkpoint parameter " + name + " unknown");
        auto& dst = out.params.at(name);
        auto value = read_tensor<T>(is);
        if (value.shape() != dst.shape())
            throw LoadError("checkpoint parameter " + name + " has shape " +
                            shape_str(value.shape()) + ", expected " + shape_str(dst.shape()));
        std::copy(value.data(), value.data() + value.numel(), dst.data());
        auto& slot = out.opt.slots().at(name);
        auto m = read_tensor<T>(is);
        auto v = read_tensor<T>(is);
        if (m.numel() != dst.numel() || v.numel() != dst.numel())
            throw LoadError("checkpoint moments for " + name + " have wrong size");
        std::copy(m.data(), m.data() + m.numel(), slot.m.begin());
        std::copy(v.data(), v.data() + v.numel(), slot.v.begin());
    }
    return out;
}

// Architecture gate used by finetune/sample/eval when a config file is also
// in play: a stale or foreign checkpoint is an error unless forced, in which
// case the checkpoint's own architecture wins.
template <typename T>
void require_arch_match(const LoadedCheckpoint<T>& ckpt, const ModelConfig& mcfg,
                        int timesteps, bool force) {
    if (ckpt.arch == arch_hash_hex(mcfg, timesteps)) return;
    if (force) return;
    throw LoadError("checkpoint architecture hash " + ckpt.arch +
                    " does not match the configured architecture " +
                    arch_hash_hex(mcfg, timesteps) + " (use --force to load anyway)");
}

}  // namespace gdt
