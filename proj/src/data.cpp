#include "gdt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>

#include "gdt/image_io.hpp"
#include "gdt/kernels.hpp"

namespace gdt {

namespace {

struct Rgb {
    uint8_t r, g, b;
};

constexpr Rgb kPalette[kNumPalette] = {
    {230, 40, 40},    // red
    {240, 150, 40},   // orange
    {235, 220, 50},   // yellow
    {60, 200, 70},    // green
    {50, 210, 210},   // cyan
    {50, 90, 230},    // blue
    {150, 60, 220},   // purple
    {230, 60, 180},   // magenta
};

constexpr const char* kPaletteNames[kNumPalette] = {"red",  "orange", "yellow", "green",
                                                    "cyan", "blue",   "purple", "magenta"};

constexpr uint8_t kBackgroundShade[kNumBackground] = {30, 80, 130, 180};

constexpr const char* kIdentityNames[kNumIdentity] = {"circle", "square", "triangle",
                                                      "cross"};
constexpr const char* kStyleNames[kNumStyle] = {"filled", "outline"};

bool inside_shape(int identity, int r, int dx, int dy) {
    switch (identity) {
        case 0: return dx * dx + dy * dy <= r * r;
        case 1: return std::max(std::abs(dx), std::abs(dy)) <= r;
        case 2: return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
        default: {
            int arm = r / 3;
            return (std::abs(dx) <= arm && std::abs(dy) <= r) ||
                   (std::abs(dy) <= arm && std::abs(dx) <= r);
        }
    }
}

void check_factor_ranges(const SharedFactors& s, const MemberFactors& m) {
    if (s.identity < 0 || s.identity >= kNumIdentity || s.palette < 0 ||
        s.palette >= kNumPalette || s.style < 0 || s.style >= kNumStyle)
        throw ContractError("shared factor index out of range");
    if (m.quadrant < 0 || m.quadrant >= kNumQuadrant || m.scale < 0 || m.scale >= kNumScale ||
        m.background < 0 || m.background >= kNumBackground)
        throw ContractError("member factor index out of range");
}

int slot_value(int token, int base, int count, const char* slot) {
    if (token == kTokNull) return -1;
    if (token < base || token >= base + count)
        throw ContractError(std::string("caption token ") + std::to_string(token) +
                            " invalid for slot " + slot);
    return token - base;
}

}  // namespace

std::string identity_name(int id) {
    if (id < 0 || id >= kNumIdentity) throw ContractError("identity index out of range");
    return kIdentityNames[id];
}

std::string palette_name(int id) {
    if (id < 0 || id >= kNumPalette) throw ContractError("palette index out of range");
    return kPaletteNames[id];
}

std::string style_name(int id) {
    if (id < 0 || id >= kNumStyle) throw ContractError("style index out of range");
    return kStyleNames[id];
}

std::vector<int> caption_tokens(const SharedFactors& shared, const MemberFactors& member) {
    check_factor_ranges(shared, member);
    return {kTokIdentity + shared.identity, kTokPalette + shared.palette,
            kTokStyle + shared.style,       kTokQuadrant + member.quadrant,
            kTokScale + member.scale,       kTokBackground + member.background};
}

DecodedCaption decode_caption(const std::vector<int>& tokens) {
    if (tokens.size() != static_cast<size_t>(kCaptionSlots))
        throw ContractError("caption must have " + std::to_string(kCaptionSlots) + " slots");
    DecodedCaption d;
    d.identity = slot_value(tokens[0], kTokIdentity, kNumIdentity, "identity");
    d.palette = slot_value(tokens[1], kTokPalette, kNumPalette, "palette");
    d.style = slot_value(tokens[2], kTokStyle, kNumStyle, "style");
    d.quadrant = slot_value(tokens[3], kTokQuadrant, kNumQuadrant, "position");
    d.scale = slot_value(tokens[4], kTokScale, kNumScale, "scale");
    d.background = slot_value(tokens[5], kTokBackground, kNumBackground, "background");
    return d;
}

Tensor<float> render_member(const SharedFactors& shared, const MemberFactors& member,
                            int size, int jx, int jy) {
    if (size < 16 || size % 16 != 0)
        throw ContractError("render size must be a positive multiple of 16");
    check_factor_ranges(shared, member);

    const int S = size;
    const int r = member.scale == 0 ? S / 8 : (member.scale == 1 ? S / 8 + S / 16 : S / 4);
    // lower/right centers sit one pixel in so the largest scale exactly fits;
    // clipped shapes would alias across scales under one-pixel shifts
    const int cx = (member.quadrant % 2 == 0 ? S / 4 : 3 * S / 4 - 1) + jx;
    const int cy = (member.quadrant / 2 == 0 ? S / 4 : 3 * S / 4 - 1) + jy;

    std::vector<uint8_t> mask(static_cast<size_t>(S) * S, 0);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            mask[static_cast<size_t>(y) * S + x] =
                inside_shape(shared.identity, r, x - cx, y - cy) ? 1 : 0;

    if (shared.style == 1) {
        // outline = filled minus 4-neighbor erosion; off-image counts as outside
        auto at = [&](int x, int y) -> uint8_t {
            return (x < 0 || y < 0 || x >= S || y >= S)
                       ? 0
                       : mask[static_cast<size_t>(y) * S + x];
        };
        std::vector<uint8_t> edge(mask.size(), 0);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                edge[static_cast<size_t>(y) * S + x] =
                    at(x, y) && !(at(x - 1, y) && at(x + 1, y) && at(x, y - 1) && at(x, y + 1))
                        ? 1
                        : 0;
        mask.swap(edge);
    }

    const Rgb fg = kPalette[shared.palette];
    const uint8_t bg = kBackgroundShade[member.background];
    auto img = Tensor<float>::zeros({3, S, S});
    float* plane = img.data();
    size_t area = static_cast<size_t>(S) * S;
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            size_t p = static_cast<size_t>(y) * S + x;
            uint8_t c[3] = {bg, bg, bg};
            if (mask[p]) {
                c[0] = fg.r;
                c[1] = fg.g;
                c[2] = fg.b;
            }
            for (int ch = 0; ch < 3; ++ch)
                plane[static_cast<size_t>(ch) * area + p] = u8_to_unit(c[ch]);
        }
    return img;
}

GroupSample render_group(const FactorSpec& factors, int n, int size, uint64_t seed) {
    if (n < 1) throw ContractError("group needs at least one member");
    if (static_cast<size_t>(n) != factors.members.size())
        throw ContractError("factor spec covers " + std::to_string(factors.members.size()) +
                            " members, group size is " + std::to_string(n));
    GroupSample g;
    g.factors = factors;
    g.seed = seed;
    for (int i = 0; i < n; ++i) {
        const auto& m = factors.members[static_cast<size_t>(i)];
        g.images.push_back(render_member(factors.shared, m, size));
        g.captions.push_back(caption_tokens(factors.shared, m));
    }
    return g;
}

int sample_group_size(int max_group, Rng& rng) {
    if (max_group < 1) throw ContractError("max_group must be at least 1");
    return 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_group)));
}

int dynamic_batcher(long long token_budget, int n, int L_img, long long L_ctx_total) {
    if (token_budget < 1 || n < 1 || L_img < 1 || L_ctx_total < 0)
        throw ContractError("batcher arguments must be positive");
    long long per_group = static_cast<long long>(n) * L_img + L_ctx_total;
    if (per_group > token_budget)
        throw CapacityError("one group needs " + std::to_string(per_group) +
                            " tokens, budget is " + std::to_string(token_budget));
    return static_cast<int>(token_budget / per_group);
}

namespace {

// All factor combinations rendered once per image size, stored transposed
// ([dim, count]) so template scores come from one matrix product.
struct TemplateBank {
    int size = 0;
    size_t dim = 0;
    std::vector<float> data_t;   // [dim, count]
    std::vector<float> sqnormf;  // per template

    static constexpr int count = kNumIdentity * kNumPalette * kNumStyle * kNumQuadrant *
                                 kNumScale * kNumBackground;

    static void split_index(int k, SharedFactors& s, MemberFactors& m) {
        m.background = k % kNumBackground;
        k /= kNumBackground;
        m.scale = k % kNumScale;
        k /= kNumScale;
        m.quadrant = k % kNumQuadrant;
        k /= kNumQuadrant;
        s.style = k % kNumStyle;
        k /= kNumStyle;
        s.palette = k % kNumPalette;
        k /= kNumPalette;
        s.identity = k;
    }
};

const TemplateBank& template_bank(int size) {
    static std::mutex mu;
    static std::map<int, TemplateBank> banks;
    std::lock_guard<std::mutex> lock(mu);
    auto it = banks.find(size);
    if (it != banks.end()) return it->second;

    TemplateBank bank;
    bank.size = size;
    bank.dim = static_cast<size_t>(3) * size * size;
    bank.data_t.resize(bank.dim * static_cast<size_t>(TemplateBank::count));
    bank.sqnormf.resize(TemplateBank::count);
    for (int k = 0; k < TemplateBank::count; ++k) {
        SharedFactors s;
        MemberFactors m;
        TemplateBank::split_index(k, s, m);
        auto img = render_member(s, m, size);
        const float* src = img.data();
        double sq = 0.0;
        for (size_t i = 0; i < bank.dim; ++i) {
            bank.data_t[i * TemplateBank::count + static_cast<size_t>(k)] = src[i];
            sq += static_cast<double>(src[i]) * static_cast<double>(src[i]);
        }
        bank.sqnormf[static_cast<size_t>(k)] = static_cast<float>(sq);
    }
    return banks.emplace(size, std::move(bank)).first->second;
}

constexpr int kShifts = 9;  // one-pixel neighborhood, centered at index 4

// Query image translated by (sx, sy) with edge replication; shift index s
// encodes sx = s%3-1, sy = s/3-1.
void shifted_query(const float* px, int S, int s, float* out) {
    int sx = s % 3 - 1, sy = s / 3 - 1;
    size_t area = static_cast<size_t>(S) * S;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                int yy = std::clamp(y - sy, 0, S - 1);
                int xx = std::clamp(x - sx, 0, S - 1);
                out[static_cast<size_t>(ch) * area + static_cast<size_t>(y) * S + x] =
                    px[static_cast<size_t>(ch) * area + static_cast<size_t>(yy) * S + xx];
            }
}

}  // namespace

// Nearest factor combination under the minimum over one-pixel query shifts,
// so the decode tolerates small misplacements. Ranking runs on a float
// matrix product; the two leading candidates are re-scored in double, which
// keeps the distance of a clean render exactly zero (confidence exactly 1).
DecodedFactors factor_oracle_decode(const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ContractError("decoder expects a [3,S,S] image");
    if (image.dim(1) != image.dim(2)) throw ContractError("decoder expects square images");
    const int S = image.dim(1);
    const auto& bank = template_bank(S);
    const int K = TemplateBank::count;
    const size_t D = bank.dim;

    std::vector<float> queries(static_cast<size_t>(kShifts) * D);
    for (int s = 0; s < kShifts; ++s) shifted_query(image.data(), S, s, &queries[s * D]);

    std::vector<float> qsq(kShifts);
    for (int s = 0; s < kShifts; ++s) {
        double sq = 0.0;
        const float* q = &queries[static_cast<size_t>(s) * D];
        for (size_t i = 0; i < D; ++i) sq += static_cast<double>(q[i]) * q[i];
        qsq[static_cast<size_t>(s)] = static_cast<float>(sq);
    }

    std::vector<float> dots(static_cast<size_t>(kShifts) * K);
    kernels::par::matmul_nn(dots.data(), queries.data(), bank.data_t.data(), kShifts,
                            static_cast<int>(D), K, false);

    int best = 0, second = 0;
    float d1 = std::numeric_limits<float>::infinity();
    float d2 = std::numeric_limits<float>::infinity();
    for (int k = 0; k < K; ++k) {
        float dk = std::numeric_limits<float>::infinity();
        for (int s = 0; s < kShifts; ++s) {
            float dsq = qsq[static_cast<size_t>(s)] -
                        2.0f * dots[static_cast<size_t>(s) * K + static_cast<size_t>(k)] +
                        bank.sqnormf[static_cast<size_t>(k)];
            dk = std::min(dk, dsq);
        }
        if (dk < d1) {
            d2 = d1;
            second = best;
            d1 = dk;
            best = k;
        } else if (dk < d2) {
            d2 = dk;
            second = k;
        }
    }

    auto exact_dsq = [&](int k) {
        SharedFactors s;
        MemberFactors m;
        TemplateBank::split_index(k, s, m);
        auto tpl = render_member(s, m, S);
        const float* t = tpl.data();
        double tsq = 0.0;
        for (size_t i = 0; i < D; ++i) tsq += static_cast<double>(t[i]) * t[i];
        double bestd = std::numeric_limits<double>::infinity();
        for (int sh = 0; sh < kShifts; ++sh) {
            const float* q = &queries[static_cast<size_t>(sh) * D];
            double dot = 0.0, xq = 0.0;
            for (size_t i = 0; i < D; ++i) {
                dot += static_cast<double>(q[i]) * t[i];
                xq += static_cast<double>(q[i]) * q[i];
            }
            bestd = std::min(bestd, std::max(0.0, xq - 2.0 * dot + tsq));
        }
        return bestd;
    };

    double e1 = exact_dsq(best), e2 = exact_dsq(second);
    if (e2 < e1) {
        std::swap(e1, e2);
        std::swap(best, second);
    }

    DecodedFactors out;
    TemplateBank::split_index(best, out.shared, out.member);
    double r1 = std::sqrt(e1), r2 = std::sqrt(e2);
    out.confidence = r2 > 0.0 ? (r2 - r1) / r2 : 0.0;
    out.low_confidence = out.confidence < kDecodeConfidenceFloor;
    return out;
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Heldout: return "heldout";
        default: return "quality";
    }
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "heldout") return Split::Heldout;
    if (s == "quality") return Split::Quality;
    throw ConfigError("unknown split: " + s);
}

FactorSpec sample_factors(Split split, int n, Rng& rng) {
    if (n < 1) throw ContractError("group needs at least one member");
    FactorSpec f;
    if (split == Split::Quality) {
        f.shared.identity = static_cast<int>(rng.below(kNumIdentity));
        f.shared.palette = rng.below(2) == 0 ? 0 : 2;  // red or yellow
        f.shared.style = 0;                            // filled
    } else {
        f.shared.identity = static_cast<int>(rng.below(kNumIdentity));
        f.shared.palette = static_cast<int>(rng.below(kNumPalette));
        f.shared.style = static_cast<int>(rng.below(kNumStyle));
    }
    for (int i = 0; i < n; ++i) {
        MemberFactors m;
        m.quadrant = static_cast<int>(rng.below(kNumQuadrant));
        m.scale = static_cast<int>(rng.below(kNumScale));
        m.background = split == Split::Quality ? 0 : static_cast<int>(rng.below(kNumBackground));
        f.members.push_back(m);
    }
    return f;
}

GroupSample sample_at(const DatasetConfig& cfg, Split split, uint64_t index) {
    Rng rng = Rng(cfg.seed)
                  .fork(static_cast<uint64_t>(split) + 1)
                  .fork(index);
    uint64_t group_seed = rng.state();
    int n = sample_group_size(cfg.max_group, rng);
    auto factors = sample_factors(split, n, rng);
    return render_group(factors, n, cfg.image_size, group_seed);
}

std::string write_group_cache(const std::string& dir, const DatasetConfig& cfg, Split split,
                              uint64_t begin, uint64_t count, bool png) {
    namespace fs = std::filesystem;
    fs::path root = fs::path(dir) / split_name(split);
    fs::create_directories(root);

    std::ofstream manifest(root / "captions.tsv", std::ios::trunc);
    if (!manifest) throw LoadError("cannot write manifest under " + root.string());
    manifest << "index\tmember\tn\ttokens\n";

    for (uint64_t idx = begin; idx < begin + count; ++idx) {
        auto g = sample_at(cfg, split, idx);
        int n = static_cast<int>(g.images.size());
        for (int i = 0; i < n; ++i) {
            const auto& img = g.images[static_cast<size_t>(i)];
            int S = img.dim(1);
            ImageU8 u8;
            u8.w = S;
            u8.h = S;
            u8.c = 3;
            u8.px.resize(static_cast<size_t>(S) * S * 3);
            size_t area = static_cast<size_t>(S) * S;
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        u8.at(x, y, ch) = unit_to_u8(
                            img.data()[static_cast<size_t>(ch) * area + y * S + x]);
            std::string name = "g" + std::to_string(idx) + "_m" + std::to_string(i) +
                               (png ? ".png" : ".ppm");
            if (png)
                write_png((root / name).string(), u8);
            else
                write_ppm((root / name).string(), u8);

            manifest << idx << "\t" << i << "\t" << n;
            for (int tok : g.captions[static_cast<size_t>(i)]) manifest << "\t" << tok;
            manifest << "\n";
        }
    }
    return (root / "captions.tsv").string();
}

}  // namespace gdt
