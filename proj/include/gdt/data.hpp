#pragma once
// Procedural correlated image groups: shared identity/palette/style factors
// with per-member position/scale/background, six-slot token captions, an
// exact factor oracle, the group-size law, and the token-budget batcher.
// Rasterization is integer-only so every sample is bit-reproducible.

#include <cstdint>
#include <string>
#include <vector>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

inline constexpr int kNumIdentity = 4;  // circle, square, triangle, cross
inline constexpr int kNumPalette = 8;
inline constexpr int kNumStyle = 2;  // filled, outline
inline constexpr int kNumQuadrant = 4;
inline constexpr int kNumScale = 3;
inline constexpr int kNumBackground = 4;

// Caption vocabulary. Token 0 means "slot dropped"; each factor family owns
// a fixed contiguous id range.
inline constexpr int kTokNull = 0;
inline constexpr int kTokIdentity = 1;
inline constexpr int kTokPalette = 5;
inline constexpr int kTokStyle = 13;
inline constexpr int kTokQuadrant = 15;
inline constexpr int kTokScale = 19;
inline constexpr int kTokBackground = 22;
inline constexpr int kVocabSize = 26;
inline constexpr int kCaptionSlots = 6;

struct SharedFactors {
    int identity = 0;
    int palette = 0;
    int style = 0;
};

struct MemberFactors {
    int quadrant = 0;  // 0 tl, 1 tr, 2 bl, 3 br
    int scale = 0;
    int background = 0;
};

// Shared factors apply to every member; members carry their own layout
// factors. members.size() is the group size.
struct FactorSpec {
    SharedFactors shared;
    std::vector<MemberFactors> members;
};

struct GroupSample {
    std::vector<Tensor<float>> images;        // [3,S,S] in [-1,1]
    std::vector<std::vector<int>> captions;   // kCaptionSlots tokens each
    FactorSpec factors;
    uint64_t seed = 0;
};

std::string identity_name(int id);
std::string palette_name(int id);
std::string style_name(int id);

// Six tokens in fixed slot order: identity, palette, style, quadrant, scale,
// background.
std::vector<int> caption_tokens(const SharedFactors& shared, const MemberFactors& member);

// Factor indices recovered from a caption; -1 where the slot was dropped.
struct DecodedCaption {
    int identity = -1;
    int palette = -1;
    int style = -1;
    int quadrant = -1;
    int scale = -1;
    int background = -1;
};

DecodedCaption decode_caption(const std::vector<int>& tokens);

// One member image. size must be a positive multiple of 16 so the three
// scales stay distinct. jx/jy shift the shape center (used to probe decode
// robustness).
Tensor<float> render_member(const SharedFactors& shared, const MemberFactors& member,
                            int size, int jx = 0, int jy = 0);

GroupSample render_group(const FactorSpec& factors, int n, int size, uint64_t seed);

// Uniform on {1..max_group}.
int sample_group_size(int max_group, Rng& rng);

// Number of groups that fit a fixed token budget. One group costs
// n*L_img + L_ctx_total tokens.
int dynamic_batcher(long long token_budget, int n, int L_img, long long L_ctx_total);

// Nearest-template factor decode. Exact (confidence 1) on renderer outputs;
// on arbitrary images returns the nearest factor combination plus a margin
// confidence in [0,1].
struct DecodedFactors {
    SharedFactors shared;
    MemberFactors member;
    double confidence = 0.0;
    bool low_confidence = false;
};

inline constexpr double kDecodeConfidenceFloor = 0.05;

DecodedFactors factor_oracle_decode(const Tensor<float>& image);

enum class Split { Train, Heldout, Quality };

std::string split_name(Split s);
Split parse_split(const std::string& s);

struct DatasetConfig {
    int image_size = 32;
    int max_group = 4;
    uint64_t seed = 0;
    long long corpus_size = 500000;  // nominal size recorded in manifests
};

// Draws group factors. The quality split narrows to high-contrast renders:
// palette in {red, yellow}, filled style, darkest background.
FactorSpec sample_factors(Split split, int n, Rng& rng);

// Deterministic corpus access: (config, split, index) -> identical sample on
// every run. Each index derives its own non-overlapping rng stream.
GroupSample sample_at(const DatasetConfig& cfg, Split split, uint64_t index);

// Writes images (PNG when png=true, else PPM) plus a caption manifest
// "index member n tokens..." under dir/<split>/. Returns the manifest path.
std::string write_group_cache(const std::string& dir, const DatasetConfig& cfg, Split split,
                              uint64_t begin, uint64_t count, bool png);

}  // namespace gdt
