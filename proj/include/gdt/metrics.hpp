#pragma once
// Desk-scale evaluation: hand-crafted image features, group content
// consistency with the reference-pair exclusion rule, oracle-decoded prompt
// adherence, an unbiased RBF MMD fidelity proxy, and the ablation report.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gdt/data.hpp"
#include "gdt/errors.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

// Concatenated 4x4x4 RGB histogram (Hellinger square-root counts) and an 8x8
// block-averaged gradient-magnitude map, L2-normalized to a unit vector.
inline constexpr int kHistBins = 64;
inline constexpr int kEdgeCells = 64;
inline constexpr int kFeatureDim = kHistBins + kEdgeCells;

std::vector<double> feature_vector(const Tensor<float>& image);

struct ConsistencyResult {
    double score = 0.0;
    int pairs = 0;
};

// Mean pairwise cosine over unordered image pairs. Default exclusion drops
// only reference-reference pairs (count C(n,2) - C(m,2)); with
// exclude_all_ref_pairs every pair touching a reference is dropped (count
// C(n-m,2)). Zero countable pairs is a metric error.
ConsistencyResult content_consistency(const std::vector<Tensor<float>>& images,
                                      const std::vector<uint8_t>& ref_flags,
                                      bool exclude_all_ref_pairs = false);

struct AdherenceResult {
    double accuracy = 0.0;  // matched slots / counted slots
    int members = 0;        // non-reference members scored
    std::array<double, kCaptionSlots> slot_accuracy{};
    std::array<int, kCaptionSlots> slot_counted{};
};

// Per-slot factor match between oracle-decoded images and their captions,
// over non-reference members only. Dropped (NULL) caption slots are not
// counted.
AdherenceResult prompt_adherence(const std::vector<Tensor<float>>& images,
                                 const std::vector<std::vector<int>>& captions,
                                 const std::vector<uint8_t>& ref_flags);

// Chance accuracy of a random caption against an unrelated image: mean of
// 1/|slot| over the six slots.
double adherence_chance_rate();

// Unbiased squared MMD with an RBF kernel on feature vectors; bandwidth from
// the median pairwise squared distance over the pooled sets (1 when the
// median vanishes). Both sets need at least 50 images.
inline constexpr int kMmdMinSet = 50;

double fidelity_mmd(const std::vector<Tensor<float>>& generated,
                    const std::vector<Tensor<float>>& reference);

struct AblationRow {
    std::string key;
    bool present = false;  // false marks a missing checkpoint; metrics ignored
    double consistency = 0.0;
    double adherence = 0.0;
    double mmd = 0.0;
};

// Rows sorted by key; absent rows render as "absent". The TSV form is for
// terminals, the JSON form for machines.
std::string ablation_report_tsv(std::vector<AblationRow> rows);
std::string ablation_report_json(std::vector<AblationRow> rows);

}  // namespace gdt
