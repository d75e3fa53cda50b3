#include "gdt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace gdt {

namespace {

int color_bin(float v) {
    double u = (static_cast<double>(v) + 1.0) * 0.5;
    int b = static_cast<int>(u * 4.0);
    return std::clamp(b, 0, 3);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

long long pairs_of(long long k) { return k * (k - 1) / 2; }

}  // namespace

std::vector<double> feature_vector(const Tensor<float>& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ContractError("features expect a [3,S,S] image");
    const int S = image.dim(1);
    if (image.dim(2) != S || S % 8 != 0)
        throw ContractError("features expect square images with size divisible by 8");
    const float* px = image.data();
    const size_t area = static_cast<size_t>(S) * S;

    std::vector<double> f(kFeatureDim, 0.0);

    for (size_t p = 0; p < area; ++p) {
        int r = color_bin(px[p]);
        int g = color_bin(px[area + p]);
        int b = color_bin(px[2 * area + p]);
        f[static_cast<size_t>((r * 4 + g) * 4 + b)] += 1.0;
    }
    for (int i = 0; i < kHistBins; ++i)
        f[static_cast<size_t>(i)] = std::sqrt(f[static_cast<size_t>(i)] / static_cast<double>(area));

    // gray central differences, block-averaged to 8x8
    std::vector<double> gray(area);
    for (size_t p = 0; p < area; ++p)
        gray[p] = (static_cast<double>(px[p]) + px[area + p] + px[2 * area + p]) / 3.0;
    const int cell = S / 8;
    for (int y = 1; y < S - 1; ++y)
        for (int x = 1; x < S - 1; ++x) {
            double gx = (gray[static_cast<size_t>(y) * S + x + 1] -
                         gray[static_cast<size_t>(y) * S + x - 1]) *
                        0.5;
            double gy = (gray[static_cast<size_t>(y + 1) * S + x] -
                         gray[static_cast<size_t>(y - 1) * S + x]) *
                        0.5;
            double mag = std::sqrt(gx * gx + gy * gy);
            f[static_cast<size_t>(kHistBins + (y / cell) * 8 + x / cell)] += mag;
        }
    double cell_px = static_cast<double>(cell) * cell;
    for (int i = kHistBins; i < kFeatureDim; ++i) f[static_cast<size_t>(i)] /= cell_px;

    // equalize the two blocks: the histogram block is unit by construction,
    // so without this the edge content would carry almost no weight
    double esq = 0.0;
    for (int i = kHistBins; i < kFeatureDim; ++i)
        esq += f[static_cast<size_t>(i)] * f[static_cast<size_t>(i)];
    if (esq > 0.0) {
        double escale = 1.0 / std::sqrt(esq);
        for (int i = kHistBins; i < kFeatureDim; ++i) f[static_cast<size_t>(i)] *= escale;
    }

    double norm = std::sqrt(dot(f, f));
    if (norm > 0.0)
        for (double& v : f) v /= norm;
    return f;
}

ConsistencyResult content_consistency(const std::vector<Tensor<float>>& images,
                                      const std::vector<uint8_t>& ref_flags,
                                      bool exclude_all_ref_pairs) {
    const int n = static_cast<int>(images.size());
    if (n < 2) throw MetricError("content consistency needs at least two images");
    std::vector<uint8_t> flags = ref_flags;
    if (flags.empty()) flags.assign(static_cast<size_t>(n), 0);
    if (static_cast<int>(flags.size()) != n)
        throw ContractError("reference flags must cover every image");

    int m = 0;
    for (uint8_t f : flags) m += f ? 1 : 0;

    std::vector<std::vector<double>> feats;
    feats.reserve(static_cast<size_t>(n));
    for (const auto& img : images) feats.push_back(feature_vector(img));

    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            bool ri = flags[static_cast<size_t>(i)] != 0;
            bool rj = flags[static_cast<size_t>(j)] != 0;
            bool dropped = exclude_all_ref_pairs ? (ri || rj) : (ri && rj);
            if (dropped) continue;
            sum += dot(feats[static_cast<size_t>(i)], feats[static_cast<size_t>(j)]);
            ++pairs;
        }

    long long expect = exclude_all_ref_pairs ? pairs_of(n - m) : pairs_of(n) - pairs_of(m);
    if (pairs != static_cast<int>(expect))
        throw ContractError("pair exclusion accounting is inconsistent");
    if (pairs == 0) throw MetricError("no countable pairs after reference exclusion");

    return {sum / pairs, pairs};
}

AdherenceResult prompt_adherence(const std::vector<Tensor<float>>& images,
                                 const std::vector<std::vector<int>>& captions,
                                 const std::vector<uint8_t>& ref_flags) {
    const int n = static_cast<int>(images.size());
    if (n < 1) throw MetricError("prompt adherence needs at least one image");
    if (static_cast<int>(captions.size()) != n)
        throw ContractError("captions must cover every image");
    std::vector<uint8_t> flags = ref_flags;
    if (flags.empty()) flags.assign(static_cast<size_t>(n), 0);
    if (static_cast<int>(flags.size()) != n)
        throw ContractError("reference flags must cover every image");

    AdherenceResult out;
    std::array<int, kCaptionSlots> matched{};
    int total_counted = 0, total_matched = 0;

    for (int i = 0; i < n; ++i) {
        if (flags[static_cast<size_t>(i)]) continue;
        ++out.members;
        auto want = decode_caption(captions[static_cast<size_t>(i)]);
        auto got = factor_oracle_decode(images[static_cast<size_t>(i)]);
        const int wants[kCaptionSlots] = {want.identity, want.palette, want.style,
                                          want.quadrant, want.scale,   want.background};
        const int gots[kCaptionSlots] = {got.shared.identity, got.shared.palette,
                                         got.shared.style,    got.member.quadrant,
                                         got.member.scale,    got.member.background};
        for (int s = 0; s < kCaptionSlots; ++s) {
            if (wants[s] < 0) continue;  // dropped slot carries no constraint
            ++out.slot_counted[static_cast<size_t>(s)];
            ++total_counted;
            if (wants[s] == gots[s]) {
                ++matched[static_cast<size_t>(s)];
                ++total_matched;
            }
        }
    }

    if (out.members == 0) throw MetricError("no non-reference members to score");
    if (total_counted == 0) throw MetricError("no caption slots to score");

    for (int s = 0; s < kCaptionSlots; ++s)
        out.slot_accuracy[static_cast<size_t>(s)] =
            out.slot_counted[static_cast<size_t>(s)] > 0
                ? static_cast<double>(matched[static_cast<size_t>(s)]) /
                      out.slot_counted[static_cast<size_t>(s)]
                : 0.0;
    out.accuracy = static_cast<double>(total_matched) / total_counted;
    return out;
}

double adherence_chance_rate() {
    const double sizes[kCaptionSlots] = {kNumIdentity, kNumPalette,    kNumStyle,
                                         kNumQuadrant, kNumScale,      kNumBackground};
    double s = 0.0;
    for (double v : sizes) s += 1.0 / v;
    return s / kCaptionSlots;
}

double fidelity_mmd(const std::vector<Tensor<float>>& generated,
                    const std::vector<Tensor<float>>& reference) {
    const int na = static_cast<int>(generated.size());
    const int nb = static_cast<int>(reference.size());
    if (na < kMmdMinSet || nb < kMmdMinSet)
        throw ContractError("mmd needs at least " + std::to_string(kMmdMinSet) +
                            " images per set");

    std::vector<std::vector<double>> fa, fb;
    fa.reserve(static_cast<size_t>(na));
    fb.reserve(static_cast<size_t>(nb));
    for (const auto& img : generated) fa.push_back(feature_vector(img));
    for (const auto& img : reference) fb.push_back(feature_vector(img));

    // median pairwise squared distance over the pooled set
    std::vector<const std::vector<double>*> pool;
    for (const auto& f : fa) pool.push_back(&f);
    for (const auto& f : fb) pool.push_back(&f);
    std::vector<double> dists;
    dists.reserve(pairs_of(static_cast<long long>(pool.size())));
    for (size_t i = 0; i < pool.size(); ++i)
        for (size_t j = i + 1; j < pool.size(); ++j) dists.push_back(sqdist(*pool[i], *pool[j]));
    size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<long>(mid), dists.end());
    double bw = dists[mid];
    if (bw <= 0.0) bw = 1.0;

    auto kern = [bw](const std::vector<double>& x, const std::vector<double>& y) {
        return std::exp(-sqdist(x, y) / bw);
    };

    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < na; ++j)
            if (i != j) kaa += kern(fa[static_cast<size_t>(i)], fa[static_cast<size_t>(j)]);
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j)
            if (i != j) kbb += kern(fb[static_cast<size_t>(i)], fb[static_cast<size_t>(j)]);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j)
            kab += kern(fa[static_cast<size_t>(i)], fb[static_cast<size_t>(j)]);

    return kaa / (static_cast<double>(na) * (na - 1)) +
           kbb / (static_cast<double>(nb) * (nb - 1)) -
           2.0 * kab / (static_cast<double>(na) * nb);
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

std::string ablation_report_tsv(std::vector<AblationRow> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const AblationRow& a, const AblationRow& b) { return a.key < b.key; });
    std::ostringstream os;
    os << "variant\tconsistency\tadherence\tmmd\n";
    for (const auto& r : rows) {
        if (r.present)
            os << r.key << "\t" << fmt(r.consistency) << "\t" << fmt(r.adherence) << "\t"
               << fmt(r.mmd) << "\n";
        else
            os << r.key << "\tabsent\tabsent\tabsent\n";
    }
    return os.str();
}

std::string ablation_report_json(std::vector<AblationRow> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const AblationRow& a, const AblationRow& b) { return a.key < b.key; });
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row;
        row["variant"] = r.key;
        row["present"] = r.present;
        if (r.present) {
            row["consistency"] = r.consistency;
            row["adherence"] = r.adherence;
            row["mmd"] = r.mmd;
        }
        doc.push_back(row);
    }
    return doc.dump(2) + "\n";
}

}  // namespace gdt
