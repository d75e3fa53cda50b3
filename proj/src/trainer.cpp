#include "gdt/trainer.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace gdt {

std::string eval_report_json(const EvalReport& r) {
    nlohmann::json j;
    j["split"] = r.split;
    j["groups"] = r.groups;
    j["group_size"] = r.group_size;
    j["sample_steps"] = r.sample_steps;
    j["seed"] = r.seed;
    j["chance_rate"] = r.chance_rate;
    if (r.has_consistency) j["consistency"] = r.consistency;
    if (r.has_adherence) {
        j["adherence"] = r.adherence;
        j["adherence_members"] = r.adherence_members;
    }
    if (r.has_mmd) j["mmd"] = r.mmd;
    return j.dump(2) + "\n";
}

std::string eval_report_text(const EvalReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "split " << r.split << "\n";
    os << "groups " << r.groups << " group_size " << r.group_size << " sample_steps "
       << r.sample_steps << " seed " << r.seed << "\n";
    if (r.has_consistency) os << "consistency " << r.consistency << "\n";
    if (r.has_adherence)
        os << "adherence " << r.adherence << " members " << r.adherence_members
           << " chance " << r.chance_rate << "\n";
    if (r.has_mmd) os << "mmd " << r.mmd << "\n";
    return os.str();
}

namespace {

int named_index(const std::string& value, int count, std::string (*name)(int)) {
    for (int i = 0; i < count; ++i)
        if (name(i) == value) return i;
    return -1;
}

int parse_index(const std::string& key, const std::string& value, int count) {
    size_t pos = 0;
    int v = -1;
    try {
        v = std::stoi(value, &pos);
    } catch (const std::exception&) {
        throw ConfigError("caption slot " + key + " has non-numeric value '" + value + "'");
    }
    if (pos != value.size() || v < 0 || v >= count)
        throw ConfigError("caption slot " + key + " value '" + value + "' outside [0," +
                          std::to_string(count - 1) + "]");
    return v;
}

}  // namespace

std::vector<int> parse_caption_spec(const std::string& spec) {
    static const char* kQuadrantNames[] = {"tl", "tr", "bl", "br"};
    std::vector<int> tokens(kCaptionSlots, kTokNull);
    if (spec.empty()) return tokens;
    std::istringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        auto eq = part.find('=');
        if (eq == std::string::npos)
            throw ConfigError("caption entry '" + part + "' is not slot=value");
        std::string key = part.substr(0, eq);
        std::string value = part.substr(eq + 1);
        if (key == "identity") {
            int v = named_index(value, kNumIdentity, identity_name);
            if (v < 0) v = parse_index(key, value, kNumIdentity);
            tokens[0] = kTokIdentity + v;
        } else if (key == "palette") {
            int v = named_index(value, kNumPalette, palette_name);
            if (v < 0) v = parse_index(key, value, kNumPalette);
            tokens[1] = kTokPalette + v;
        } else if (key == "style") {
            int v = named_index(value, kNumStyle, style_name);
            if (v < 0) v = parse_index(key, value, kNumStyle);
            tokens[2] = kTokStyle + v;
        } else if (key == "quadrant") {
            int v = -1;
            for (int i = 0; i < kNumQuadrant; ++i)
                if (value == kQuadrantNames[i]) v = i;
            if (v < 0) v = parse_index(key, value, kNumQuadrant);
            tokens[3] = kTokQuadrant + v;
        } else if (key == "scale") {
            tokens[4] = kTokScale + parse_index(key, value, kNumScale);
        } else if (key == "background") {
            tokens[5] = kTokBackground + parse_index(key, value, kNumBackground);
        } else {
            throw ConfigError("unknown caption slot '" + key + "'");
        }
    }
    return tokens;
}

}  // namespace gdt
