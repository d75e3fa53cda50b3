#pragma once

#include <map>
#include <string>

#include "gdt/errors.hpp"

namespace gdt {

// Flat key=value text config. '#' starts a comment, blank lines are skipped,
// keys are unique. Serialization is key-sorted so round trips are stable.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    const std::string& get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& dflt) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long dflt) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double dflt) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool dflt) const;

    std::string serialize() const;
    void save(const std::string& path) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace gdt
