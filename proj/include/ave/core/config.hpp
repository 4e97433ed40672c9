#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ave {

/// Flat `key = value` configuration. Lines starting with '#' are comments;
/// `[section]` headers prefix the following keys with "section.".
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Keys present in the file that no getter has asked for.
    std::vector<std::string> unused_keys() const;
    const std::map<std::string, std::string>& values() const { return values_; }
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

} // namespace ave
