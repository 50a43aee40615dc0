#pragma once

// Flat key=value configuration files. '#' starts a comment; keys are
// validated against an allowed set so typos fail loudly.

#include <map>
#include <set>
#include <string>

namespace simda {

class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text);

    // Throws ConfigError listing any key not in `allowed`.
    void restrict_keys(const std::set<std::string>& allowed) const;

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::string require_str(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace simda
