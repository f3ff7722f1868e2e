#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rat {

// Line-based `key = value` text config with `#` comments. Keys keep their
// file order for round-tripping into checkpoint manifests.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_text(const std::string& text, const std::string& origin = "<text>");

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_str(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;

    // serialization in insertion order
    std::string to_text() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

}  // namespace rat
