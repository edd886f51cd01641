#pragma once

// Flat `key = value` configuration text. Lines starting with '#' (after
// optional whitespace) are comments; trailing `# ...` is stripped too. Keys
// are kept in first-seen order so a formatted config reads back identically.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace byteflow::config {

class KeyValues {
public:
    /// Throws Config on a malformed line (no '=' or empty key).
    static KeyValues parse(std::string_view text);
    /// Throws Io when the file cannot be read.
    static KeyValues load(const std::filesystem::path& path);

    /// Inserts or overwrites.
    void set(std::string key, std::string value);
    [[nodiscard]] std::optional<std::string> get(std::string_view key) const;
    [[nodiscard]] bool contains(std::string_view key) const { return get(key).has_value(); }
    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

    /// Entries of `other` override entries here.
    void merge(const KeyValues& other);

    [[nodiscard]] std::string format() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

// Typed field readers. Each throws Config naming the key on a parse failure
// and leaves `out` untouched when the key is absent.
void read(const KeyValues& kv, std::string_view key, double& out);
void read(const KeyValues& kv, std::string_view key, unsigned long& out);
void read(const KeyValues& kv, std::string_view key, unsigned long long& out);
void read(const KeyValues& kv, std::string_view key, int& out);
void read(const KeyValues& kv, std::string_view key, bool& out);
void read(const KeyValues& kv, std::string_view key, std::string& out);

/// Locale-independent shortest round-trip decimal.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view key);

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "BYTEFLOW_CONFIG";

}  // namespace byteflow::config
