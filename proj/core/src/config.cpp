#include "byteflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "byteflow/error.hpp"

namespace byteflow::config {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw Error(ErrorKind::Config,
                "key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as " + std::string(expected));
}

template <typename T>
T parse_integer(std::string_view text, std::string_view key) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) bad_value(key, text, "integer");
    return value;
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty key");
        kv.set(std::string(key), std::string(value));
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void KeyValues::set(std::string key, std::string value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> KeyValues::get(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

void KeyValues::merge(const KeyValues& other) {
    for (const auto& [k, v] : other.entries_) set(k, v);
}

std::string KeyValues::format() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::string_view key) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) bad_value(key, text, "number");
    return value;
}

void read(const KeyValues& kv, std::string_view key, double& out) {
    if (auto v = kv.get(key)) out = parse_double(*v, key);
}

void read(const KeyValues& kv, std::string_view key, unsigned long& out) {
    if (auto v = kv.get(key)) out = parse_integer<unsigned long>(*v, key);
}

void read(const KeyValues& kv, std::string_view key, unsigned long long& out) {
    if (auto v = kv.get(key)) out = parse_integer<unsigned long long>(*v, key);
}

void read(const KeyValues& kv, std::string_view key, int& out) {
    if (auto v = kv.get(key)) out = parse_integer<int>(*v, key);
}

void read(const KeyValues& kv, std::string_view key, bool& out) {
    if (auto v = kv.get(key)) {
        if (*v == "true" || *v == "1") {
            out = true;
        } else if (*v == "false" || *v == "0") {
            out = false;
        } else {
            bad_value(key, *v, "boolean");
        }
    }
}

void read(const KeyValues& kv, std::string_view key, std::string& out) {
    if (auto v = kv.get(key)) out = *v;
}

}  // namespace byteflow::config
