#include "ipld/config.hpp"

#include "ipld/error.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ipld::config {

namespace {

std::string_view trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const std::string& lookup(const KeyValues& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(key, "missing value");
    return it->second;
}

KeyValues parse_text(std::string_view text, const std::string& source) {
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
        if (eq == std::string_view::npos) throw ParseError(line_no, source + "expected key=value");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(line_no, source + "empty key");
        kv[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
}

}  // namespace

KeyValues parse(std::string_view text) { return parse_text(text, ""); }

KeyValues load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path.string() + ": ");
}

std::string env_name(const std::string& key) {
    std::string out = "IPLD_";
    for (char c : key) {
        if (c == '.' || c == '-') out += '_';
        else out += static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c);
    }
    return out;
}

KeyValues from_environment(const std::vector<std::string>& keys) {
    KeyValues kv;
    for (const auto& key : keys) {
        if (const char* v = std::getenv(env_name(key).c_str())) kv[key] = v;
    }
    return kv;
}

void merge(KeyValues& base, const KeyValues& over) {
    for (const auto& [k, v] : over) base[k] = v;
}

std::string hash(const KeyValues& kv) {
    std::uint64_t h = 14695981039346656037ULL;
    auto feed = [&](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : kv) {
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double get_double(const KeyValues& kv, const std::string& key) {
    const auto& s = lookup(kv, key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key, "'" + s + "' is not a number");
    return v;
}

long long get_int(const KeyValues& kv, const std::string& key) {
    const auto& s = lookup(kv, key);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key, "'" + s + "' is not an integer");
    return v;
}

std::uint64_t get_uint(const KeyValues& kv, const std::string& key) {
    const auto& s = lookup(kv, key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError(key, "'" + s + "' is not a non-negative integer");
    }
    return v;
}

bool get_bool(const KeyValues& kv, const std::string& key) {
    const auto& s = lookup(kv, key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key, "'" + s + "' is not a boolean");
}

std::vector<double> get_doubles(const KeyValues& kv, const std::string& key) {
    const auto& s = lookup(kv, key);
    std::vector<double> out;
    std::string_view rest = s;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = trim(rest.substr(0, comma));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError(key, "'" + s + "' is not a comma-separated list of numbers");
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace ipld::config
