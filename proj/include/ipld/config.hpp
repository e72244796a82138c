#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ipld::config {

using KeyValues = std::map<std::string, std::string>;

/// Flat key=value text. '#' starts a comment, blank lines are skipped, keys may contain dots.
KeyValues parse(std::string_view text);
KeyValues load_file(const std::filesystem::path& path);

/// vmd.max_iters -> IPLD_VMD_MAX_ITERS
std::string env_name(const std::string& key);
/// Values of IPLD_* variables for the given keys, where set.
KeyValues from_environment(const std::vector<std::string>& keys);

/// Entries of over replace entries of base.
void merge(KeyValues& base, const KeyValues& over);

/// FNV-1a over the sorted "key=value\n" lines, as 16 hex digits.
std::string hash(const KeyValues& kv);

double get_double(const KeyValues& kv, const std::string& key);
long long get_int(const KeyValues& kv, const std::string& key);
std::uint64_t get_uint(const KeyValues& kv, const std::string& key);
bool get_bool(const KeyValues& kv, const std::string& key);
std::vector<double> get_doubles(const KeyValues& kv, const std::string& key);

/// Raised for a missing or malformed value; names the key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error(key + ": " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace ipld::config
