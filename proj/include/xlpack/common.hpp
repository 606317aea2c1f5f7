#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace xlpack {

using PageId = std::uint64_t;
using TokenId = std::uint32_t;

/// Named counters for records that were skipped, repaired or otherwise
/// worth reporting. Ordered so that serialized reports are stable.
class Tally {
public:
    void add(std::string_view key, std::uint64_t n = 1) { counts_[std::string(key)] += n; }
    std::uint64_t get(std::string_view key) const {
        auto it = counts_.find(std::string(key));
        return it == counts_.end() ? 0 : it->second;
    }
    void merge(const Tally& other) {
        for (const auto& [k, v] : other.counts_) counts_[k] += v;
    }
    const std::map<std::string, std::uint64_t>& counts() const { return counts_; }
    bool empty() const { return counts_.empty(); }

private:
    std::map<std::string, std::uint64_t> counts_;
};

/// Thrown when an input stream ends in the middle of a record.
class TruncatedInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown for unreadable or malformed input files.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

// splitmix64 finalizer; used for seeded, order-independent coins and hashes.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace xlpack
