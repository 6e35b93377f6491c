#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace icl {

inline std::uint64_t splitmix64(std::uint64_t x) {
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

/// Hex SHA-256 digest of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Hex SHA-256 digest of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

} // namespace icl
