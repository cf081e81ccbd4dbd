#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fapm {

/// 64-bit FNV-1a, rendered as 16 hex digits. Stable across platforms, so it
/// can be embedded in artifacts.
inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

}  // namespace fapm
