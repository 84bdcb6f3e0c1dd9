#include "navar/common.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace navar {

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

std::string format_scientific(double v, int digits) {
    std::array<char, 64> buf{};
    const int n = std::snprintf(buf.data(), buf.size(), "%.*e", digits, v);
    return {buf.data(), static_cast<std::size_t>(n)};
}

std::uint64_t fnv1a(const std::string& bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(v));
    return {buf.data(), 16};
}

}  // namespace navar
