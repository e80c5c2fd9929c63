#ifndef SPLITGUARD_COMMON_HPP
#define SPLITGUARD_COMMON_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace splitguard {

// All module errors are runtime_errors with a message naming the offender.
[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// FNV-1a, 64-bit. Used for seed derivation and config hashing.
inline constexpr uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a_str(std::string_view s, uint64_t h = kFnvOffset) {
    return fnv1a(s.data(), s.size(), h);
}

inline uint64_t fnv1a_u64(uint64_t v, uint64_t h = kFnvOffset) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    return fnv1a(bytes, 8, h);
}

// Deterministic sub-seed: master seed, then a label, then an index,
// chained through FNV-1a.
inline uint64_t derive_seed(uint64_t master, std::string_view label, uint64_t index = 0) {
    uint64_t h = fnv1a_u64(master);
    h = fnv1a_str(label, h);
    h = fnv1a_u64(index, h);
    return h;
}

}  // namespace splitguard

#endif
