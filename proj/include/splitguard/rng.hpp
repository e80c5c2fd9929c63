#ifndef SPLITGUARD_RNG_HPP
#define SPLITGUARD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "splitguard/common.hpp"

namespace splitguard {

// Deterministic random stream. mt19937_64 supplies the bits; the float
// transforms (53-bit uniform, Box-Muller normal, rejection-sampled bounded
// ints) are pinned here so sequences do not depend on the standard
// library's distribution implementations.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n), unbiased (rejection sampling).
    uint64_t bounded(uint64_t n) {
        if (n == 0) fail("RngStream::bounded: n must be positive");
        const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            const uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace splitguard

#endif
