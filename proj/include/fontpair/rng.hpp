#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fontpair {

// Deterministic generator used everywhere randomness appears. Built on
// splitmix64 so that streams are reproducible across platforms and standard
// library versions (std:: distributions are implementation-defined and would
// break byte-identical manifests).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    // Derive an independent stream, e.g. per shard, per epoch, per sample.
    static Rng child(uint64_t seed, uint64_t stream) {
        Rng r(seed ^ (0x9e3779b97f4a7c15ull + stream * 0xbf58476d1ce4e5b9ull));
        r.next_u64();
        return r;
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased (rejection sampling).
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t limit = ~uint64_t(0) - (~uint64_t(0) % n);
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fontpair
