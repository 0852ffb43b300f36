#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace safeocc {

// Counter-based 64-bit generator (SplitMix64). Draw i from seed s is a pure
// function of (s, i), so streams are bit-reproducible across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), counter_(0) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Marsaglia's polar method (cached pair).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

    // Independent child stream; mixing keeps sibling streams decorrelated.
    Rng derive(uint64_t stream) const {
        uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull * (stream + 1));
        z = (z ^ (z >> 29)) * 0xFF51AFD7ED558CCDull;
        return Rng(z ^ (z >> 32));
    }

private:
    uint64_t seed_;
    uint64_t counter_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace safeocc
