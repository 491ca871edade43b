#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stm {

// Deterministic random source. Only the raw mt19937_64 stream is used; the
// uniform/normal mappings are hand-rolled so output is identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t bits() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // inclusive range, rejection-free modulo is fine at these ranges
    int uniform_int(int a, int b) {
        uint64_t span = static_cast<uint64_t>(b - a) + 1;
        return a + static_cast<int>(gen_() % span);
    }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace stm
