#pragma once

#include <cstdint>
#include <random>

#include "salgrid/tensor.hpp"

namespace salgrid {

/// splitmix64 finalizer; used to derive stream seeds from (base, tag, index)
/// so that per-sample generation is order-independent.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t tag, uint64_t index) {
    return mix_seed(base ^ mix_seed(tag ^ mix_seed(index)));
}

/// Deterministic random source. Normal variates use Box-Muller over the raw
/// engine output rather than std::normal_distribution, whose sequence is
/// implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    Tensor normal_tensor(std::vector<int> shape, double stddev) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = stddev * normal();
        return t;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace salgrid
