#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace maskdiff {

// splitmix64 finalizer: the 64-bit mix used to derive independent per-trial
// seeds from (master seed, trial index). Stated once so results are
// reproducible across platforms.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master ^ mix64(index));
}

// mt19937_64 engine with hand-rolled uniform/categorical draws. The engine's
// output sequence is fixed by the standard, and avoiding the library
// distributions keeps streams identical across implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform double in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // uniform double in (0, 1]: safe as a log argument
    double uniform_pos() { return 1.0 - uniform(); }

    // exponential with unit rate
    double exponential() { return -std::log(uniform_pos()); }

    // index in [0, n)
    int uniform_index(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_index: n must be positive");
        return static_cast<int>(uniform() * n) % n;
    }

    // inverse-CDF draw from non-negative weights summing to ~1; any residual
    // mass from rounding falls on the last positive entry.
    int categorical(const std::vector<double>& w) {
        const double u = uniform();
        double acc = 0.0;
        int last_positive = -1;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] <= 0.0) continue;
            last_positive = static_cast<int>(i);
            acc += w[i];
            if (u < acc) return static_cast<int>(i);
        }
        if (last_positive < 0) throw std::invalid_argument("categorical: no positive weights");
        return last_positive;
    }

    std::mt19937_64& engine() { return eng_; }

  private:
    std::mt19937_64 eng_;
};

}  // namespace maskdiff
