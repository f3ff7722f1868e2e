#pragma once

#include <cstdint>
#include <random>

namespace rat {

// Deterministic RNG: std::mt19937_64 core (engine output is fixed by the
// standard) with hand-rolled uniform/normal conversions, because the std
// distributions are implementation-defined and would break byte-for-byte
// reproducibility of generated datasets across library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // standard normal via Box-Muller, one cached value
    double normal();

    // derive an independent stream, e.g. one per dataset sample index
    Rng fork(std::uint64_t stream) const;

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rat
