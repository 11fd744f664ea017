#pragma once

#include <cstdint>
#include <random>

namespace dibom {

/// Mixes (seed, stream) into an independent seed. Used to pre-split random
/// streams so parallel work is schedule-independent.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. All sampling goes through uniform 64-bit
// draws so the produced doubles do not depend on the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();
    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);
    /// Integer in [0, bound).
    std::uint64_t uniform_index(std::uint64_t bound);
    /// Standard normal via Box-Muller.
    double normal();

    /// Independent generator for sub-task `stream`, derived from the
    /// original seed (not the current state).
    Rng derive(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

} // namespace dibom
