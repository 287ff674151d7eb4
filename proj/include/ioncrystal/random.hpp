#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ioncrystal::detail {

/// Deterministic Gaussian sampler: mt19937_64 (output sequence fixed by the
/// standard) with an explicit Box-Muller transform, so results are
/// bit-identical across platforms and independent of library internals.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    /// Uniform in (0, 1].
    double uniform() {
        return ((rng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(angle);
        have_spare_ = true;
        return r * std::cos(angle);
    }

private:
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ioncrystal::detail
