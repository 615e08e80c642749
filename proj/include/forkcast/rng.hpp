#pragma once

// Counter-based random numbers. Every round (or bootstrap draw) owns its own
// Philox4x32-10 stream keyed by the run seed, so results never depend on how
// work is scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "forkcast/laplace.hpp"

namespace forkcast {

class Philox4x32 {
public:
    using result_type = std::uint64_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    /// Stream `stream` of generator `seed`; the low 64 counter bits count blocks.
    Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          counter_{0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)}
    {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        if (used_ == 2) {
            buffer_ = generate(counter_, key_);
            increment();
            used_ = 0;
        }
        const auto i = 2 * used_++;
        return (static_cast<std::uint64_t>(buffer_[i + 1]) << 32) | buffer_[i];
    }

    /// Uniform in the open interval (0, 1) with 53 random bits.
    double uniform() noexcept
    {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Ten-round Philox bijection of one counter block.
    static Block generate(Block ctr, Key key) noexcept
    {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

    void increment() noexcept
    {
        if (++counter_[0] == 0) {
            ++counter_[1];
        }
    }

    Key key_;
    Block counter_;
    Block buffer_{};
    int used_ = 2;
};

/// Exp(1) variate.
inline double standard_exponential(Philox4x32& rng)
{
    return -std::log(rng.uniform());
}

inline double standard_normal(Philox4x32& rng)
{
    std::normal_distribution<double> normal;
    return normal(rng);
}

/// Gamma variate with the given shape and rate.
inline double gamma_variate(Philox4x32& rng, double shape, double rate)
{
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    return gamma(rng);
}

/// Inverse Gaussian IG(mean, shape) by Michael, Schucany and Haas.
inline double inverse_gaussian_variate(Philox4x32& rng, double mean, double shape)
{
    const double nu = standard_normal(rng);
    const double y = nu * nu;
    const double my = mean * y;
    // mean - (mean / 2shape) (sqrt(4 mean shape y + (mean y)^2) - mean y), without cancellation
    const double x = mean - 2.0 * mean * my / (std::sqrt(4.0 * shape * my + my * my) + my);
    return rng.uniform() * (mean + x) <= mean ? x : mean * mean / x;
}

/// Draw from the semi-empirical posterior p(lambda | b), gamma = B / Lambda.
/// For b > 0 the reciprocal is inverse Gaussian with mean gamma/b and shape
/// gamma; for b = 0 the posterior is Gamma(1/2, gamma/2).
inline double posterior_variate(Philox4x32& rng, double b, double gamma)
{
    if (b == 0.0) {
        return gamma_variate(rng, 0.5, 0.5 * gamma);
    }
    return 1.0 / inverse_gaussian_variate(rng, gamma / b, gamma);
}

inline double family_variate(Philox4x32& rng, const NullFamily& family)
{
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return standard_exponential(rng) / f.rate;
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return std::exp(f.mu + f.sigma * standard_normal(rng));
            } else {
                return gamma_variate(rng, f.shape(), f.beta);
            }
        },
        family);
}

} // namespace forkcast
