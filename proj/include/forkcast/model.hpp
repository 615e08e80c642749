#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "forkcast/error.hpp"
#include "forkcast/laplace.hpp"
#include "forkcast/quadrature.hpp"

namespace forkcast {

/// Per-miner hash rates in blocks/s. Every rate is positive and N >= 2.
class MinerSet {
public:
    explicit MinerSet(std::vector<double> lambdas) : lambdas_(std::move(lambdas))
    {
        detail::require(lambdas_.size() >= 2, ErrorCode::InvalidArgument, "a miner set needs at least 2 miners");
        CompensatedSum total;
        for (double l : lambdas_) {
            detail::require(l > 0.0 && std::isfinite(l), ErrorCode::InvalidArgument,
                            "hash rates must be positive and finite");
            total += l;
        }
        total_ = total.value();
        detail::require(std::isfinite(total_), ErrorCode::InvalidArgument, "total hash rate overflows");
    }

    std::span<const double> lambdas() const noexcept { return lambdas_; }
    std::size_t size() const noexcept { return lambdas_.size(); }
    double total() const noexcept { return total_; }

    /// Mean time until the first block, 1 / Lambda.
    double expected_block_time() const noexcept { return 1.0 / total_; }

private:
    std::vector<double> lambdas_;
    double total_ = 0.0;
};

/// Blocks mined per miner over an observation window. Zero counts are allowed.
class BlockCounts {
public:
    explicit BlockCounts(std::vector<std::int64_t> counts) : counts_(std::move(counts))
    {
        detail::require(counts_.size() >= 2, ErrorCode::InvalidArgument, "block counts need at least 2 miners");
        for (auto b : counts_) {
            detail::require(b >= 0, ErrorCode::InvalidArgument, "block counts must be non-negative");
            total_ += b;
        }
        detail::require(total_ >= 1, ErrorCode::AllZero, "every block count is zero");
    }

    std::span<const std::int64_t> counts() const noexcept { return counts_; }
    std::size_t size() const noexcept { return counts_.size(); }
    std::int64_t total() const noexcept { return total_; }

    /// gamma = B / Lambda, the posterior scale.
    double gamma(double lambda_total) const
    {
        detail::require(lambda_total > 0.0, ErrorCode::InvalidArgument, "total hash rate must be positive");
        return static_cast<double>(total_) / lambda_total;
    }

private:
    std::vector<std::int64_t> counts_;
    std::int64_t total_ = 0;
};

// Hash-rate model variants.

struct FixedRates {
    MinerSet miners;
};

struct IIDNull {
    NullFamily family;
    std::size_t n = 2;
};

struct INIDNull {
    std::vector<NullFamily> families;
};

struct SemiEmpiricalIID {
    BlockCounts counts;
    double gamma = 1.0;
};

struct SemiEmpiricalINID {
    BlockCounts counts;
    double gamma = 1.0;
};

using HashRateModel = std::variant<FixedRates, IIDNull, INIDNull, SemiEmpiricalIID, SemiEmpiricalINID>;

inline std::size_t miner_count(const HashRateModel& model)
{
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FixedRates>) {
                return m.miners.size();
            } else if constexpr (std::is_same_v<T, IIDNull>) {
                return m.n;
            } else if constexpr (std::is_same_v<T, INIDNull>) {
                return m.families.size();
            } else {
                return m.counts.size();
            }
        },
        model);
}

inline void validate(const HashRateModel& model)
{
    std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, IIDNull>) {
                detail::require(m.n >= 2, ErrorCode::InvalidModel, "i.i.d. model needs n >= 2");
                validate(m.family);
            } else if constexpr (std::is_same_v<T, INIDNull>) {
                detail::require(m.families.size() >= 2, ErrorCode::InvalidModel, "model needs at least 2 miners");
                for (const auto& f : m.families) {
                    validate(f);
                }
            } else if constexpr (std::is_same_v<T, SemiEmpiricalIID> || std::is_same_v<T, SemiEmpiricalINID>) {
                detail::require(m.gamma > 0.0 && std::isfinite(m.gamma), ErrorCode::InvalidModel,
                                "semi-empirical model needs gamma > 0");
            }
        },
        model);
}

/// Mean total hash rate implied by the model (exact for fixed rates).
inline double expected_total_rate(const HashRateModel& model)
{
    return std::visit(
        [](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FixedRates>) {
                return m.miners.total();
            } else if constexpr (std::is_same_v<T, IIDNull>) {
                return static_cast<double>(m.n) * family_mean(m.family);
            } else if constexpr (std::is_same_v<T, INIDNull>) {
                CompensatedSum acc;
                for (const auto& f : m.families) {
                    acc += family_mean(f);
                }
                return acc.value();
            } else {
                // posterior mean of miner i is (1 + b_i) / gamma
                return static_cast<double>(m.counts.total() + static_cast<std::int64_t>(m.counts.size())) / m.gamma;
            }
        },
        model);
}

/// One observation window of the chain.
struct PeriodRecord {
    std::size_t index = 0;
    std::int64_t first_height = 0;
    std::int64_t last_height = 0;
    std::int64_t start_time = 0;
    std::int64_t end_time = 0;
    std::vector<std::string> miner_ids;
    std::vector<std::int64_t> counts;
    double lambda_total = 0.0;
    std::size_t n_miners = 0;
    double fork_rate_empirical = 0.0;
    double prop_p50 = 0.0;
    double prop_p90 = 0.0;
    double prop_p99 = 0.0;
    std::size_t propagation_samples = 0;
    double lambda_sanity = 0.0; // |Lambda * 600 - 1|

    /// Fork-rate modeling needs at least two miners.
    bool usable() const noexcept { return n_miners >= 2; }
};

enum class ForkRateMethod { Conditional, Taylor, ClosedForm, Quadrature, SemiEmpirical, MonteCarlo };

inline std::string_view to_string(ForkRateMethod m)
{
    switch (m) {
    case ForkRateMethod::Conditional: return "conditional";
    case ForkRateMethod::Taylor: return "taylor";
    case ForkRateMethod::ClosedForm: return "closed_form";
    case ForkRateMethod::Quadrature: return "quadrature";
    case ForkRateMethod::SemiEmpirical: return "semi_empirical";
    case ForkRateMethod::MonteCarlo: return "monte_carlo";
    }
    return "unknown";
}

struct ForkRateResult {
    double value = 0.0;          // probability in [0, 1]
    ForkRateMethod method = ForkRateMethod::Conditional;
    double error_estimate = 0.0; // absolute
    double delta0 = 0.0;
    double tau = 0.0;            // delta0 * expected Lambda
    std::string inputs_echo;
};

/// tau = delta0 * Lambda: propagation delay over the expected block time.
inline double characteristic_time(double delta0, double lambda_total)
{
    detail::require(delta0 >= 0.0, ErrorCode::InvalidArgument, "delta0 must be >= 0");
    detail::require(lambda_total > 0.0, ErrorCode::InvalidArgument, "total hash rate must be positive");
    return delta0 * lambda_total;
}

} // namespace forkcast
