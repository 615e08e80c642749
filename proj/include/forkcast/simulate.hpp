#pragma once

// Monte Carlo mining rounds: every miner draws an exponential solution time,
// and a round forks when the two earliest solutions are closer than delta0.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "forkcast/error.hpp"
#include "forkcast/model.hpp"
#include "forkcast/quadrature.hpp"
#include "forkcast/rng.hpp"

namespace forkcast {

struct SimConfig {
    HashRateModel model;
    double delta0 = 0.0;
    std::uint64_t rounds = 1'000'000;
    std::uint64_t seed = 1;
    unsigned threads = 0; // 0 = hardware concurrency
    /// Draw fresh hash rates every round. When false, one draw is shared by
    /// all rounds (fixed-rate models ignore the flag).
    bool resample = true;
};

struct SimOutcome {
    double delta0 = 0.0;
    double fork_rate = 0.0;
    double std_error = 0.0; // sqrt(p (1 - p) / n)
    std::uint64_t n_fork = 0;
    std::uint64_t rounds = 0;
    double mean_min_time = 0.0;
};

namespace detail {

inline constexpr std::uint64_t kChunkRounds = 1u << 14;
inline constexpr std::uint64_t kSharedDrawStream = std::numeric_limits<std::uint64_t>::max();

// Fills per-miner hash rates for one round.
class RateSampler {
public:
    explicit RateSampler(const HashRateModel& model) : model_(model)
    {
        validate(model_);
        rates_.resize(miner_count(model_));
        if (const auto* fixed = std::get_if<FixedRates>(&model_)) {
            std::copy(fixed->miners.lambdas().begin(), fixed->miners.lambdas().end(), rates_.begin());
        }
    }

    bool fixed() const noexcept { return std::holds_alternative<FixedRates>(model_); }

    std::span<const double> draw(Philox4x32& rng)
    {
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, IIDNull>) {
                    for (auto& r : rates_) {
                        r = family_variate(rng, m.family);
                    }
                } else if constexpr (std::is_same_v<T, INIDNull>) {
                    for (std::size_t i = 0; i < rates_.size(); ++i) {
                        rates_[i] = family_variate(rng, m.families[i]);
                    }
                } else if constexpr (std::is_same_v<T, SemiEmpiricalIID>) {
                    const auto counts = m.counts.counts();
                    const auto n = counts.size();
                    for (auto& r : rates_) {
                        auto pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
                        pick = std::min(pick, n - 1);
                        r = posterior_variate(rng, static_cast<double>(counts[pick]), m.gamma);
                    }
                } else if constexpr (std::is_same_v<T, SemiEmpiricalINID>) {
                    const auto counts = m.counts.counts();
                    for (std::size_t i = 0; i < rates_.size(); ++i) {
                        rates_[i] = posterior_variate(rng, static_cast<double>(counts[i]), m.gamma);
                    }
                }
            },
            model_);
        for (double r : rates_) {
            if (!(r > 0.0) || !std::isfinite(r)) {
                throw Error(ErrorCode::InvalidModel, "sampled hash rate is not positive: " + std::to_string(r));
            }
        }
        return rates_;
    }

    std::span<const double> current() const noexcept { return rates_; }

private:
    const HashRateModel& model_;
    std::vector<double> rates_;
};

struct ChunkTally {
    std::vector<std::uint64_t> forks;
    double min_time_sum = 0.0;
};

inline unsigned resolve_threads(unsigned requested)
{
    if (requested != 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace detail

/// Runs the rounds once and evaluates every delay on the same draws, so the
/// outcomes are coupled through common random numbers.
inline std::vector<SimOutcome> simulate_fork_rates(const SimConfig& cfg, std::span<const double> delays)
{
    detail::require(cfg.rounds >= 1, ErrorCode::InvalidArgument, "simulation needs at least one round");
    detail::require(!delays.empty(), ErrorCode::InvalidArgument, "simulation needs at least one delay");
    for (double d : delays) {
        detail::require(d >= 0.0 && std::isfinite(d), ErrorCode::InvalidArgument, "delay must be >= 0");
    }
    validate(cfg.model);

    std::vector<double> shared_rates;
    {
        detail::RateSampler sampler(cfg.model);
        if (!cfg.resample && !sampler.fixed()) {
            Philox4x32 rng(cfg.seed, detail::kSharedDrawStream);
            const auto r = sampler.draw(rng);
            shared_rates.assign(r.begin(), r.end());
        }
    }

    const std::uint64_t chunks = (cfg.rounds + detail::kChunkRounds - 1) / detail::kChunkRounds;
    std::vector<detail::ChunkTally> tallies(chunks);
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        try {
            detail::RateSampler sampler(cfg.model);
            for (;;) {
                const std::uint64_t chunk = next.fetch_add(1);
                if (chunk >= chunks) {
                    return;
                }
                auto& tally = tallies[chunk];
                tally.forks.assign(delays.size(), 0);
                CompensatedSum min_sum;
                const std::uint64_t begin = chunk * detail::kChunkRounds;
                const std::uint64_t end = std::min(cfg.rounds, begin + detail::kChunkRounds);
                for (std::uint64_t round = begin; round < end; ++round) {
                    Philox4x32 rng(cfg.seed, round);
                    std::span<const double> rates;
                    if (sampler.fixed()) {
                        rates = sampler.current();
                    } else if (!shared_rates.empty()) {
                        rates = shared_rates;
                    } else {
                        rates = sampler.draw(rng);
                    }
                    double first = std::numeric_limits<double>::infinity();
                    double second = first;
                    for (double rate : rates) {
                        const double t = standard_exponential(rng) / rate;
                        if (t < first) {
                            second = first;
                            first = t;
                        } else if (t < second) {
                            second = t;
                        }
                    }
                    const double gap = second - first;
                    for (std::size_t k = 0; k < delays.size(); ++k) {
                        tally.forks[k] += gap < delays[k] ? 1 : 0;
                    }
                    min_sum += first;
                }
                tally.min_time_sum = min_sum.value();
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
            next.store(chunks);
        }
    };

    const unsigned threads = static_cast<unsigned>(
        std::min<std::uint64_t>(detail::resolve_threads(cfg.threads), chunks));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    // Reduce in chunk order so the floating-point sum is scheduling independent.
    std::vector<std::uint64_t> forks(delays.size(), 0);
    CompensatedSum min_total;
    for (const auto& t : tallies) {
        for (std::size_t k = 0; k < delays.size(); ++k) {
            forks[k] += t.forks[k];
        }
        min_total += t.min_time_sum;
    }
    const double n = static_cast<double>(cfg.rounds);
    std::vector<SimOutcome> out;
    out.reserve(delays.size());
    for (std::size_t k = 0; k < delays.size(); ++k) {
        SimOutcome o;
        o.delta0 = delays[k];
        o.n_fork = forks[k];
        o.rounds = cfg.rounds;
        o.fork_rate = static_cast<double>(forks[k]) / n;
        o.std_error = std::sqrt(o.fork_rate * (1.0 - o.fork_rate) / n);
        o.mean_min_time = min_total.value() / n;
        out.push_back(o);
    }
    return out;
}

inline SimOutcome simulate_fork_rate(const SimConfig& cfg)
{
    const double delay = cfg.delta0;
    return simulate_fork_rates(cfg, std::span<const double>(&delay, 1)).front();
}

/// Mean over rounds of the earliest solution time; 1 / Lambda for fixed rates.
inline double simulate_min_time(const SimConfig& cfg)
{
    return simulate_fork_rate(cfg).mean_min_time;
}

} // namespace forkcast
