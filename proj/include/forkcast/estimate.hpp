#pragma once

// Hash rates from block counts, method-of-moments fits of the null families,
// binomial estimator variances and bootstrap-style confidence bands.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "forkcast/error.hpp"
#include "forkcast/forkrate.hpp"
#include "forkcast/laplace.hpp"
#include "forkcast/model.hpp"
#include "forkcast/quadrature.hpp"
#include "forkcast/rng.hpp"

namespace forkcast {

struct MomentPair {
    double m = 0.0; // mean hash rate, blocks/s
    double s = 0.0; // standard deviation of hash rates, blocks/s
    bool degenerate = false; // s == 0: no spread to fit
};

/// Per-miner rate estimates b_i Lambda / B. Zero-count miners are dropped
/// unless requested, so the kept rates still sum to Lambda.
struct HashRateEstimate {
    std::vector<double> lambdas;
    std::vector<std::size_t> kept; // indices into the input counts
    std::size_t dropped = 0;

    /// The kept rates as a miner set; needs at least two of them.
    MinerSet miners() const
    {
        detail::require(lambdas.size() >= 2, ErrorCode::InvalidModel,
                        "only " + std::to_string(lambdas.size()) + " miner(s) with blocks");
        return MinerSet(lambdas);
    }
};

inline HashRateEstimate estimate_hash_rates(const BlockCounts& counts, double lambda_total,
                                            bool keep_zero_miners = false)
{
    detail::require(lambda_total > 0.0 && std::isfinite(lambda_total), ErrorCode::InvalidArgument,
                    "total hash rate must be positive");
    HashRateEstimate out;
    const double total = static_cast<double>(counts.total());
    const auto c = counts.counts();
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c[i] == 0 && !keep_zero_miners) {
            ++out.dropped;
            continue;
        }
        out.lambdas.push_back(static_cast<double>(c[i]) * lambda_total / total);
        out.kept.push_back(i);
    }
    return out;
}

/// m = Lambda / N and the sample standard deviation (divisor N - 1) of the
/// estimated rates, zero-count miners included.
inline MomentPair fit_moments(const BlockCounts& counts, double lambda_total)
{
    detail::require(lambda_total > 0.0 && std::isfinite(lambda_total), ErrorCode::InvalidArgument,
                    "total hash rate must be positive");
    const double n = static_cast<double>(counts.size());
    const double total = static_cast<double>(counts.total());
    MomentPair mp;
    mp.m = lambda_total / n;
    CompensatedSum ss;
    for (auto b : counts.counts()) {
        const double d = static_cast<double>(b) * lambda_total / total - mp.m;
        ss += d * d;
    }
    mp.s = std::sqrt(ss.value() / (n - 1.0));
    mp.degenerate = !(mp.s > 0.0);
    return mp;
}

/// Exponential needs only m; the two-parameter families also need s > 0.
inline NullFamily method_of_moments(const MomentPair& mp, FamilyKind kind)
{
    detail::require(mp.m > 0.0 && std::isfinite(mp.m), ErrorCode::InvalidMoments, "moment m must be positive");
    if (kind == FamilyKind::Exponential) {
        return Exponential{1.0 / mp.m};
    }
    detail::require(mp.s > 0.0 && std::isfinite(mp.s), ErrorCode::InvalidMoments,
                    "moment s must be positive to fit " + std::string(family_name(kind)));
    const double cv = mp.s / mp.m;
    switch (kind) {
    case FamilyKind::Exponential:
        break;
    case FamilyKind::LogNormal: {
        const double sigma2 = std::log1p(cv * cv);
        return LogNormal{std::log(mp.m) - 0.5 * sigma2, std::sqrt(sigma2)};
    }
    case FamilyKind::TruncatedPowerLaw: {
        const double alpha = 1.0 - 1.0 / (cv * cv);
        const double beta = mp.m / (mp.s * mp.s);
        if (!(alpha < 1.0) || !(beta > 0.0) || !std::isfinite(beta)) {
            throw Error(ErrorCode::InvalidMoments, "truncated power law fit gives alpha=" + std::to_string(alpha) +
                                                       " beta=" + std::to_string(beta));
        }
        return TruncatedPowerLaw{alpha, beta};
    }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown family");
}

struct FamilyFit {
    NullFamily family;
    MomentPair moments;
    /// Relative gap between the family's std and s; nonzero only for Exp.
    double s_mismatch = 0.0;
    std::vector<std::string> notes;
};

/// method_of_moments plus the remarks a caller should surface.
inline FamilyFit fit_family(const MomentPair& mp, FamilyKind kind)
{
    FamilyFit fit{method_of_moments(mp, kind), mp, 0.0, {}};
    switch (kind) {
    case FamilyKind::Exponential:
        fit.s_mismatch = std::abs(mp.s - mp.m) / mp.m;
        fit.notes.push_back("exp fit uses m only; |s-m|/m = " + std::to_string(fit.s_mismatch));
        break;
    case FamilyKind::LogNormal:
        fit.notes.push_back("lognormal mu = ln m - sigma^2/2 so that the fitted mean equals m");
        break;
    case FamilyKind::TruncatedPowerLaw:
        if (mp.s <= mp.m) {
            fit.notes.push_back("s <= m gives alpha <= 0 (no power-law regime)");
        }
        break;
    }
    return fit;
}

struct EstimatorUncertainty {
    std::vector<double> p_hat;
    std::vector<double> var_p; // p (1 - p) / B
    double var_m = 0.0;        // Lambda^2 / N^2 sum var_p
    double var_s2 = 0.0;       // 2 Lambda^4 / (N (N - 1)) sum var_p^2
};

inline EstimatorUncertainty estimator_uncertainty(const BlockCounts& counts, double lambda_total)
{
    detail::require(lambda_total > 0.0 && std::isfinite(lambda_total), ErrorCode::InvalidArgument,
                    "total hash rate must be positive");
    const double b_total = static_cast<double>(counts.total());
    const double n = static_cast<double>(counts.size());
    EstimatorUncertainty u;
    CompensatedSum sum_var;
    CompensatedSum sum_var2;
    for (auto b : counts.counts()) {
        const double p = static_cast<double>(b) / b_total;
        const double v = p * (1.0 - p) / b_total;
        u.p_hat.push_back(p);
        u.var_p.push_back(v);
        sum_var += v;
        sum_var2 += v * v;
    }
    const double l2 = lambda_total * lambda_total;
    u.var_m = l2 / (n * n) * sum_var.value();
    u.var_s2 = 2.0 * l2 * l2 / (n * (n - 1.0)) * sum_var2.value();
    return u;
}

/// Appends n_zero miners that mined nothing.
inline BlockCounts add_zero_miners(const BlockCounts& counts, std::size_t n_zero)
{
    std::vector<std::int64_t> c(counts.counts().begin(), counts.counts().end());
    c.resize(c.size() + n_zero, 0);
    return BlockCounts(std::move(c));
}

/// Linear-interpolation percentile of sorted data, p in [0, 100].
inline double percentile_sorted(std::span<const double> sorted, double p)
{
    detail::require(!sorted.empty(), ErrorCode::InvalidArgument, "percentile of empty data");
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct BandConfig {
    std::vector<double> delta0_grid;
    std::size_t n_samples = 1000;
    std::pair<double, double> percentiles{5.0, 95.0};
    std::uint64_t seed = 1;
    unsigned threads = 0;
    QuadratureConfig quadrature{};
};

struct ConfidenceBand {
    std::vector<double> delta0_grid;
    std::vector<double> lower;
    std::vector<double> point;
    std::vector<double> upper;
    std::pair<double, double> percentiles{5.0, 95.0};
    std::size_t samples = 0;
    std::size_t rejected_draws = 0;
};

namespace detail {

inline constexpr std::size_t kBandAttemptsPerSample = 10;
inline constexpr double kVarianceFloor = 1e-4;

} // namespace detail

/// Draws (m, s^2) from their Gaussian sampling laws, refits the family per
/// draw and takes percentiles of the resulting fork-rate curves. Draw k uses
/// its own random stream, so the band does not depend on the thread count.
inline ConfidenceBand confidence_band(const BlockCounts& counts, double lambda_total, FamilyKind kind,
                                      const BandConfig& cfg)
{
    detail::require(cfg.n_samples >= 100, ErrorCode::InvalidArgument, "confidence band needs at least 100 samples");
    const auto [p_lo, p_hi] = cfg.percentiles;
    detail::require(p_lo > 0.0 && p_hi < 100.0 && p_lo < p_hi, ErrorCode::InvalidArgument,
                    "percentiles must satisfy 0 < low < high < 100");
    detail::require(!cfg.delta0_grid.empty(), ErrorCode::InvalidArgument, "delta0 grid is empty");
    for (double d : cfg.delta0_grid) {
        detail::check_delta(d);
    }

    const std::size_t n = counts.size();
    const MomentPair mp = fit_moments(counts, lambda_total);
    const auto unc = estimator_uncertainty(counts, lambda_total);
    const double s2_hat = mp.s * mp.s;
    const double s2_floor = detail::kVarianceFloor * s2_hat;
    const std::size_t grid = cfg.delta0_grid.size();

    ConfidenceBand band;
    band.delta0_grid = cfg.delta0_grid;
    band.percentiles = cfg.percentiles;
    band.samples = cfg.n_samples;
    {
        const NullFamily fitted = method_of_moments(mp, kind);
        for (double d : cfg.delta0_grid) {
            band.point.push_back(fork_rate_iid(fitted, n, d, cfg.quadrature).value);
        }
    }

    std::vector<double> curves(cfg.n_samples * grid);
    std::vector<std::size_t> rejected(cfg.n_samples, 0);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        try {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= cfg.n_samples) {
                    return;
                }
                Philox4x32 rng(cfg.seed, k);
                bool done = false;
                for (std::size_t attempt = 0; attempt < detail::kBandAttemptsPerSample && !done; ++attempt) {
                    const double m = mp.m + std::sqrt(unc.var_m) * standard_normal(rng);
                    const double s2 = s2_hat + std::sqrt(unc.var_s2) * standard_normal(rng);
                    if (!(m > 0.0) || !(s2 >= s2_floor)) {
                        ++rejected[k];
                        continue;
                    }
                    try {
                        const NullFamily f = method_of_moments({m, std::sqrt(s2)}, kind);
                        for (std::size_t g = 0; g < grid; ++g) {
                            curves[k * grid + g] = fork_rate_iid(f, n, cfg.delta0_grid[g], cfg.quadrature).value;
                        }
                        done = true;
                    } catch (const Error&) {
                        ++rejected[k];
                    }
                }
                if (!done) {
                    throw Error(ErrorCode::InvalidMoments, "band draw " + std::to_string(k) + " failed " +
                                                               std::to_string(detail::kBandAttemptsPerSample) +
                                                               " times");
                }
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
            next.store(cfg.n_samples);
        }
    };

    const unsigned threads = static_cast<unsigned>(
        std::min<std::size_t>(cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency()),
                              cfg.n_samples));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    for (auto r : rejected) {
        band.rejected_draws += r;
    }
    std::vector<double> column(cfg.n_samples);
    for (std::size_t g = 0; g < grid; ++g) {
        for (std::size_t k = 0; k < cfg.n_samples; ++k) {
            column[k] = curves[k * grid + g];
        }
        std::sort(column.begin(), column.end());
        band.lower.push_back(percentile_sorted(column, p_lo));
        band.upper.push_back(percentile_sorted(column, p_hi));
    }
    return band;
}

} // namespace forkcast
