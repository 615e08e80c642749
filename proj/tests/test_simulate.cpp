#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fixture_counts.hpp"
#include "forkcast/forkrate.hpp"
#include "forkcast/simulate.hpp"

using namespace forkcast;

namespace {

const Exponential kExp{20000.0};

SimConfig config(HashRateModel model, double delta0, std::uint64_t rounds, std::uint64_t seed = 7)
{
    SimConfig c{std::move(model)};
    c.delta0 = delta0;
    c.rounds = rounds;
    c.seed = seed;
    c.threads = 2;
    return c;
}

void expect_within(const SimOutcome& s, double analytic, double k = 3.0)
{
    EXPECT_LE(std::abs(s.fork_rate - analytic), k * s.std_error)
        << "sim " << s.fork_rate << " +- " << s.std_error << " analytic " << analytic << " delta0 " << s.delta0;
}

} // namespace

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswers)
{
    using B = Philox4x32::Block;
    using K = Philox4x32::Key;
    EXPECT_EQ(Philox4x32::generate(B{0, 0, 0, 0}, K{0, 0}), (B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(Philox4x32::generate(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}),
              (B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(Philox4x32::generate(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}),
              (B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, StreamsDifferAndRepeat)
{
    Philox4x32 a(1, 0);
    Philox4x32 b(1, 0);
    Philox4x32 c(1, 1);
    Philox4x32 d(2, 0);
    for (int i = 0; i < 10; ++i) {
        const auto x = a();
        EXPECT_EQ(x, b());
        EXPECT_NE(x, c());
        EXPECT_NE(x, d());
    }
}

TEST(Philox, UniformIsOpenAndCentered)
{
    Philox4x32 rng(3, 9);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Simulate, EqualFixedMiners)
{
    const auto s = simulate_fork_rate(config(FixedRates{MinerSet({0.001, 0.001})}, 100.0, 1'000'000));
    expect_within(s, 0.0951626);
    EXPECT_EQ(s.rounds, 1'000'000u);
    EXPECT_DOUBLE_EQ(s.fork_rate, static_cast<double>(s.n_fork) / 1e6);
    EXPECT_DOUBLE_EQ(s.std_error, std::sqrt(s.fork_rate * (1.0 - s.fork_rate) / 1e6));
}

TEST(Simulate, UnequalFixedMiners)
{
    const MinerSet m({0.001, 0.0007});
    const auto s = simulate_fork_rate(config(FixedRates{m}, 10.0, 1'000'000, 21));
    expect_within(s, conditional_fork_rate(m, 10.0).value);
}

TEST(Simulate, ZeroDelayNeverForks)
{
    for (const HashRateModel& m : {HashRateModel{FixedRates{MinerSet({0.001, 0.001})}}, HashRateModel{IIDNull{kExp, 5}}}) {
        const auto s = simulate_fork_rate(config(m, 0.0, 100'000));
        EXPECT_EQ(s.n_fork, 0u);
        EXPECT_EQ(s.fork_rate, 0.0);
        EXPECT_EQ(s.std_error, 0.0);
    }
}

TEST(Simulate, SameSeedSameOutcome)
{
    const auto cfg = config(IIDNull{kExp, 10}, 2.0, 200'000, 99);
    const auto a = simulate_fork_rate(cfg);
    const auto b = simulate_fork_rate(cfg);
    EXPECT_EQ(a.n_fork, b.n_fork);
    EXPECT_EQ(a.mean_min_time, b.mean_min_time);
    auto other = cfg;
    other.seed = 100;
    EXPECT_NE(simulate_fork_rate(other).mean_min_time, a.mean_min_time);
}

TEST(Simulate, ThreadCountDoesNotChangeResults)
{
    const BlockCounts counts({fixture::kCounts35.begin(), fixture::kCounts35.end()});
    for (const HashRateModel& m : {HashRateModel{IIDNull{TruncatedPowerLaw{0.75, 5000.0}, 10}},
                                   HashRateModel{SemiEmpiricalINID{counts, counts.gamma(0.0017)}}}) {
        auto cfg = config(m, 1.0, 100'001, 5);
        std::vector<double> delays = {0.5, 1.0, 8.7};
        cfg.threads = 1;
        const auto one = simulate_fork_rates(cfg, delays);
        for (unsigned t : {2u, 3u, 8u}) {
            cfg.threads = t;
            const auto many = simulate_fork_rates(cfg, delays);
            for (std::size_t k = 0; k < delays.size(); ++k) {
                EXPECT_EQ(one[k].n_fork, many[k].n_fork);
                EXPECT_EQ(one[k].mean_min_time, many[k].mean_min_time);
            }
        }
    }
}

TEST(Simulate, MinTimeFixed)
{
    const auto s = simulate_min_time(config(FixedRates{MinerSet({0.001, 0.0004, 0.0003})}, 1.0, 1'000'000));
    const double mean = 1.0 / 0.0017;
    EXPECT_NEAR(s, mean, 3.0 * mean / 1000.0);
    const auto pair = simulate_min_time(config(FixedRates{MinerSet({0.002, 0.002})}, 1.0, 1'000'000, 8));
    EXPECT_NEAR(pair, 250.0, 3.0 * 250.0 / 1000.0);
}

TEST(Simulate, MinTimeExponentialMixture)
{
    // T | Lambda ~ Exp(Lambda), Lambda ~ Gamma(N, r): E[T] = r/(N-1), E[T^2] = 2r^2/((N-1)(N-2)).
    const double r = 20000.0;
    const int n = 10;
    const double mean = r / (n - 1);
    const double var = 2.0 * r * r / ((n - 1) * (n - 2)) - mean * mean;
    const double se = std::sqrt(var / 1e6);
    const double a = simulate_min_time(config(IIDNull{kExp, static_cast<std::size_t>(n)}, 1.0, 1'000'000, 1));
    const double b = simulate_min_time(config(IIDNull{kExp, static_cast<std::size_t>(n)}, 1.0, 1'000'000, 2));
    EXPECT_NEAR(a, mean, 3.0 * se);
    EXPECT_NEAR(a, b, 6.0 * se);
}

TEST(Simulate, MonotoneInDelayWithCommonNumbers)
{
    std::vector<double> delays;
    for (int i = 0; i < 20; ++i) {
        delays.push_back(0.1 * std::pow(1.8, i));
    }
    const auto out = simulate_fork_rates(config(IIDNull{LogNormal{-10.7, 1.27}, 10}, 0.0, 200'000), delays);
    for (std::size_t k = 1; k < out.size(); ++k) {
        EXPECT_GE(out[k].n_fork, out[k - 1].n_fork);
    }
}

TEST(Simulate, StdErrorMatchesSpreadAcrossSeeds)
{
    const std::uint64_t rounds = 50'000;
    std::vector<double> rates;
    double stated = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto s = simulate_fork_rate(config(IIDNull{kExp, 10}, 8.7, rounds, seed));
        rates.push_back(s.fork_rate);
        stated += s.std_error / 20.0;
    }
    const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / 20.0;
    double ss = 0.0;
    for (double r : rates) {
        ss += (r - mean) * (r - mean);
    }
    const double empirical = std::sqrt(ss / 19.0);
    EXPECT_GT(empirical, stated / 2.0);
    EXPECT_LT(empirical, stated * 2.0);
}

TEST(Simulate, NullFamiliesMatchAnalytic)
{
    const std::vector<double> delays = {0.5, 1.0, 2.0, 8.7};
    const NullFamily tpl = TruncatedPowerLaw{0.75, 5000.0};
    for (const NullFamily& f : {NullFamily{kExp}, tpl}) {
        const auto out = simulate_fork_rates(config(IIDNull{f, 10}, 0.0, 1'000'000, 31), delays);
        for (std::size_t k = 0; k < delays.size(); ++k) {
            expect_within(out[k], fork_rate_iid(f, 10, delays[k]).value);
        }
    }
}

TEST(Simulate, TwoExponentialMinersMatchInid)
{
    const INIDNull model{{Exponential{20000.0}, Exponential{5000.0}}};
    const std::vector<double> delays = {1.0, 8.7, 100.0};
    const auto out = simulate_fork_rates(config(model, 0.0, 1'000'000, 17), delays);
    for (std::size_t k = 0; k < delays.size(); ++k) {
        expect_within(out[k], fork_rate(model, delays[k]).value);
    }
}

TEST(Simulate, SemiEmpiricalMatchesAnalytic)
{
    const BlockCounts counts({fixture::kCounts35.begin(), fixture::kCounts35.end()});
    const double gamma = counts.gamma(0.0017);
    const std::vector<double> delays = {0.5, 1.0, 2.0};
    for (const HashRateModel& m :
         {HashRateModel{SemiEmpiricalIID{counts, gamma}}, HashRateModel{SemiEmpiricalINID{counts, gamma}}}) {
        const auto out = simulate_fork_rates(config(m, 0.0, 1'000'000, 41), delays);
        for (std::size_t k = 0; k < delays.size(); ++k) {
            expect_within(out[k], fork_rate(m, delays[k]).value);
        }
    }
}

TEST(Simulate, SharedDrawMatchesConditional)
{
    const IIDNull model{kExp, 6};
    auto cfg = config(model, 300.0, 500'000, 12);
    cfg.resample = false;
    const HashRateModel hm = model;
    detail::RateSampler sampler(hm);
    Philox4x32 rng(cfg.seed, detail::kSharedDrawStream);
    const auto r = sampler.draw(rng);
    const MinerSet drawn(std::vector<double>(r.begin(), r.end()));
    expect_within(simulate_fork_rate(cfg), conditional_fork_rate(drawn, 300.0).value);
}

TEST(Simulate, RejectsBadInput)
{
    auto cfg = config(IIDNull{kExp, 3}, 1.0, 0);
    EXPECT_THROW(simulate_fork_rate(cfg), Error);
    cfg.rounds = 10;
    cfg.delta0 = -1.0;
    EXPECT_THROW(simulate_fork_rate(cfg), Error);
    // exp(-800) underflows to a zero rate
    try {
        simulate_fork_rate(config(IIDNull{LogNormal{-800.0, 1e-3}, 3}, 1.0, 10));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidModel);
    }
}
