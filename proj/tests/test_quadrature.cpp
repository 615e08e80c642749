#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "forkcast/quadrature.hpp"

using namespace forkcast;

TEST(Quadrature, PolynomialIsExact)
{
    auto q = integrate([](double x) { return 5.0 * std::pow(x, 4); }, 0.0, 1.0);
    EXPECT_NEAR(q.value, 1.0, 1e-15);
    EXPECT_GE(q.error, 0.0);
}

TEST(Quadrature, Sine)
{
    auto q = integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi);
    EXPECT_NEAR(q.value, 2.0, 1e-13);
}

TEST(Quadrature, EndpointSingularity)
{
    auto q = integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0);
    EXPECT_NEAR(q.value, 2.0, 1e-8);
}

TEST(Quadrature, PeakedIntegrandWithPieces)
{
    // narrow Gaussian at 0.3, width 1e-3
    const double w = 1e-3;
    auto f = [&](double x) { return std::exp(-0.5 * std::pow((x - 0.3) / w, 2)); };
    auto q = integrate(f, 0.0, 1.0, {}, 16);
    EXPECT_NEAR(q.value / (w * std::sqrt(2.0 * std::numbers::pi)), 1.0, 1e-9);
}

TEST(Quadrature, SemiInfiniteExponential)
{
    auto q = integrate_semi_infinite([](double x) { return std::exp(-x); });
    EXPECT_NEAR(q.value, 1.0, 1e-12);
}

TEST(Quadrature, SemiInfiniteAlgebraicTail)
{
    auto q = integrate_semi_infinite([](double x) { return 1.0 / (1.0 + x * x); });
    EXPECT_NEAR(q.value, std::numbers::pi / 2.0, 1e-10);
}

TEST(Quadrature, SemiInfiniteNarrowScale)
{
    const double r = 20000.0;
    auto q = integrate_semi_infinite([&](double x) { return r * std::exp(-r * x); }, {}, 1.0 / r);
    EXPECT_NEAR(q.value, 1.0, 1e-12);
}

TEST(Quadrature, NonFiniteIntegrandThrows)
{
    try {
        integrate([](double x) { return x > 0.5 ? std::nan("") : 1.0; }, 0.0, 1.0);
        FAIL() << "expected NonFinite";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFinite);
    }
}

TEST(Quadrature, BudgetExhaustionThrows)
{
    QuadratureConfig cfg;
    cfg.max_subdivisions = 3;
    cfg.rel_tol = 1e-14;
    try {
        integrate([](double x) { return std::sin(1.0 / (x + 1e-3)); }, 0.0, 1.0, cfg);
        FAIL() << "expected NonConvergent";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonConvergent);
    }
}

TEST(Quadrature, RejectsBadConfig)
{
    QuadratureConfig cfg;
    cfg.rel_tol = 0.0;
    EXPECT_THROW(integrate([](double) { return 1.0; }, 0.0, 1.0, cfg), Error);
    EXPECT_THROW(integrate([](double) { return 1.0; }, 1.0, 0.0), Error);
}

TEST(Quadrature, EmptyInterval)
{
    auto q = integrate([](double) { return 1.0; }, 2.0, 2.0);
    EXPECT_EQ(q.value, 0.0);
}

TEST(CompensatedSum, RecoversLostLowBits)
{
    CompensatedSum s;
    s += 1e16;
    s += 1.0;
    s += -1e16;
    EXPECT_EQ(s.value(), 1.0);
}

TEST(LogSumExp, LargeAndSmallArguments)
{
    std::vector<double> xs = {1000.0, 1000.0};
    EXPECT_NEAR(log_sum_exp(xs), 1000.0 + std::log(2.0), 1e-12);
    std::vector<double> ys = {-1000.0, -1001.0};
    EXPECT_NEAR(log_sum_exp(ys), -1000.0 + std::log1p(std::exp(-1.0)), 1e-12);
}
