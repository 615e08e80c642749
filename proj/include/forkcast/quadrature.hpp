#pragma once

// Adaptive Gauss-Kronrod integration on finite and semi-infinite ranges.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "forkcast/error.hpp"

namespace forkcast {

struct QuadratureConfig {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    int max_subdivisions = 2000;

    void validate() const
    {
        detail::require(rel_tol > 0.0 && std::isfinite(rel_tol), ErrorCode::InvalidArgument,
                        "quadrature rel_tol must be positive");
        detail::require(abs_tol >= 0.0 && std::isfinite(abs_tol), ErrorCode::InvalidArgument,
                        "quadrature abs_tol must be non-negative");
        detail::require(max_subdivisions >= 1, ErrorCode::InvalidArgument,
                        "quadrature max_subdivisions must be >= 1");
    }

    /// Config for integrals nested inside an outer integrand; tighter so the
    /// outer rule does not see inner noise.
    QuadratureConfig inner() const
    {
        QuadratureConfig c = *this;
        c.rel_tol = std::max(rel_tol * 1e-3, 1e-13);
        c.abs_tol = 0.0;
        return c;
    }
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int intervals = 0;
};

/// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double x) noexcept
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    CompensatedSum& operator+=(double x) noexcept
    {
        add(x);
        return *this;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double log_sum_exp(std::span<const double> xs)
{
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
        hi = std::max(hi, x);
    }
    if (!std::isfinite(hi)) {
        return hi;
    }
    CompensatedSum acc;
    for (double x : xs) {
        acc += std::exp(x - hi);
    }
    return hi + std::log(acc.value());
}

namespace detail {

// 7-point Gauss / 15-point Kronrod abscissae and weights (QUADPACK qk15).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a;
    double b;
    double value;
    double error;
    double abs_value; // integral of |f|, drives the roundoff floor
    bool operator<(const Segment& other) const { return error < other.error; }
};

template <class F>
double checked_eval(F& f, double x)
{
    const double y = f(x);
    if (!std::isfinite(y)) {
        throw Error(ErrorCode::NonFinite, "integrand returned a non-finite value at x=" + std::to_string(x));
    }
    return y;
}

template <class F>
Segment gauss_kronrod_15(F& f, double a, double b)
{
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double abs_half = std::abs(half);

    std::array<double, 7> left{};
    std::array<double, 7> right{};
    const double fc = checked_eval(f, center);
    double gauss = fc * kGaussWeights[3];
    double kronrod = fc * kKronrodWeights[7];
    double abs_sum = std::abs(kronrod);

    for (int j = 0; j < 3; ++j) {
        const int k = 2 * j + 1;
        const double dx = half * kKronrodNodes[k];
        const double f1 = checked_eval(f, center - dx);
        const double f2 = checked_eval(f, center + dx);
        left[k] = f1;
        right[k] = f2;
        gauss += kGaussWeights[j] * (f1 + f2);
        kronrod += kKronrodWeights[k] * (f1 + f2);
        abs_sum += kKronrodWeights[k] * (std::abs(f1) + std::abs(f2));
    }
    for (int j = 0; j < 4; ++j) {
        const int k = 2 * j;
        const double dx = half * kKronrodNodes[k];
        const double f1 = checked_eval(f, center - dx);
        const double f2 = checked_eval(f, center + dx);
        left[k] = f1;
        right[k] = f2;
        kronrod += kKronrodWeights[k] * (f1 + f2);
        abs_sum += kKronrodWeights[k] * (std::abs(f1) + std::abs(f2));
    }

    const double mean = 0.5 * kronrod;
    double asc = kKronrodWeights[7] * std::abs(fc - mean);
    for (int k = 0; k < 7; ++k) {
        asc += kKronrodWeights[k] * (std::abs(left[k] - mean) + std::abs(right[k] - mean));
    }

    Segment s{a, b, kronrod * half, std::abs((kronrod - gauss) * half), abs_sum * abs_half};
    asc *= abs_half;
    if (asc != 0.0 && s.error != 0.0) {
        s.error = asc * std::min(1.0, std::pow(200.0 * s.error / asc, 1.5));
    }
    if (s.abs_value > std::numeric_limits<double>::min() / (50.0 * eps)) {
        s.error = std::max(50.0 * eps * s.abs_value, s.error);
    }
    return s;
}

} // namespace detail

/// Adaptive 15-point Gauss-Kronrod integration of f over [a, b].
///
/// The interval is first split at `pieces` equal parts; afterwards the segment
/// with the largest error estimate is bisected until the summed estimate falls
/// below max(abs_tol, rel_tol*|I|) or reaches the roundoff floor.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureConfig& cfg = {}, int pieces = 1)
{
    cfg.validate();
    detail::require(std::isfinite(a) && std::isfinite(b) && a <= b, ErrorCode::InvalidArgument,
                    "integration bounds must be finite with a <= b");
    if (a == b) {
        return {};
    }
    constexpr double eps = std::numeric_limits<double>::epsilon();
    pieces = std::max(1, pieces);

    std::priority_queue<detail::Segment> open;
    std::vector<detail::Segment> closed;
    const double width = (b - a) / pieces;
    for (int i = 0; i < pieces; ++i) {
        const double lo = a + i * width;
        const double hi = (i + 1 == pieces) ? b : a + (i + 1) * width;
        open.push(detail::gauss_kronrod_15(f, lo, hi));
    }

    auto totals = [&] {
        CompensatedSum value;
        CompensatedSum error;
        CompensatedSum abs_value;
        auto visit = [&](const detail::Segment& s) {
            value += s.value;
            error += s.error;
            abs_value += s.abs_value;
        };
        auto copy = open;
        while (!copy.empty()) {
            visit(copy.top());
            copy.pop();
        }
        for (const auto& s : closed) {
            visit(s);
        }
        return std::array<double, 3>{value.value(), error.value(), abs_value.value()};
    };

    // Running totals are updated incrementally and refreshed exactly on exit.
    double value = 0.0;
    double error = 0.0;
    double abs_value = 0.0;
    {
        const auto t = totals();
        value = t[0];
        error = t[1];
        abs_value = t[2];
    }

    int count = pieces;
    for (;;) {
        const double tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(value));
        const double floor = 50.0 * eps * abs_value;
        if (error <= tol || error <= 2.0 * floor) {
            break;
        }
        if (open.empty() || count >= cfg.max_subdivisions + pieces - 1) {
            const auto t = totals();
            const double final_tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(t[0]));
            if (t[1] <= final_tol || t[1] <= 2.0 * 50.0 * eps * t[2]) {
                return {t[0], t[1], count};
            }
            throw Error(ErrorCode::NonConvergent,
                        "adaptive quadrature hit the subdivision limit (" + std::to_string(count) +
                            " intervals) with error estimate " + std::to_string(t[1]) + " > " +
                            std::to_string(final_tol));
        }
        const detail::Segment worst = open.top();
        open.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b) ||
            (worst.b - worst.a) <= 64.0 * eps * std::max(std::abs(worst.a), std::abs(worst.b))) {
            closed.push_back(worst);
            continue;
        }
        const auto left = detail::gauss_kronrod_15(f, worst.a, mid);
        const auto right = detail::gauss_kronrod_15(f, mid, worst.b);
        value += (left.value + right.value) - worst.value;
        error += (left.error + right.error) - worst.error;
        abs_value += (left.abs_value + right.abs_value) - worst.abs_value;
        open.push(left);
        open.push(right);
        ++count;
    }
    const auto t = totals();
    return {t[0], t[1], count};
}

/// Integrates f over (0, inf) through x = scale * t / (1 - t).
///
/// `scale` should be the length scale on which f varies. A badly mismatched
/// scale squeezes f into a sliver of (0, 1) that the first rule can miss.
template <class F>
QuadratureResult integrate_semi_infinite(F&& f, const QuadratureConfig& cfg = {}, double scale = 1.0)
{
    detail::require(scale > 0.0 && std::isfinite(scale), ErrorCode::InvalidArgument,
                    "semi-infinite scale must be positive");
    auto mapped = [&](double t) {
        const double one_minus = 1.0 - t;
        const double x = scale * t / one_minus;
        const double y = f(x);
        if (y == 0.0) {
            return 0.0;
        }
        return y * scale / (one_minus * one_minus);
    };
    return integrate(mapped, 0.0, 1.0, cfg);
}

} // namespace forkcast
