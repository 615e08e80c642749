#pragma once

// Hash-rate null families and the Laplace transforms the fork-rate engine
// is built from:
//   L(s) = E[exp(-s*lambda)]          (laplace)
//   W(s) = E[lambda*exp(-s*lambda)]   (laplace_weighted, equals -L'(s))

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <variant>

#include "forkcast/error.hpp"
#include "forkcast/quadrature.hpp"

namespace forkcast {

struct Exponential {
    double rate = 1.0; // r, in seconds per block
};

struct LogNormal {
    double mu = 0.0;    // mean of log(lambda)
    double sigma = 1.0; // std of log(lambda)
};

/// Power law with exponential cutoff; a Gamma(1 - alpha, beta) in disguise.
struct TruncatedPowerLaw {
    double alpha = 0.0;
    double beta = 1.0;

    double shape() const noexcept { return 1.0 - alpha; }
};

using NullFamily = std::variant<Exponential, LogNormal, TruncatedPowerLaw>;

enum class FamilyKind { Exponential, LogNormal, TruncatedPowerLaw };

inline FamilyKind kind_of(const NullFamily& family)
{
    return static_cast<FamilyKind>(family.index());
}

inline std::string_view family_name(FamilyKind kind)
{
    switch (kind) {
    case FamilyKind::Exponential: return "exp";
    case FamilyKind::LogNormal: return "lognormal";
    case FamilyKind::TruncatedPowerLaw: return "tpl";
    }
    return "unknown";
}

inline FamilyKind parse_family_kind(std::string_view name)
{
    if (name == "exp" || name == "exponential") {
        return FamilyKind::Exponential;
    }
    if (name == "lognormal" || name == "ln") {
        return FamilyKind::LogNormal;
    }
    if (name == "tpl") {
        return FamilyKind::TruncatedPowerLaw;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown family '" + std::string(name) + "'");
}

inline void validate(const NullFamily& family)
{
    std::visit(
        [](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                detail::require(f.rate > 0.0 && std::isfinite(f.rate), ErrorCode::InvalidFamily,
                                "exponential rate must be positive");
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                detail::require(f.sigma > 0.0 && std::isfinite(f.sigma) && std::isfinite(f.mu),
                                ErrorCode::InvalidFamily, "log-normal sigma must be positive");
            } else {
                detail::require(f.alpha < 1.0 && std::isfinite(f.alpha), ErrorCode::InvalidFamily,
                                "truncated power law needs alpha < 1");
                detail::require(f.beta > 0.0 && std::isfinite(f.beta), ErrorCode::InvalidFamily,
                                "truncated power law needs beta > 0");
            }
        },
        family);
}

inline double family_mean(const NullFamily& family)
{
    return std::visit(
        [](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return 1.0 / f.rate;
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return std::exp(f.mu + 0.5 * f.sigma * f.sigma);
            } else {
                return f.shape() / f.beta;
            }
        },
        family);
}

inline double family_stddev(const NullFamily& family)
{
    return std::visit(
        [](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return 1.0 / f.rate;
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                const double s2 = f.sigma * f.sigma;
                return std::sqrt(std::expm1(s2)) * std::exp(f.mu + 0.5 * s2);
            } else {
                return std::sqrt(f.shape()) / f.beta;
            }
        },
        family);
}

inline double family_density(const NullFamily& family, double lambda)
{
    if (!(lambda > 0.0)) {
        return 0.0;
    }
    return std::visit(
        [lambda](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return f.rate * std::exp(-f.rate * lambda);
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                const double z = (std::log(lambda) - f.mu) / f.sigma;
                return std::exp(-0.5 * z * z) / (lambda * f.sigma * std::sqrt(2.0 * std::numbers::pi));
            } else {
                const double k = f.shape();
                return std::exp(k * std::log(f.beta) + (k - 1.0) * std::log(lambda) - f.beta * lambda -
                                std::lgamma(k));
            }
        },
        family);
}

/// Log-domain transform values at s, plus the log ratio ln L(s+delta) - ln L(s)
/// computed without cancellation. Everything downstream works in logs so that
/// (N-1)-fold powers of L do not underflow.
struct TransformValues {
    double log_laplace = 0.0;
    double log_weighted = 0.0;
    double log_ratio = 0.0; // <= 0
};

namespace detail {

inline constexpr double kLogNormalZMax = 40.0;
inline constexpr int kLogNormalPieces = 16;

inline double log_std_normal(double z)
{
    return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

// s * lambda with the convention 0 * inf = 0.
inline double rate_product(double s, double lambda)
{
    return s == 0.0 ? 0.0 : s * lambda;
}

// The log-normal transforms, integrated over z = (ln(lambda) - mu) / sigma
// against the standard normal weight.
inline double lognormal_laplace(const LogNormal& f, double s, const QuadratureConfig& cfg)
{
    auto integrand = [&](double z) {
        const double lambda = std::exp(f.mu + f.sigma * z);
        return std::exp(log_std_normal(z) - rate_product(s, lambda));
    };
    return integrate(integrand, -kLogNormalZMax, kLogNormalZMax, cfg, kLogNormalPieces).value;
}

inline double lognormal_weighted(const LogNormal& f, double s, const QuadratureConfig& cfg)
{
    auto integrand = [&](double z) {
        const double log_lambda = f.mu + f.sigma * z;
        return std::exp(log_std_normal(z) + log_lambda - rate_product(s, std::exp(log_lambda)));
    };
    return integrate(integrand, -kLogNormalZMax, kLogNormalZMax, cfg, kLogNormalPieces).value;
}

// L(s) - L(s + delta), kept positive and free of cancellation.
inline double lognormal_decrement(const LogNormal& f, double s, double delta, const QuadratureConfig& cfg)
{
    auto integrand = [&](double z) {
        const double lambda = std::exp(f.mu + f.sigma * z);
        return std::exp(log_std_normal(z) - rate_product(s, lambda)) * -std::expm1(-delta * lambda);
    };
    return integrate(integrand, -kLogNormalZMax, kLogNormalZMax, cfg, kLogNormalPieces).value;
}

} // namespace detail

/// E[exp(-s*lambda)] for the family. Closed form for Exponential and TPL,
/// quadrature for LogNormal.
inline double laplace(const NullFamily& family, double s, const QuadratureConfig& cfg = {})
{
    validate(family);
    detail::require(s >= 0.0, ErrorCode::InvalidArgument, "laplace argument must be >= 0");
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return f.rate / (f.rate + s);
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return detail::lognormal_laplace(f, s, cfg);
            } else {
                return std::exp(-f.shape() * std::log1p(s / f.beta));
            }
        },
        family);
}

/// E[lambda*exp(-s*lambda)] for the family.
inline double laplace_weighted(const NullFamily& family, double s, const QuadratureConfig& cfg = {})
{
    validate(family);
    detail::require(s >= 0.0, ErrorCode::InvalidArgument, "laplace argument must be >= 0");
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                const double d = f.rate + s;
                return f.rate / (d * d);
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return detail::lognormal_weighted(f, s, cfg);
            } else {
                const double k = f.shape();
                return (k / f.beta) * std::exp(-(k + 1.0) * std::log1p(s / f.beta));
            }
        },
        family);
}

/// Transform values at s with the ratio to s + delta.
inline TransformValues transform_at(const NullFamily& family, double s, double delta,
                                    const QuadratureConfig& cfg = {})
{
    return std::visit(
        [&](const auto& f) -> TransformValues {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                const double d = f.rate + s;
                return {std::log(f.rate / d), std::log(f.rate) - 2.0 * std::log(d), -std::log1p(delta / d)};
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                const double l = detail::lognormal_laplace(f, s, cfg);
                const double w = detail::lognormal_weighted(f, s, cfg);
                const double dec = delta > 0.0 ? detail::lognormal_decrement(f, s, delta, cfg) : 0.0;
                return {std::log(l), std::log(w), std::log1p(-std::min(dec / l, 1.0))};
            } else {
                const double k = f.shape();
                const double d = f.beta + s;
                return {-k * std::log1p(s / f.beta), std::log(k) + k * std::log(f.beta) - (k + 1.0) * std::log(d),
                        -k * std::log1p(delta / d)};
            }
        },
        family);
}

/// Same transforms, always by direct quadrature of the density. Serves as the
/// independent route against the closed forms.
inline TransformValues numeric_transform_at(const NullFamily& family, double s, double delta,
                                            const QuadratureConfig& cfg = {})
{
    validate(family);
    return std::visit(
        [&](const auto& f) -> TransformValues {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                const double scale = 1.0 / (f.rate + s);
                auto l = integrate_semi_infinite(
                    [&](double x) { return f.rate * std::exp(-(f.rate + s) * x); }, cfg, scale);
                auto w = integrate_semi_infinite(
                    [&](double x) { return f.rate * x * std::exp(-(f.rate + s) * x); }, cfg, scale);
                auto dec = integrate_semi_infinite(
                    [&](double x) { return f.rate * std::exp(-(f.rate + s) * x) * -std::expm1(-delta * x); },
                    cfg, scale);
                return {std::log(l.value), std::log(w.value), std::log1p(-std::min(dec.value / l.value, 1.0))};
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return transform_at(family, s, delta, cfg);
            } else {
                // lambda = t^(1/k) absorbs the lambda^(k-1) singularity:
                // p(lambda) dlambda = beta^k / Gamma(k+1) * exp(-beta*lambda) dt
                const double k = f.shape();
                const double front = std::exp(k * std::log(f.beta) - std::lgamma(k + 1.0));
                const double rate = f.beta + s;
                const double scale = std::pow(rate, -k);
                auto lam = [k](double t) { return std::pow(t, 1.0 / k); };
                auto l = integrate_semi_infinite([&](double t) { return front * std::exp(-rate * lam(t)); },
                                                 cfg, scale);
                auto w = integrate_semi_infinite(
                    [&](double t) {
                        const double x = lam(t);
                        return front * x * std::exp(-rate * x);
                    },
                    cfg, scale);
                auto dec = integrate_semi_infinite(
                    [&](double t) {
                        const double x = lam(t);
                        return front * std::exp(-rate * x) * -std::expm1(-delta * x);
                    },
                    cfg, scale);
                return {std::log(l.value), std::log(w.value), std::log1p(-std::min(dec.value / l.value, 1.0))};
            }
        },
        family);
}

// ---------------------------------------------------------------------------
// Semi-empirical posterior p(lambda | b) with gamma = B / Lambda.

namespace detail {

inline void check_posterior(double b, double gamma, double s)
{
    require(b >= 0.0 && std::isfinite(b), ErrorCode::InvalidArgument, "block count must be >= 0");
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::InvalidArgument, "gamma must be positive");
    require(s >= 0.0, ErrorCode::InvalidArgument, "laplace argument must be >= 0");
}

} // namespace detail

/// ln of E[exp(-s*lambda) | b] = b(1-u) - ln u, u = sqrt(1 + 2s/gamma).
inline double posterior_log_laplace(double b, double gamma, double s)
{
    detail::check_posterior(b, gamma, s);
    const double v = 2.0 * s / gamma;
    const double u = std::sqrt(1.0 + v);
    return -b * v / (1.0 + u) - 0.5 * std::log1p(v);
}

inline double posterior_laplace(double b, double gamma, double s)
{
    return std::exp(posterior_log_laplace(b, gamma, s));
}

inline double posterior_log_laplace_weighted(double b, double gamma, double s)
{
    detail::check_posterior(b, gamma, s);
    const double v = 2.0 * s / gamma;
    const double u = std::sqrt(1.0 + v);
    return std::log1p(b * u) - b * v / (1.0 + u) - std::log(gamma) - 1.5 * std::log1p(v);
}

/// E[lambda*exp(-s*lambda) | b] = (1 + b u) e^{b(1-u)} / (gamma u^3).
inline double posterior_laplace_weighted(double b, double gamma, double s)
{
    return std::exp(posterior_log_laplace_weighted(b, gamma, s));
}

/// Posterior density p(lambda | b).
inline double posterior_density(double b, double gamma, double lambda)
{
    if (!(lambda > 0.0)) {
        return 0.0;
    }
    const double mean = gamma * lambda;
    const double dev = b - mean;
    return std::exp(-dev * dev / (2.0 * mean)) / std::sqrt(2.0 * std::numbers::pi * lambda / gamma);
}

inline TransformValues posterior_transform_at(double b, double gamma, double s, double delta)
{
    detail::check_posterior(b, gamma, s);
    const double v1 = 2.0 * s / gamma;
    const double dv = 2.0 * delta / gamma;
    const double u1 = std::sqrt(1.0 + v1);
    const double u2 = std::sqrt(1.0 + v1 + dv);
    TransformValues t;
    t.log_laplace = -b * v1 / (1.0 + u1) - 0.5 * std::log1p(v1);
    t.log_weighted = std::log1p(b * u1) - b * v1 / (1.0 + u1) - std::log(gamma) - 1.5 * std::log1p(v1);
    t.log_ratio = -b * dv / (u1 + u2) - 0.5 * std::log1p(dv / (1.0 + v1));
    return t;
}

} // namespace forkcast
