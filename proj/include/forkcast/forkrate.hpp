#pragma once

// Analytic fork-rate engine.
//
// C(delta0) is the probability that the gap between the two earliest block
// solutions is below the propagation delay delta0. For independent miners
//
//   C = 1 - int_0^inf sum_i W_i(x) prod_{j!=i} L_j(delta0 + x) dx
//
// where L_j, W_j are the Laplace and weighted Laplace transforms of miner j's
// hash-rate marginal. Because the same integral at delta0 = 0 equals one, the
// engine integrates the difference
//
//   C = int_0^inf sum_i W_i(x) prod_{j!=i} L_j(x) (1 - prod_{j!=i} L_j(x+delta0)/L_j(x)) dx
//
// whose integrand is non-negative and has no cancellation when C is small.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "forkcast/error.hpp"
#include "forkcast/laplace.hpp"
#include "forkcast/model.hpp"
#include "forkcast/quadrature.hpp"

namespace forkcast {

struct ImpliedResult {
    double value = 0.0;
    bool valid = true;
};

/// Sum of squared shares. Shares must be non-negative and sum to one.
inline double hhi(std::span<const double> shares)
{
    detail::require(!shares.empty(), ErrorCode::InvalidArgument, "hhi needs at least one share");
    CompensatedSum total;
    CompensatedSum squares;
    for (double s : shares) {
        detail::require(s >= 0.0 && std::isfinite(s), ErrorCode::ShareSumViolation, "shares must be non-negative");
        total += s;
        squares += s * s;
    }
    if (std::abs(total.value() - 1.0) > 1e-9) {
        throw Error(ErrorCode::ShareSumViolation, "shares sum to " + std::to_string(total.value()) + ", not 1");
    }
    return squares.value();
}

inline double hhi(const MinerSet& miners)
{
    std::vector<double> shares;
    shares.reserve(miners.size());
    for (double l : miners.lambdas()) {
        shares.push_back(l / miners.total());
    }
    CompensatedSum sq;
    for (double s : shares) {
        sq += s * s;
    }
    return sq.value();
}

/// Empirical concentration sum (b_i / B)^2.
inline double hhi(const BlockCounts& counts)
{
    CompensatedSum sq;
    const double total = static_cast<double>(counts.total());
    for (auto b : counts.counts()) {
        const double s = static_cast<double>(b) / total;
        sq += s * s;
    }
    return sq.value();
}

namespace detail {

// Sum of all elements except index i, for every i, without subtracting.
inline std::vector<double> leave_one_out_sums(std::span<const double> xs)
{
    const std::size_t n = xs.size();
    std::vector<double> prefix(n + 1, 0.0);
    std::vector<double> suffix(n + 1, 0.0);
    CompensatedSum p;
    for (std::size_t i = 0; i < n; ++i) {
        prefix[i] = p.value();
        p += xs[i];
    }
    CompensatedSum q;
    for (std::size_t i = n; i-- > 0;) {
        suffix[i] = q.value();
        q += xs[i];
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = prefix[i] + suffix[i];
    }
    return out;
}

inline double finish_probability(double value, double error, const QuadratureConfig& cfg)
{
    const double slack = 10.0 * cfg.rel_tol;
    if (value < -slack || value > 1.0 + slack || !std::isfinite(value)) {
        throw Error(ErrorCode::NonConvergent, "fork rate " + std::to_string(value) + " outside [0, 1] (error " +
                                                  std::to_string(error) + ")");
    }
    return std::clamp(value, 0.0, 1.0);
}

inline void check_delta(double delta0)
{
    require(delta0 >= 0.0 && std::isfinite(delta0), ErrorCode::InvalidArgument,
            "propagation delay must be finite and >= 0");
}

} // namespace detail

/// Fork probability for known hash rates:
/// C = 1 - sum_i lambda_i exp(-delta0 (Lambda - lambda_i)) / Lambda.
inline ForkRateResult conditional_fork_rate(const MinerSet& miners, double delta0)
{
    detail::check_delta(delta0);
    const auto lambdas = miners.lambdas();
    const auto others = detail::leave_one_out_sums(lambdas);
    // Sum the survivors when they are small so C stays monotone near 1.
    CompensatedSum survive;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        survive += (lambdas[i] / miners.total()) * std::exp(-delta0 * others[i]);
    }
    double value = 1.0 - survive.value();
    if (survive.value() > 0.5) {
        CompensatedSum acc;
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            acc += (lambdas[i] / miners.total()) * -std::expm1(-delta0 * others[i]);
        }
        value = acc.value();
    }
    ForkRateResult r;
    r.value = std::clamp(value, 0.0, 1.0);
    r.method = ForkRateMethod::Conditional;
    r.delta0 = delta0;
    r.tau = delta0 * miners.total();
    r.inputs_echo = "fixed N=" + std::to_string(miners.size()) + " Lambda=" + std::to_string(miners.total());
    return r;
}

/// Density of the gap between the two fastest miners given the rates.
inline double pdf_delta_conditional(const MinerSet& miners, double delta)
{
    detail::check_delta(delta);
    const auto lambdas = miners.lambdas();
    const auto others = detail::leave_one_out_sums(lambdas);
    CompensatedSum acc;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        acc += lambdas[i] * others[i] * std::exp(-others[i] * delta);
    }
    return acc.value() / miners.total();
}

/// First-order approximation C ~ delta0 * Lambda * (1 - HHI), clamped to [0, 1].
inline ForkRateResult taylor_fork_rate(double lambda_total, double concentration, double delta0)
{
    detail::check_delta(delta0);
    detail::require(lambda_total > 0.0, ErrorCode::InvalidArgument, "total hash rate must be positive");
    detail::require(concentration > 0.0 && concentration <= 1.0, ErrorCode::InvalidArgument, "hhi must be in (0, 1]");
    const double slope = lambda_total * (1.0 - concentration);
    ForkRateResult r;
    r.value = std::clamp(delta0 * slope, 0.0, 1.0);
    r.method = ForkRateMethod::Taylor;
    r.delta0 = delta0;
    r.tau = delta0 * lambda_total;
    r.inputs_echo = "Lambda=" + std::to_string(lambda_total) + " HHI=" + std::to_string(concentration);
    return r;
}

// ---------------------------------------------------------------------------
// Per-miner transforms for the independent, non-identical formula.

struct PointMass {
    double lambda = 0.0;
};

struct Posterior {
    double b = 0.0;
    double gamma = 1.0;
};

/// A null family whose transforms are integrated from the density.
struct NumericFamily {
    NullFamily family;
};

using MinerTransform = std::variant<PointMass, NullFamily, Posterior, NumericFamily>;

inline TransformValues evaluate(const MinerTransform& t, double s, double delta, const QuadratureConfig& cfg)
{
    return std::visit(
        [&](const auto& m) -> TransformValues {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return {-s * m.lambda, std::log(m.lambda) - s * m.lambda, -delta * m.lambda};
            } else if constexpr (std::is_same_v<T, NullFamily>) {
                return transform_at(m, s, delta, cfg);
            } else if constexpr (std::is_same_v<T, Posterior>) {
                return posterior_transform_at(m.b, m.gamma, s, delta);
            } else {
                return numeric_transform_at(m.family, s, delta, cfg);
            }
        },
        t);
}

inline double transform_mean(const MinerTransform& t)
{
    return std::visit(
        [](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return m.lambda;
            } else if constexpr (std::is_same_v<T, NullFamily>) {
                return family_mean(m);
            } else if constexpr (std::is_same_v<T, Posterior>) {
                return (1.0 + m.b) / m.gamma;
            } else {
                return family_mean(m.family);
            }
        },
        t);
}

inline void validate(const MinerTransform& t)
{
    std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                detail::require(m.lambda > 0.0 && std::isfinite(m.lambda), ErrorCode::InvalidModel,
                                "point-mass hash rate must be positive");
            } else if constexpr (std::is_same_v<T, NullFamily>) {
                validate(m);
            } else if constexpr (std::is_same_v<T, Posterior>) {
                detail::require(m.b >= 0.0 && m.gamma > 0.0, ErrorCode::InvalidModel,
                                "posterior needs b >= 0 and gamma > 0");
            } else {
                validate(m.family);
            }
        },
        t);
}

/// A transform shared by `count` miners.
struct WeightedTransform {
    MinerTransform transform;
    std::size_t count = 1;
};

namespace detail {

// Outer integral for the independent, non-identical case.
inline QuadratureResult inid_integral(std::span<const WeightedTransform> groups, double delta0,
                                      const QuadratureConfig& cfg)
{
    const std::size_t g = groups.size();
    CompensatedSum mean_total;
    std::size_t miners = 0;
    for (const auto& grp : groups) {
        validate(grp.transform);
        require(grp.count >= 1, ErrorCode::InvalidModel, "transform group must hold at least one miner");
        mean_total += static_cast<double>(grp.count) * transform_mean(grp.transform);
        miners += grp.count;
    }
    require(miners >= 2, ErrorCode::InvalidModel, "fork rate needs at least 2 miners");

    const QuadratureConfig inner = cfg.inner();
    std::vector<TransformValues> tv(g);
    std::vector<double> log_l(g);
    std::vector<double> ratio(g);
    auto integrand = [&](double x) {
        for (std::size_t k = 0; k < g; ++k) {
            tv[k] = evaluate(groups[k].transform, x, delta0, inner);
            const double c = static_cast<double>(groups[k].count);
            log_l[k] = c * tv[k].log_laplace;
            ratio[k] = c * tv[k].log_ratio;
        }
        const auto log_l_others = leave_one_out_sums(log_l);
        const auto ratio_others = leave_one_out_sums(ratio);
        CompensatedSum acc;
        for (std::size_t k = 0; k < g; ++k) {
            const double extra = static_cast<double>(groups[k].count - 1);
            const double log_prod = log_l_others[k] + extra * tv[k].log_laplace;
            const double log_shift = ratio_others[k] + extra * tv[k].log_ratio;
            const double gap = -std::expm1(log_shift);
            if (gap == 0.0) {
                continue;
            }
            acc += static_cast<double>(groups[k].count) * std::exp(tv[k].log_weighted + log_prod) * gap;
        }
        return acc.value();
    };
    return integrate_semi_infinite(integrand, cfg, 1.0 / mean_total.value());
}

// Outer integral when all N miners share one transform, evaluated by `eval(s)`.
template <class Eval>
QuadratureResult iid_integral(Eval&& eval, std::size_t n, double mean, const QuadratureConfig& cfg)
{
    const double nm1 = static_cast<double>(n - 1);
    auto integrand = [&](double x) {
        const TransformValues t = eval(x);
        const double gap = -std::expm1(nm1 * t.log_ratio);
        if (gap == 0.0) {
            return 0.0;
        }
        return static_cast<double>(n) * std::exp(t.log_weighted + nm1 * t.log_laplace) * gap;
    };
    return integrate_semi_infinite(integrand, cfg, 1.0 / (static_cast<double>(n) * mean));
}

inline ForkRateResult make_result(const QuadratureResult& q, ForkRateMethod method, double delta0, double lambda,
                                  std::string echo, const QuadratureConfig& cfg)
{
    ForkRateResult r;
    r.value = finish_probability(q.value, q.error, cfg);
    r.error_estimate = q.error;
    r.method = method;
    r.delta0 = delta0;
    r.tau = delta0 * lambda;
    r.inputs_echo = std::move(echo);
    return r;
}

inline std::string describe(const NullFamily& family)
{
    std::ostringstream os;
    os.precision(10);
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                os << "exp(r=" << f.rate << ")";
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                os << "lognormal(mu=" << f.mu << ",sigma=" << f.sigma << ")";
            } else {
                os << "tpl(alpha=" << f.alpha << ",beta=" << f.beta << ")";
            }
        },
        family);
    return os.str();
}

} // namespace detail

/// i.i.d. hash rates drawn from a null family. Exponential and TPL use their
/// reduced one-dimensional integrands; log-normal nests quadrature.
inline ForkRateResult fork_rate_iid(const NullFamily& family, std::size_t n, double delta0,
                                    const QuadratureConfig& cfg = {})
{
    detail::check_delta(delta0);
    validate(family);
    detail::require(n >= 2, ErrorCode::InvalidModel, "i.i.d. fork rate needs n >= 2");
    const double nd = static_cast<double>(n);
    const double mean = family_mean(family);
    const std::string echo = detail::describe(family) + " N=" + std::to_string(n);

    if (const auto* e = std::get_if<Exponential>(&family)) {
        // N r^N / (r+x)^(N+1) * (1 - ((r+x)/(r+x+delta0))^(N-1))
        const double r = e->rate;
        auto integrand = [&](double x) {
            const double gap = -std::expm1(-(nd - 1.0) * std::log1p(delta0 / (r + x)));
            return (nd / r) * std::exp(-(nd + 1.0) * std::log1p(x / r)) * gap;
        };
        auto q = integrate_semi_infinite(integrand, cfg, r / nd);
        return detail::make_result(q, ForkRateMethod::ClosedForm, delta0, nd * mean, echo, cfg);
    }
    if (const auto* t = std::get_if<TruncatedPowerLaw>(&family)) {
        // N k beta^(Nk) / (beta+x)^(Nk+1) * (1 - ((beta+x)/(beta+x+delta0))^((N-1)k))
        const double k = t->shape();
        const double beta = t->beta;
        auto integrand = [&](double x) {
            const double gap = -std::expm1(-(nd - 1.0) * k * std::log1p(delta0 / (beta + x)));
            return (nd * k / beta) * std::exp(-(nd * k + 1.0) * std::log1p(x / beta)) * gap;
        };
        auto q = integrate_semi_infinite(integrand, cfg, 1.0 / (nd * mean));
        return detail::make_result(q, ForkRateMethod::ClosedForm, delta0, nd * mean, echo, cfg);
    }
    const QuadratureConfig inner = cfg.inner();
    auto q = detail::iid_integral([&](double x) { return transform_at(family, x, delta0, inner); }, n, mean, cfg);
    return detail::make_result(q, ForkRateMethod::Quadrature, delta0, nd * mean, echo, cfg);
}

/// The i.i.d. formula with every transform integrated numerically from the
/// family density; independent of the closed forms used by fork_rate_iid.
inline ForkRateResult fork_rate_iid_quadrature(const NullFamily& family, std::size_t n, double delta0,
                                               const QuadratureConfig& cfg = {})
{
    detail::check_delta(delta0);
    validate(family);
    detail::require(n >= 2, ErrorCode::InvalidModel, "i.i.d. fork rate needs n >= 2");
    const double mean = family_mean(family);
    const QuadratureConfig inner = cfg.inner();
    auto q = detail::iid_integral([&](double x) { return numeric_transform_at(family, x, delta0, inner); }, n, mean,
                                  cfg);
    return detail::make_result(q, ForkRateMethod::Quadrature, delta0, static_cast<double>(n) * mean,
                               detail::describe(family) + " N=" + std::to_string(n), cfg);
}

/// Independent, non-identically distributed hash rates, one transform per miner.
inline ForkRateResult fork_rate_inid(std::span<const MinerTransform> miners, double delta0,
                                     const QuadratureConfig& cfg = {})
{
    detail::check_delta(delta0);
    detail::require(miners.size() >= 2, ErrorCode::InvalidModel, "fork rate needs at least 2 miners");
    std::vector<WeightedTransform> groups;
    groups.reserve(miners.size());
    for (const auto& m : miners) {
        groups.push_back({m, 1});
    }
    auto q = detail::inid_integral(groups, delta0, cfg);
    CompensatedSum lambda;
    for (const auto& m : miners) {
        lambda += transform_mean(m);
    }
    return detail::make_result(q, ForkRateMethod::Quadrature, delta0, lambda.value(),
                               "inid N=" + std::to_string(miners.size()), cfg);
}

/// Grouped variant: each transform stands for `count` identical miners.
inline ForkRateResult fork_rate_inid(std::span<const WeightedTransform> groups, double delta0,
                                     const QuadratureConfig& cfg = {})
{
    detail::check_delta(delta0);
    auto q = detail::inid_integral(groups, delta0, cfg);
    CompensatedSum lambda;
    std::size_t n = 0;
    for (const auto& g : groups) {
        lambda += static_cast<double>(g.count) * transform_mean(g.transform);
        n += g.count;
    }
    return detail::make_result(q, ForkRateMethod::Quadrature, delta0, lambda.value(), "inid N=" + std::to_string(n),
                               cfg);
}

namespace detail {

// Distinct block counts with multiplicities, in ascending order.
inline std::vector<std::pair<std::int64_t, std::size_t>> count_groups(const BlockCounts& counts)
{
    std::map<std::int64_t, std::size_t> m;
    for (auto b : counts.counts()) {
        ++m[b];
    }
    return {m.begin(), m.end()};
}

// Transforms of the mixture (1/N) sum_i p(lambda | b_i).
inline TransformValues posterior_mixture_at(std::span<const std::pair<std::int64_t, std::size_t>> groups,
                                            double total, double gamma, double s, double delta)
{
    const std::size_t g = groups.size();
    std::vector<double> log_l(g);
    std::vector<double> log_w(g);
    std::vector<double> ratio(g);
    for (std::size_t k = 0; k < g; ++k) {
        const auto t = posterior_transform_at(static_cast<double>(groups[k].first), gamma, s, delta);
        const double log_weight = std::log(static_cast<double>(groups[k].second) / total);
        log_l[k] = log_weight + t.log_laplace;
        log_w[k] = log_weight + t.log_weighted;
        ratio[k] = t.log_ratio;
    }
    TransformValues out;
    out.log_laplace = log_sum_exp(log_l);
    out.log_weighted = log_sum_exp(log_w);
    // L(s+delta)/L(s) = 1 - sum_k pi_k (1 - exp(r_k)), pi = softmax(log_l)
    CompensatedSum drop;
    for (std::size_t k = 0; k < g; ++k) {
        drop += std::exp(log_l[k] - out.log_laplace) * -std::expm1(ratio[k]);
    }
    out.log_ratio = std::log1p(-std::min(drop.value(), 1.0));
    return out;
}

} // namespace detail

/// Semi-empirical fork rate with i.i.d. hash rates from the averaged posterior.
inline ForkRateResult fork_rate_semi_empirical(const SemiEmpiricalIID& model, double delta0,
                                               const QuadratureConfig& cfg = {})
{
    detail::check_delta(delta0);
    validate(HashRateModel{model});
    const auto groups = detail::count_groups(model.counts);
    const std::size_t n = model.counts.size();
    const double nd = static_cast<double>(n);
    const double mean = (static_cast<double>(model.counts.total()) / nd + 1.0) / model.gamma;
    auto q = detail::iid_integral(
        [&](double x) { return detail::posterior_mixture_at(groups, nd, model.gamma, x, delta0); }, n, mean, cfg);
    return detail::make_result(q, ForkRateMethod::SemiEmpirical, delta0, nd * mean,
                               "semi-iid N=" + std::to_string(n) + " gamma=" + std::to_string(model.gamma), cfg);
}

/// Semi-empirical fork rate with miner i's rate drawn from p(lambda | b_i).
inline ForkRateResult fork_rate_semi_empirical(const SemiEmpiricalINID& model, double delta0,
                                               const QuadratureConfig& cfg = {})
{
    detail::check_delta(delta0);
    validate(HashRateModel{model});
    std::vector<WeightedTransform> groups;
    for (const auto& [b, c] : detail::count_groups(model.counts)) {
        groups.push_back({Posterior{static_cast<double>(b), model.gamma}, c});
    }
    auto q = detail::inid_integral(groups, delta0, cfg);
    const double lambda = expected_total_rate(HashRateModel{model});
    return detail::make_result(q, ForkRateMethod::SemiEmpirical, delta0, lambda,
                               "semi-inid N=" + std::to_string(model.counts.size()) +
                                   " gamma=" + std::to_string(model.gamma),
                               cfg);
}

/// Default analytic route for any model.
inline ForkRateResult fork_rate(const HashRateModel& model, double delta0, const QuadratureConfig& cfg = {})
{
    validate(model);
    return std::visit(
        [&](const auto& m) -> ForkRateResult {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FixedRates>) {
                return conditional_fork_rate(m.miners, delta0);
            } else if constexpr (std::is_same_v<T, IIDNull>) {
                return fork_rate_iid(m.family, m.n, delta0, cfg);
            } else if constexpr (std::is_same_v<T, INIDNull>) {
                std::vector<MinerTransform> t(m.families.begin(), m.families.end());
                return fork_rate_inid(std::span<const MinerTransform>(t), delta0, cfg);
            } else {
                return fork_rate_semi_empirical(m, delta0, cfg);
            }
        },
        model);
}

/// Delay that makes the first-order formula reproduce an observed fork rate.
inline ImpliedResult implied_delta0(double fork_rate_observed, double lambda_total, double concentration)
{
    detail::require(fork_rate_observed >= 0.0 && fork_rate_observed < 1.0, ErrorCode::InvalidArgument,
                    "fork rate must be in [0, 1)");
    detail::require(lambda_total > 0.0, ErrorCode::InvalidArgument, "total hash rate must be positive");
    if (concentration >= 1.0) {
        throw Error(ErrorCode::DegenerateHHI, "implied delay undefined for HHI = 1");
    }
    detail::require(concentration > 0.0, ErrorCode::InvalidArgument, "hhi must be in (0, 1)");
    const double slope = lambda_total * (1.0 - concentration);
    return {fork_rate_observed / slope, true};
}

/// Concentration that makes the first-order formula reproduce an observed
/// fork rate. Values outside [0, 1] are returned with valid = false.
inline ImpliedResult implied_hhi(double fork_rate_observed, double lambda_total, double delta0)
{
    detail::require(delta0 > 0.0, ErrorCode::InvalidArgument, "delta0 must be positive");
    detail::require(lambda_total > 0.0, ErrorCode::InvalidArgument, "total hash rate must be positive");
    const double value = 1.0 - fork_rate_observed / (lambda_total * delta0);
    return {value, value >= 0.0 && value <= 1.0};
}

} // namespace forkcast
