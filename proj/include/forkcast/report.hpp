#pragma once

// JSON form of hash-rate models and the period pipeline that produces the
// report document and its CSV twin.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "forkcast/error.hpp"
#include "forkcast/estimate.hpp"
#include "forkcast/forkrate.hpp"
#include "forkcast/ingest.hpp"
#include "forkcast/laplace.hpp"
#include "forkcast/model.hpp"

namespace forkcast {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest round-trip decimal form.
inline std::string format_number(double x)
{
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), ptr);
}

inline std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string read_text_file(const std::string& path)
{
    auto in = detail::open_input(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Json input_digest(const std::string& path, std::string_view bytes)
{
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return Json{{"path", path}, {"fnv1a64", hex}, {"bytes", bytes.size()}};
}

// Models.

inline Json family_to_json(const NullFamily& family)
{
    return std::visit(
        [](const auto& f) -> Json {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Exponential>) {
                return Json{{"name", "exp"}, {"rate", f.rate}};
            } else if constexpr (std::is_same_v<T, LogNormal>) {
                return Json{{"name", "lognormal"}, {"mu", f.mu}, {"sigma", f.sigma}};
            } else {
                return Json{{"name", "tpl"}, {"alpha", f.alpha}, {"beta", f.beta}};
            }
        },
        family);
}

namespace detail {

inline const Json& member(const Json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorCode::InvalidArgument, std::string("model JSON lacks '") + key + "'");
    }
    return j.at(key);
}

inline double number(const Json& j, const char* key)
{
    const auto& v = member(j, key);
    if (!v.is_number()) {
        throw Error(ErrorCode::InvalidArgument, std::string("model JSON field '") + key + "' must be a number");
    }
    return v.get<double>();
}

inline std::int64_t integer(const Json& j, const char* key)
{
    const auto& v = member(j, key);
    if (!v.is_number_integer()) {
        throw Error(ErrorCode::InvalidArgument, std::string("model JSON field '") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
}

template <class T>
std::vector<T> array_of(const Json& j, const char* key)
{
    const auto& v = member(j, key);
    if (!v.is_array()) {
        throw Error(ErrorCode::InvalidArgument, std::string("model JSON field '") + key + "' must be an array");
    }
    std::vector<T> out;
    for (const auto& e : v) {
        if (!e.is_number() || (std::is_integral_v<T> && !e.is_number_integer())) {
            throw Error(ErrorCode::InvalidArgument, std::string("model JSON field '") + key + "' has a bad entry");
        }
        out.push_back(e.get<T>());
    }
    return out;
}

} // namespace detail

inline NullFamily family_from_json(const Json& j)
{
    const auto& name = detail::member(j, "name");
    if (!name.is_string()) {
        throw Error(ErrorCode::InvalidArgument, "family name must be a string");
    }
    NullFamily f;
    switch (parse_family_kind(name.get<std::string>())) {
    case FamilyKind::Exponential: f = Exponential{detail::number(j, "rate")}; break;
    case FamilyKind::LogNormal: f = LogNormal{detail::number(j, "mu"), detail::number(j, "sigma")}; break;
    case FamilyKind::TruncatedPowerLaw: f = TruncatedPowerLaw{detail::number(j, "alpha"), detail::number(j, "beta")}; break;
    }
    validate(f);
    return f;
}

inline Json model_to_json(const HashRateModel& model)
{
    return std::visit(
        [](const auto& m) -> Json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FixedRates>) {
                const auto l = m.miners.lambdas();
                return Json{{"kind", "fixed"}, {"lambdas", std::vector<double>(l.begin(), l.end())}};
            } else if constexpr (std::is_same_v<T, IIDNull>) {
                return Json{{"kind", "iid_null"}, {"family", family_to_json(m.family)}, {"n", m.n}};
            } else if constexpr (std::is_same_v<T, INIDNull>) {
                Json fams = Json::array();
                for (const auto& f : m.families) {
                    fams.push_back(family_to_json(f));
                }
                return Json{{"kind", "inid_null"}, {"families", fams}};
            } else {
                const auto c = m.counts.counts();
                return Json{{"kind", std::is_same_v<T, SemiEmpiricalIID> ? "semi_iid" : "semi_inid"},
                            {"counts", std::vector<std::int64_t>(c.begin(), c.end())},
                            {"gamma", m.gamma}};
            }
        },
        model);
}

/// Semi-empirical models accept either "gamma" or "lambda_total" (gamma = B / Lambda).
inline HashRateModel model_from_json(const Json& j)
{
    const auto& kind_field = detail::member(j, "kind");
    if (!kind_field.is_string()) {
        throw Error(ErrorCode::InvalidArgument, "model kind must be a string");
    }
    const auto kind = kind_field.get<std::string>();
    auto parse = [&]() -> HashRateModel {
        if (kind == "fixed") {
            return FixedRates{MinerSet(detail::array_of<double>(j, "lambdas"))};
        }
        if (kind == "iid_null") {
            const auto n = detail::integer(j, "n");
            detail::require(n >= 2, ErrorCode::InvalidArgument, "model n must be >= 2");
            return IIDNull{family_from_json(detail::member(j, "family")), static_cast<std::size_t>(n)};
        }
        if (kind == "inid_null") {
            const auto& fams = detail::member(j, "families");
            detail::require(fams.is_array(), ErrorCode::InvalidArgument, "families must be an array");
            INIDNull m;
            for (const auto& f : fams) {
                m.families.push_back(family_from_json(f));
            }
            return m;
        }
        if (kind == "semi_iid" || kind == "semi_inid") {
            BlockCounts counts(detail::array_of<std::int64_t>(j, "counts"));
            const double gamma = j.contains("gamma") ? detail::number(j, "gamma")
                                                     : counts.gamma(detail::number(j, "lambda_total"));
            if (kind == "semi_iid") {
                return SemiEmpiricalIID{counts, gamma};
            }
            return SemiEmpiricalINID{counts, gamma};
        }
        throw Error(ErrorCode::InvalidArgument, "unknown model kind '" + kind + "'");
    };
    const HashRateModel model = parse();
    try {
        validate(model);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidArgument, e.what());
    }
    return model;
}

// Period pipeline.

/// Model names accepted by the pipeline and the fit command.
inline constexpr std::array<const char*, 5> kModelNames = {"exp", "lognormal", "tpl", "semi-iid", "semi-inid"};

/// Expands "semi" into both semi-empirical variants and rejects unknown names.
inline std::vector<std::string> normalize_model_names(const std::vector<std::string>& names)
{
    std::vector<std::string> out;
    auto add = [&](const std::string& n) {
        if (std::find(out.begin(), out.end(), n) == out.end()) {
            out.push_back(n);
        }
    };
    for (const auto& n : names) {
        if (n == "semi") {
            add("semi-iid");
            add("semi-inid");
        } else if (std::find(kModelNames.begin(), kModelNames.end(), n) != kModelNames.end()) {
            add(n);
        } else if (n == "exponential" || n == "ln") {
            add(n == "ln" ? "lognormal" : "exp");
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown model '" + n + "'");
        }
    }
    detail::require(!out.empty(), ErrorCode::InvalidArgument, "no models selected");
    return out;
}

/// Hash-rate model for a named fit of the given counts.
inline HashRateModel build_model(const std::string& name, const BlockCounts& counts, double lambda_total,
                                 std::vector<std::string>* notes = nullptr)
{
    if (name == "semi-iid") {
        return SemiEmpiricalIID{counts, counts.gamma(lambda_total)};
    }
    if (name == "semi-inid") {
        return SemiEmpiricalINID{counts, counts.gamma(lambda_total)};
    }
    const auto fit = fit_family(fit_moments(counts, lambda_total), parse_family_kind(name));
    if (notes != nullptr) {
        notes->insert(notes->end(), fit.notes.begin(), fit.notes.end());
    }
    return IIDNull{fit.family, counts.size()};
}

struct PipelineOptions {
    std::vector<std::string> models{kModelNames.begin(), kModelNames.end()};
    std::size_t period_length = kDefaultPeriodLength;
    double rescale = kDefaultRescale;
    unsigned threads = 1;
    QuadratureConfig quadrature{};
};

struct ModelForkRate {
    std::string model;
    Json params;
    std::string percentile; // p50, p90, p99
    double delta0 = 0.0;
    double value = 0.0;
    double error_estimate = 0.0;
    std::string method;
};

struct PeriodIssue {
    std::string stage;
    std::string code;
    std::string message;
};

struct PeriodReport {
    PeriodRecord record;
    bool have_record = false;
    double hhi = 0.0;
    MomentPair moments;
    std::vector<ModelForkRate> fork_rates;
    std::optional<ImpliedResult> implied_delta0;
    std::array<std::optional<ImpliedResult>, 3> implied_hhi;
    std::vector<PeriodIssue> issues;

    bool ok() const noexcept { return have_record && issues.empty(); }
};

struct PipelineResult {
    std::vector<PeriodReport> periods;
    std::size_t remainder_blocks = 0;

    std::size_t succeeded() const
    {
        return static_cast<std::size_t>(
            std::count_if(periods.begin(), periods.end(), [](const auto& p) { return p.ok(); }));
    }
};

namespace detail {

inline constexpr std::array<const char*, 3> kPercentileNames = {"p50", "p90", "p99"};

template <class F>
void record_issue(PeriodReport& report, const char* stage, F&& body)
{
    try {
        body();
    } catch (const Error& e) {
        report.issues.push_back({stage, std::string(to_string(e.code())), e.what()});
    }
}

inline PeriodReport analyze_period(std::span<const BlockRow> blocks, std::span<const StaleRow> stales,
                                   std::span<const PropagationRow> propagation,
                                   std::span<const HashrateRow> hashrate, std::size_t index,
                                   const PipelineOptions& opts)
{
    PeriodReport rep;
    record_issue(rep, "record", [&] {
        rep.record = build_period_record(blocks, stales, propagation, hashrate, index, opts.rescale);
        rep.have_record = true;
    });
    if (!rep.have_record) {
        return rep;
    }
    const auto& rec = rep.record;
    if (!rec.usable()) {
        rep.issues.push_back({"model", "InvalidModel", "period has fewer than 2 miners"});
        return rep;
    }
    const BlockCounts counts(rec.counts);
    rep.hhi = hhi(counts);
    rep.moments = fit_moments(counts, rec.lambda_total);

    const std::array<double, 3> delays = {rec.prop_p50, rec.prop_p90, rec.prop_p99};
    if (rec.propagation_samples == 0) {
        rep.issues.push_back({"propagation", "EmptyPeriod", "no propagation samples within the period"});
    } else {
        for (const auto& name : opts.models) {
            record_issue(rep, name.c_str(), [&] {
                const auto model = build_model(name, counts, rec.lambda_total);
                Json params = model_to_json(model);
                std::vector<ModelForkRate> rows;
                for (std::size_t k = 0; k < delays.size(); ++k) {
                    const auto r = fork_rate(model, delays[k], opts.quadrature);
                    rows.push_back({name, params, kPercentileNames[k], delays[k], r.value, r.error_estimate,
                                    std::string(to_string(r.method))});
                }
                rep.fork_rates.insert(rep.fork_rates.end(), rows.begin(), rows.end());
            });
        }
        for (std::size_t k = 0; k < delays.size(); ++k) {
            record_issue(rep, "implied_hhi",
                         [&] { rep.implied_hhi[k] = implied_hhi(rec.fork_rate_empirical, rec.lambda_total, delays[k]); });
        }
    }
    record_issue(rep, "implied_delta0",
                 [&] { rep.implied_delta0 = implied_delta0(rec.fork_rate_empirical, rec.lambda_total, rep.hhi); });
    return rep;
}

} // namespace detail

/// Segments the chain and analyzes each complete period. Periods run on
/// worker threads; the result is ordered by period index.
inline PipelineResult run_pipeline(std::span<const BlockRow> blocks, std::span<const StaleRow> stales,
                                   std::span<const PropagationRow> propagation,
                                   std::span<const HashrateRow> hashrate, const PipelineOptions& opts)
{
    const auto seg = segment_periods(blocks, opts.period_length);
    PipelineResult result;
    result.remainder_blocks = seg.remainder;
    result.periods.resize(seg.periods.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= seg.periods.size()) {
                    return;
                }
                const auto& p = seg.periods[k];
                result.periods[k] = detail::analyze_period(blocks.subspan(p.begin, p.size()), stales, propagation,
                                                           hashrate, p.index, opts);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
            next.store(seg.periods.size());
        }
    };
    const unsigned threads =
        static_cast<unsigned>(std::min<std::size_t>(std::max(1u, opts.threads), seg.periods.size()));
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
    return result;
}

inline Json implied_to_json(const std::optional<ImpliedResult>& r)
{
    if (!r) {
        return nullptr;
    }
    return Json{{"value", r->value}, {"valid", r->valid}};
}

inline Json period_to_json(const PeriodReport& rep)
{
    const auto& rec = rep.record;
    Json j;
    j["index"] = rec.index;
    j["status"] = rep.ok() ? "ok" : "error";
    if (rep.have_record) {
        j["first_height"] = rec.first_height;
        j["last_height"] = rec.last_height;
        j["start_time"] = rec.start_time;
        j["end_time"] = rec.end_time;
        j["blocks"] = rec.last_height - rec.first_height + 1;
        j["n_miners"] = rec.n_miners;
        j["lambda_total"] = rec.lambda_total;
        j["block_time"] = 1.0 / rec.lambda_total;
        j["lambda_sanity"] = rec.lambda_sanity;
        j["fork_rate_empirical"] = rec.fork_rate_empirical;
        j["propagation"] = {{"p50", rec.prop_p50},
                            {"p90", rec.prop_p90},
                            {"p99", rec.prop_p99},
                            {"samples", rec.propagation_samples}};
        Json miners = Json::array();
        for (std::size_t i = 0; i < rec.miner_ids.size(); ++i) {
            miners.push_back({{"id", rec.miner_ids[i]}, {"blocks", rec.counts[i]}});
        }
        j["miners"] = miners;
        if (rec.usable()) {
            j["hhi"] = rep.hhi;
            j["moments"] = {{"m", rep.moments.m}, {"s", rep.moments.s}};
        }
    }
    Json rates = Json::array();
    for (const auto& r : rep.fork_rates) {
        rates.push_back({{"model", r.model},
                         {"percentile", r.percentile},
                         {"delta0", r.delta0},
                         {"fork_rate", r.value},
                         {"error_estimate", r.error_estimate},
                         {"method", r.method},
                         {"params", r.params}});
    }
    j["model_fork_rates"] = rates;
    j["implied_delta0"] = implied_to_json(rep.implied_delta0);
    Json ih;
    for (std::size_t k = 0; k < 3; ++k) {
        ih[detail::kPercentileNames[k]] = implied_to_json(rep.implied_hhi[k]);
    }
    j["implied_hhi"] = ih;
    Json issues = Json::array();
    for (const auto& e : rep.issues) {
        issues.push_back({{"stage", e.stage}, {"code", e.code}, {"message", e.message}});
    }
    j["errors"] = issues;
    return j;
}

inline Json report_to_json(const PipelineResult& result, const PipelineOptions& opts, Json inputs)
{
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["inputs"] = std::move(inputs);
    j["period_length"] = opts.period_length;
    j["rescale"] = opts.rescale;
    j["models"] = opts.models;
    j["remainder_blocks"] = result.remainder_blocks;
    Json periods = Json::array();
    for (const auto& p : result.periods) {
        periods.push_back(period_to_json(p));
    }
    j["periods"] = periods;
    return j;
}

/// One row per (period, model, percentile); periods without model rows get
/// a single row with empty model columns.
inline std::string report_to_csv(const PipelineResult& result)
{
    std::ostringstream os;
    os << "period,first_height,last_height,n_miners,lambda_total,hhi,fork_rate_empirical,implied_delta0,"
          "model,percentile,delta0,fork_rate,error_estimate,method,implied_hhi\n";
    auto opt = [](const std::optional<ImpliedResult>& r) { return r ? format_number(r->value) : std::string(); };
    for (const auto& rep : result.periods) {
        const auto& rec = rep.record;
        std::ostringstream head;
        head << rec.index << ',' << rec.first_height << ',' << rec.last_height << ',' << rec.n_miners << ','
             << format_number(rec.lambda_total) << ',' << (rec.usable() ? format_number(rep.hhi) : "") << ','
             << format_number(rec.fork_rate_empirical) << ',' << opt(rep.implied_delta0);
        if (rep.fork_rates.empty()) {
            os << head.str() << ",,,,,,,\n";
            continue;
        }
        for (const auto& r : rep.fork_rates) {
            std::size_t k = 0;
            while (k < 3 && r.percentile != detail::kPercentileNames[k]) {
                ++k;
            }
            os << head.str() << ',' << r.model << ',' << r.percentile << ',' << format_number(r.delta0) << ','
               << format_number(r.value) << ',' << format_number(r.error_estimate) << ',' << r.method << ','
               << (k < 3 ? opt(rep.implied_hhi[k]) : "") << '\n';
        }
    }
    return os.str();
}

} // namespace forkcast
