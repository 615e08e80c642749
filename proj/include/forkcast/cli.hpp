#pragma once

// forkcast command line: fit, forkrate, simulate, implied, band, pipeline.
//
// Exit codes: 0 success, 2 bad input or usage, 3 numeric or fitting failure,
// 4 internal error. Output is assembled in memory and written only on
// success, so a failing command never leaves partial output behind.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "forkcast/error.hpp"
#include "forkcast/estimate.hpp"
#include "forkcast/forkrate.hpp"
#include "forkcast/ingest.hpp"
#include "forkcast/model.hpp"
#include "forkcast/report.hpp"
#include "forkcast/simulate.hpp"

namespace forkcast::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitInternal = 4;

namespace detail {

/// Block counts per miner for either the whole file or one full period.
struct CountSource {
    std::string blocks_path;
    std::optional<std::size_t> period;
    std::size_t period_length = kDefaultPeriodLength;
    std::size_t zero_miners = 0;

    struct Loaded {
        BlockCounts counts;
        Json input;
    };

    Loaded load() const
    {
        const std::string text = read_text_file(blocks_path);
        std::istringstream in(text);
        auto blocks = read_blocks(in, blocks_path);
        std::span<const BlockRow> view(blocks);
        if (period) {
            const auto seg = segment_periods(view, period_length);
            if (*period >= seg.periods.size()) {
                throw Error(ErrorCode::InvalidArgument, "period " + std::to_string(*period) + " not present (" +
                                                            std::to_string(seg.periods.size()) + " full periods)");
            }
            const auto& p = seg.periods[*period];
            view = view.subspan(p.begin, p.size());
        }
        if (view.empty()) {
            throw Error(ErrorCode::EmptyPeriod, blocks_path + " has no blocks");
        }
        std::map<std::string, std::int64_t> per_miner;
        for (const auto& b : view) {
            ++per_miner[b.miner_id];
        }
        std::vector<std::int64_t> counts;
        for (const auto& [id, c] : per_miner) {
            counts.push_back(c);
        }
        counts.resize(counts.size() + zero_miners, 0);
        if (counts.size() < 2) {
            throw Error(ErrorCode::InvalidModel, "need at least 2 miners, found " + std::to_string(counts.size()));
        }
        return {BlockCounts(std::move(counts)), input_digest(blocks_path, text)};
    }
};

inline void add_count_options(CLI::App& cmd, CountSource& src, bool required)
{
    auto* blocks = cmd.add_option("--blocks", src.blocks_path, "blocks CSV (height,timestamp,bits,miner_id)");
    if (required) {
        blocks->required();
    }
    cmd.add_option("--period", src.period, "use only this full period (0-based) instead of every block");
    cmd.add_option("--period-length", src.period_length, "blocks per period")->check(CLI::PositiveNumber);
    cmd.add_option("--zero-miners", src.zero_miners, "append this many miners with zero blocks");
}

/// Model from --model (file path or inline JSON) or fitted from block counts.
struct ModelSource {
    std::string model;
    CountSource counts;
    double lambda = 0.0;
    std::string family;

    HashRateModel resolve() const
    {
        if (!model.empty()) {
            const std::string text = model.front() == '{' ? model : read_text_file(model);
            Json j;
            try {
                j = Json::parse(text);
            } catch (const Json::parse_error& e) {
                throw Error(ErrorCode::Parse, "model JSON: " + std::string(e.what()));
            }
            if (j.contains("model") && j.at("model").is_object()) {
                j = j.at("model"); // accept the output of `fit` directly
            }
            return model_from_json(j);
        }
        if (counts.blocks_path.empty() || family.empty() || !(lambda > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "give --model, or --blocks with --lambda and --family");
        }
        const auto loaded = counts.load();
        return build_model(normalize_model_names({family}).front(), loaded.counts, lambda);
    }
};

inline void add_model_options(CLI::App& cmd, ModelSource& src)
{
    cmd.add_option("--model", src.model, "model JSON file, or inline JSON starting with '{'");
    add_count_options(cmd, src.counts, false);
    cmd.add_option("--lambda", src.lambda, "total hash rate in blocks/s (with --blocks)");
    cmd.add_option("--family", src.family, "exp, lognormal, tpl, semi-iid or semi-inid (with --blocks)");
}

inline std::string dump(const Json& j)
{
    return j.dump(2) + "\n";
}

inline unsigned default_threads()
{
    if (const char* env = std::getenv("FORKCAST_THREADS")) {
        unsigned v = 0;
        const std::string_view s(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc{} && ptr == s.data() + s.size()) {
            return v;
        }
        throw Error(ErrorCode::InvalidArgument, "FORKCAST_THREADS must be a non-negative integer");
    }
    return 0;
}

// Commands. Each returns the text to print on stdout.

inline std::string cmd_fit(const CountSource& src, double lambda, const std::string& family)
{
    const auto loaded = src.load();
    const auto& counts = loaded.counts;
    const auto name = normalize_model_names({family});
    forkcast::detail::require(name.size() == 1, ErrorCode::InvalidArgument, "fit takes a single family");
    const auto mp = fit_moments(counts, lambda);
    std::vector<std::string> notes;
    const auto model = build_model(name.front(), counts, lambda, &notes);
    if (mp.degenerate) {
        notes.push_back("all miners have equal counts (s = 0)");
    }
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["inputs"] = {{"blocks", loaded.input}};
    j["family"] = name.front();
    j["n_miners"] = counts.size();
    j["zero_miners"] = src.zero_miners;
    j["total_blocks"] = counts.total();
    j["lambda_total"] = lambda;
    j["m"] = mp.m;
    j["s"] = mp.s;
    j["hhi"] = hhi(counts);
    j["model"] = model_to_json(model);
    j["notes"] = notes;
    return dump(j);
}

inline ForkRateResult forkrate_by_method(const HashRateModel& model, double delta0, const std::string& method)
{
    if (method == "auto") {
        return fork_rate(model, delta0);
    }
    if (method == "conditional" || method == "taylor") {
        std::optional<MinerSet> miners;
        double concentration = 0.0;
        if (const auto* f = std::get_if<FixedRates>(&model)) {
            miners = f->miners;
        } else if (const auto* s = std::get_if<SemiEmpiricalIID>(&model)) {
            miners = estimate_hash_rates(s->counts, s->counts.total() / s->gamma).miners();
        } else if (const auto* s = std::get_if<SemiEmpiricalINID>(&model)) {
            miners = estimate_hash_rates(s->counts, s->counts.total() / s->gamma).miners();
        } else {
            throw Error(ErrorCode::InvalidArgument,
                        "--method " + method + " needs known hash rates (fixed or semi-empirical model)");
        }
        if (method == "conditional") {
            return conditional_fork_rate(*miners, delta0);
        }
        concentration = hhi(*miners);
        return taylor_fork_rate(miners->total(), concentration, delta0);
    }
    if (method == "quadrature") {
        if (const auto* m = std::get_if<IIDNull>(&model)) {
            return fork_rate_iid_quadrature(m->family, m->n, delta0);
        }
        if (const auto* m = std::get_if<FixedRates>(&model)) {
            // integrate the gap density up to delta0
            forkcast::detail::check_delta(delta0);
            auto q = integrate([&](double x) { return pdf_delta_conditional(m->miners, x); }, 0.0, delta0,
                               QuadratureConfig{});
            ForkRateResult r;
            r.value = std::clamp(q.value, 0.0, 1.0);
            r.error_estimate = q.error;
            r.method = ForkRateMethod::Quadrature;
            r.delta0 = delta0;
            r.tau = delta0 * m->miners.total();
            return r;
        }
        return fork_rate(model, delta0);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + method + "'");
}

inline std::string cmd_forkrate(const ModelSource& src, const std::vector<double>& delays, const std::string& method)
{
    const auto model = src.resolve();
    std::ostringstream os;
    os << "delta0,C,error_estimate,method\n";
    for (double d : delays) {
        const auto r = forkrate_by_method(model, d, method);
        os << format_number(d) << ',' << format_number(r.value) << ',' << format_number(r.error_estimate) << ','
           << to_string(r.method) << '\n';
    }
    return os.str();
}

inline std::string cmd_simulate(const ModelSource& src, const std::vector<double>& delays, std::uint64_t rounds,
                                std::uint64_t seed, unsigned threads, bool fixed_draw)
{
    SimConfig cfg{src.resolve(), delays.front(), rounds, seed, threads, !fixed_draw};
    const auto outcomes = simulate_fork_rates(cfg, delays);
    Json results = Json::array();
    for (const auto& o : outcomes) {
        Json r;
        r["delta0"] = o.delta0;
        r["rounds"] = o.rounds;
        r["n_fork"] = o.n_fork;
        r["fork_rate"] = o.fork_rate;
        r["stderr"] = o.std_error;
        r["mean_min_time"] = o.mean_min_time;
        Json analytic = nullptr;
        Json z = nullptr;
        // The analytic value describes resampled rates; skip it for a single shared draw.
        if (cfg.resample || std::holds_alternative<FixedRates>(cfg.model)) {
            try {
                const auto a = fork_rate(cfg.model, o.delta0);
                analytic = a.value;
                if (o.std_error > 0.0) {
                    z = (o.fork_rate - a.value) / o.std_error;
                }
            } catch (const Error&) {
            }
        }
        r["analytic"] = analytic;
        r["z_score"] = z;
        results.push_back(r);
    }
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["model"] = model_to_json(cfg.model);
    j["seed"] = seed;
    j["rounds"] = rounds;
    j["resample"] = cfg.resample;
    j["results"] = results;
    return dump(j);
}

inline std::string cmd_implied(const std::string& quantity, double forkrate, double lambda, double value)
{
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["quantity"] = quantity == "delta" ? "delta0" : "hhi";
    ImpliedResult r;
    if (quantity == "delta") {
        r = implied_delta0(forkrate, lambda, value);
        j["inputs"] = {{"forkrate", forkrate}, {"lambda", lambda}, {"hhi", value}};
    } else {
        r = implied_hhi(forkrate, lambda, value);
        j["inputs"] = {{"forkrate", forkrate}, {"lambda", lambda}, {"delta0", value}};
    }
    j["value"] = r.value;
    j["valid"] = r.valid;
    return dump(j);
}

inline std::string cmd_band(const CountSource& src, double lambda, const std::string& family, const BandConfig& cfg)
{
    const auto loaded = src.load();
    const auto band = confidence_band(loaded.counts, lambda, parse_family_kind(family), cfg);
    std::ostringstream os;
    os << "delta0,lower,point,upper\n";
    for (std::size_t g = 0; g < band.delta0_grid.size(); ++g) {
        os << format_number(band.delta0_grid[g]) << ',' << format_number(band.lower[g]) << ','
           << format_number(band.point[g]) << ',' << format_number(band.upper[g]) << '\n';
    }
    return os.str();
}

struct PipelinePaths {
    std::string blocks;
    std::string stale;
    std::string propagation;
    std::string hashrate;
    std::string out;
    std::string csv;
};

inline void write_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text) || !f.flush()) {
        throw Error(ErrorCode::Io, "cannot write " + path);
    }
}

/// Returns the summary line and whether at least one period succeeded.
inline std::pair<std::string, bool> cmd_pipeline(const PipelinePaths& paths, const PipelineOptions& opts)
{
    const auto blocks_text = read_text_file(paths.blocks);
    const auto stale_text = read_text_file(paths.stale);
    const auto prop_text = read_text_file(paths.propagation);
    const auto hash_text = read_text_file(paths.hashrate);
    auto parse = [](const std::string& text, const std::string& name, auto reader) {
        std::istringstream in(text);
        return reader(in, name);
    };
    const auto blocks = parse(blocks_text, paths.blocks, [](auto& in, auto& n) { return read_blocks(in, n); });
    const auto stales = parse(stale_text, paths.stale, [](auto& in, auto& n) { return read_stales(in, n); });
    const auto prop = parse(prop_text, paths.propagation, [](auto& in, auto& n) { return read_propagation(in, n); });
    const auto hash = parse(hash_text, paths.hashrate, [](auto& in, auto& n) { return read_hashrate(in, n); });

    const auto result = run_pipeline(blocks, stales, prop, hash, opts);
    Json inputs;
    inputs["blocks"] = input_digest(paths.blocks, blocks_text);
    inputs["stale"] = input_digest(paths.stale, stale_text);
    inputs["propagation"] = input_digest(paths.propagation, prop_text);
    inputs["hashrate"] = input_digest(paths.hashrate, hash_text);
    const auto json = dump(report_to_json(result, opts, inputs));
    const auto csv = report_to_csv(result);

    std::string csv_path = paths.csv;
    if (csv_path.empty()) {
        csv_path = paths.out;
        const auto dot = csv_path.rfind('.');
        const auto slash = csv_path.find_last_of('/');
        if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
            csv_path.erase(dot);
        }
        csv_path += ".csv";
    }
    write_file(paths.out, json);
    write_file(csv_path, csv);
    std::ostringstream os;
    os << "periods: " << result.periods.size() << ", ok: " << result.succeeded()
       << ", remainder blocks: " << result.remainder_blocks << "\nreport: " << paths.out << "\ncsv: " << csv_path
       << '\n';
    return {os.str(), result.succeeded() > 0};
}

} // namespace detail

/// Runs the command line and returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"forkcast: soft-fork probabilities of proof-of-work chains", "forkcast"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    unsigned threads = 0;

    // fit
    auto* fit = app.add_subcommand("fit", "fit a hash-rate model to block counts and print it as JSON");
    detail::CountSource fit_src;
    double fit_lambda = 0.0;
    std::string fit_family;
    detail::add_count_options(*fit, fit_src, true);
    fit->add_option("--lambda", fit_lambda, "total hash rate in blocks/s")->required()->check(CLI::PositiveNumber);
    fit->add_option("--family", fit_family, "exp, lognormal, tpl, semi-iid or semi-inid")->required();

    // forkrate
    auto* fr = app.add_subcommand("forkrate", "analytic fork rates as CSV (delta0,C,error_estimate,method)");
    detail::ModelSource fr_src;
    std::vector<double> fr_delays;
    std::string fr_method = "auto";
    detail::add_model_options(*fr, fr_src);
    fr->add_option("--delta0", fr_delays, "propagation delays in seconds, comma separated")
        ->required()
        ->delimiter(',');
    fr->add_option("--method", fr_method, "auto, quadrature, taylor or conditional")
        ->check(CLI::IsMember({"auto", "quadrature", "taylor", "conditional"}));

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo fork rate as JSON");
    detail::ModelSource sim_src;
    std::vector<double> sim_delays;
    std::uint64_t rounds = 1'000'000;
    std::uint64_t seed = 1;
    bool fixed_draw = false;
    detail::add_model_options(*sim, sim_src);
    sim->add_option("--delta0", sim_delays, "propagation delays in seconds, comma separated")
        ->required()
        ->delimiter(',');
    sim->add_option("--rounds", rounds, "mining rounds")->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed, "random seed");
    sim->add_option("--threads", threads, "worker threads (0 = all cores; default $FORKCAST_THREADS)");
    sim->add_flag("--fixed-draw", fixed_draw, "draw hash rates once instead of every round");

    // implied
    auto* imp = app.add_subcommand("implied", "invert the first-order fork-rate formula");
    imp->require_subcommand(1);
    double imp_forkrate = 0.0;
    double imp_lambda = 0.0;
    double imp_hhi = 0.0;
    double imp_delta = 0.0;
    auto* imp_delta_cmd = imp->add_subcommand("delta", "propagation delay implied by a fork rate and HHI");
    imp_delta_cmd->add_option("--forkrate", imp_forkrate, "observed fork rate")->required();
    imp_delta_cmd->add_option("--lambda", imp_lambda, "total hash rate in blocks/s")->required();
    imp_delta_cmd->add_option("--hhi", imp_hhi, "Herfindahl-Hirschman index")->required();
    auto* imp_hhi_cmd = imp->add_subcommand("hhi", "HHI implied by a fork rate and propagation delay");
    imp_hhi_cmd->add_option("--forkrate", imp_forkrate, "observed fork rate")->required();
    imp_hhi_cmd->add_option("--lambda", imp_lambda, "total hash rate in blocks/s")->required();
    imp_hhi_cmd->add_option("--delta0", imp_delta, "propagation delay in seconds")->required();

    // band
    auto* band = app.add_subcommand("band", "confidence band of the fitted fork-rate curve as CSV");
    detail::CountSource band_src;
    double band_lambda = 0.0;
    std::string band_family;
    BandConfig band_cfg;
    std::vector<double> band_pct = {5.0, 95.0};
    detail::add_count_options(*band, band_src, true);
    band->add_option("--lambda", band_lambda, "total hash rate in blocks/s")->required()->check(CLI::PositiveNumber);
    band->add_option("--family", band_family, "exp, lognormal or tpl")
        ->required()
        ->check(CLI::IsMember({"exp", "lognormal", "tpl"}));
    band->add_option("--delta0-grid", band_cfg.delta0_grid, "propagation delays in seconds, comma separated")
        ->required()
        ->delimiter(',');
    band->add_option("--samples", band_cfg.n_samples, "number of (m, s^2) draws, at least 100");
    band->add_option("--percentiles", band_pct, "lower,upper percentile")->delimiter(',')->expected(2);
    band->add_option("--seed", band_cfg.seed, "random seed");
    band->add_option("--threads", threads, "worker threads (0 = all cores; default $FORKCAST_THREADS)");

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "per-period report (JSON plus CSV twin) from raw chain data");
    detail::PipelinePaths paths;
    PipelineOptions popts;
    std::vector<std::string> models;
    pipe->add_option("--blocks", paths.blocks, "blocks CSV (height,timestamp,bits,miner_id)")->required();
    pipe->add_option("--stale", paths.stale, "stale heights CSV (height)")->required();
    pipe->add_option("--propagation", paths.propagation, "propagation CSV (timestamp,p50,p90,p99)")->required();
    pipe->add_option("--hashrate", paths.hashrate, "daily hash rate CSV (date,hashes_per_second)")->required();
    pipe->add_option("--out", paths.out, "report JSON path")->required();
    pipe->add_option("--csv", paths.csv, "CSV twin path (default: --out with .csv extension)");
    pipe->add_option("--families", models, "models: exp,lognormal,tpl,semi-iid,semi-inid (semi = both)")
        ->delimiter(',');
    pipe->add_option("--period-length", popts.period_length, "blocks per period")->check(CLI::PositiveNumber);
    pipe->add_option("--rescale", popts.rescale, "stale-count rescaling factor")->check(CLI::PositiveNumber);
    pipe->add_option("--threads", threads, "worker threads (0 = all cores; default $FORKCAST_THREADS)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (sim->count("--threads") + band->count("--threads") + pipe->count("--threads") == 0) {
            threads = detail::default_threads();
        }
        std::string text;
        int status = kExitOk;
        if (fit->parsed()) {
            text = detail::cmd_fit(fit_src, fit_lambda, fit_family);
        } else if (fr->parsed()) {
            text = detail::cmd_forkrate(fr_src, fr_delays, fr_method);
        } else if (sim->parsed()) {
            text = detail::cmd_simulate(sim_src, sim_delays, rounds, seed, threads, fixed_draw);
        } else if (imp_delta_cmd->parsed()) {
            text = detail::cmd_implied("delta", imp_forkrate, imp_lambda, imp_hhi);
        } else if (imp_hhi_cmd->parsed()) {
            text = detail::cmd_implied("hhi", imp_forkrate, imp_lambda, imp_delta);
        } else if (band->parsed()) {
            forkcast::detail::require(band_pct.size() == 2, ErrorCode::InvalidArgument, "--percentiles takes two values");
            band_cfg.percentiles = {band_pct[0], band_pct[1]};
            band_cfg.threads = threads;
            text = detail::cmd_band(band_src, band_lambda, band_family, band_cfg);
        } else if (pipe->parsed()) {
            if (!models.empty()) {
                popts.models = normalize_model_names(models);
            }
            popts.threads = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
            auto [summary, ok] = detail::cmd_pipeline(paths, popts);
            text = std::move(summary);
            if (!ok) {
                err << "forkcast: no period produced a complete report\n";
                status = kExitNumeric;
            }
        }
        out << text;
        out.flush();
        return status;
    } catch (const Error& e) {
        err << "forkcast: " << e.what() << '\n';
        return e.is_input_error() ? kExitInput : kExitNumeric;
    } catch (const std::exception& e) {
        err << "forkcast: internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

} // namespace forkcast::cli
