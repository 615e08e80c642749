#pragma once

// CSV readers for block, stale, propagation and hash-rate data, difficulty
// decoding, period segmentation and per-period aggregation.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "forkcast/error.hpp"
#include "forkcast/model.hpp"
#include "forkcast/quadrature.hpp"

namespace forkcast {

struct BlockRow {
    std::int64_t height = 0;
    std::int64_t timestamp = 0;
    std::uint32_t bits = 0;
    std::string miner_id;
};

struct PropagationRow {
    std::int64_t timestamp = 0;
    double p50 = 0.0;
    double p90 = 0.0;
    double p99 = 0.0;
};

struct StaleRow {
    std::int64_t height = 0;
};

struct HashrateRow {
    std::int64_t day = 0; // days since 1970-01-01
    double hashes_per_second = 0.0;
};

inline constexpr double kDefaultRescale = 1.476;
inline constexpr std::size_t kDefaultPeriodLength = 20000;
inline constexpr std::int64_t kSecondsPerDay = 86400;

// Difficulty.

/// Decoded target of a compact encoding: mantissa * 256^(exponent - 3).
inline boost::multiprecision::cpp_int bits_to_target(std::uint32_t bits)
{
    const std::uint32_t exponent = bits >> 24;
    const std::uint32_t mantissa = bits & 0x00ffffffu;
    if ((mantissa & 0x00800000u) || exponent < 3 || exponent > 32 || mantissa == 0) {
        std::ostringstream os;
        os << "invalid compact target 0x" << std::hex << bits;
        throw Error(ErrorCode::InvalidBits, os.str());
    }
    boost::multiprecision::cpp_int target = mantissa;
    target <<= 8 * (exponent - 3);
    return target;
}

/// Expected hashes per block, 2^256 / (target + 1).
inline double bits_to_expected_hashes(std::uint32_t bits)
{
    using boost::multiprecision::cpp_bin_float_100;
    using boost::multiprecision::cpp_int;
    const cpp_int denom = bits_to_target(bits) + 1;
    const cpp_int numer = cpp_int(1) << 256;
    const cpp_bin_float_100 ratio = cpp_bin_float_100(numer) / cpp_bin_float_100(denom);
    return ratio.convert_to<double>();
}

// CSV.

/// Header-addressed CSV rows. Lines are kept with their 1-based line number.
class CsvTable {
public:
    struct Row {
        std::size_t line = 0;
        std::vector<std::string> fields;
    };

    CsvTable(std::istream& in, std::string name, std::span<const std::string_view> required)
        : name_(std::move(name))
    {
        std::string line;
        std::size_t line_no = 0;
        bool have_header = false;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
                line.erase(0, 3);
            }
            if (line.empty()) {
                continue;
            }
            auto fields = split(line);
            if (!have_header) {
                for (std::size_t i = 0; i < fields.size(); ++i) {
                    columns_[std::string(trim(fields[i]))] = i;
                }
                for (auto col : required) {
                    if (!columns_.count(std::string(col))) {
                        throw ParseError(name_, line_no, "missing column '" + std::string(col) + "'");
                    }
                }
                width_ = fields.size();
                have_header = true;
                continue;
            }
            if (fields.size() != width_) {
                throw ParseError(name_, line_no, "expected " + std::to_string(width_) + " fields, got " +
                                                     std::to_string(fields.size()));
            }
            rows_.push_back({line_no, std::move(fields)});
        }
        if (!have_header) {
            throw ParseError(name_, line_no == 0 ? 1 : line_no, "missing header line");
        }
    }

    const std::vector<Row>& rows() const noexcept { return rows_; }
    const std::string& name() const noexcept { return name_; }

    std::string_view field(const Row& row, std::string_view column) const
    {
        return trim(row.fields[columns_.at(std::string(column))]);
    }

    std::int64_t integer(const Row& row, std::string_view column) const
    {
        const auto text = field(row, column);
        std::int64_t value = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size()) {
            throw ParseError(name_, row.line, "column '" + std::string(column) + "': not an integer: '" +
                                                  std::string(text) + "'");
        }
        return value;
    }

    double real(const Row& row, std::string_view column) const
    {
        const auto text = field(row, column);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
            throw ParseError(name_, row.line, "column '" + std::string(column) + "': not a number: '" +
                                                  std::string(text) + "'");
        }
        return value;
    }

private:
    static std::vector<std::string> split(const std::string& line)
    {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            out.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            out.emplace_back();
        }
        return out;
    }

    static std::string_view trim(std::string_view s)
    {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
            s.remove_prefix(1);
        }
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
            s.remove_suffix(1);
        }
        return s;
    }

    std::string name_;
    std::unordered_map<std::string, std::size_t> columns_;
    std::size_t width_ = 0;
    std::vector<Row> rows_;
};

namespace detail {

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path);
    }
    return in;
}

inline std::uint32_t parse_bits(std::string_view text, const std::string& file, std::size_t line)
{
    if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X')) {
        throw ParseError(file, line, "bits must be 0x-prefixed hex: '" + std::string(text) + "'");
    }
    std::uint32_t bits = 0;
    const auto [ptr, ec] = std::from_chars(text.data() + 2, text.data() + text.size(), bits, 16);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError(file, line, "bits must be a 32-bit hex value: '" + std::string(text) + "'");
    }
    try {
        bits_to_target(bits);
    } catch (const Error& e) {
        throw ParseError(file, line, e.what());
    }
    return bits;
}

/// Days since the epoch for a YYYY-MM-DD date.
inline std::int64_t parse_date(std::string_view text, const std::string& file, std::size_t line)
{
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    auto bad = [&] { return ParseError(file, line, "date must be YYYY-MM-DD: '" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw bad();
    }
    auto num = [&](std::size_t pos, std::size_t len, auto& out) {
        const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        if (ec != std::errc{} || ptr != text.data() + pos + len) {
            throw bad();
        }
    };
    num(0, 4, y);
    num(5, 2, m);
    num(8, 2, d);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) {
        throw bad();
    }
    return std::chrono::sys_days(ymd).time_since_epoch().count();
}

} // namespace detail

inline std::vector<BlockRow> read_blocks(std::istream& in, const std::string& name = "blocks.csv")
{
    static constexpr std::string_view cols[] = {"height", "timestamp", "bits", "miner_id"};
    CsvTable table(in, name, cols);
    std::vector<BlockRow> out;
    out.reserve(table.rows().size());
    for (const auto& row : table.rows()) {
        BlockRow b;
        b.height = table.integer(row, "height");
        if (b.height < 0) {
            throw ParseError(name, row.line, "negative height");
        }
        b.timestamp = table.integer(row, "timestamp");
        b.bits = detail::parse_bits(table.field(row, "bits"), name, row.line);
        b.miner_id = std::string(table.field(row, "miner_id"));
        if (b.miner_id.empty()) {
            throw ParseError(name, row.line, "empty miner_id");
        }
        out.push_back(std::move(b));
    }
    return out;
}

inline std::vector<PropagationRow> read_propagation(std::istream& in, const std::string& name = "propagation.csv")
{
    static constexpr std::string_view cols[] = {"timestamp", "p50", "p90", "p99"};
    CsvTable table(in, name, cols);
    std::vector<PropagationRow> out;
    out.reserve(table.rows().size());
    for (const auto& row : table.rows()) {
        PropagationRow p;
        p.timestamp = table.integer(row, "timestamp");
        p.p50 = table.real(row, "p50");
        p.p90 = table.real(row, "p90");
        p.p99 = table.real(row, "p99");
        if (!(p.p50 > 0.0 && p.p50 <= p.p90 && p.p90 <= p.p99)) {
            throw ParseError(name, row.line, "percentiles must satisfy 0 < p50 <= p90 <= p99");
        }
        out.push_back(p);
    }
    return out;
}

inline std::vector<StaleRow> read_stales(std::istream& in, const std::string& name = "stale.csv")
{
    static constexpr std::string_view cols[] = {"height"};
    CsvTable table(in, name, cols);
    std::vector<StaleRow> out;
    out.reserve(table.rows().size());
    for (const auto& row : table.rows()) {
        const auto h = table.integer(row, "height");
        if (h < 0) {
            throw ParseError(name, row.line, "negative height");
        }
        out.push_back({h});
    }
    return out;
}

inline std::vector<HashrateRow> read_hashrate(std::istream& in, const std::string& name = "hashrate.csv")
{
    static constexpr std::string_view cols[] = {"date", "hashes_per_second"};
    CsvTable table(in, name, cols);
    std::vector<HashrateRow> out;
    out.reserve(table.rows().size());
    for (const auto& row : table.rows()) {
        HashrateRow h;
        h.day = detail::parse_date(table.field(row, "date"), name, row.line);
        h.hashes_per_second = table.real(row, "hashes_per_second");
        if (!(h.hashes_per_second > 0.0)) {
            throw ParseError(name, row.line, "hash rate must be positive");
        }
        out.push_back(h);
    }
    return out;
}

template <class Reader>
auto read_file(const std::string& path, Reader reader)
{
    auto in = detail::open_input(path);
    return reader(in, path);
}

// Periods.

struct PeriodSlice {
    std::size_t index = 0;
    std::size_t begin = 0; // row offsets into the block list
    std::size_t end = 0;
    std::int64_t first_height = 0;
    std::int64_t last_height = 0;

    std::size_t size() const noexcept { return end - begin; }
};

struct Segmentation {
    std::vector<PeriodSlice> periods;
    std::size_t remainder = 0; // trailing blocks outside any full period
};

/// Consecutive windows of exactly period_len blocks. Heights must be sorted
/// and contiguous; the first missing height is reported otherwise.
inline Segmentation segment_periods(std::span<const BlockRow> blocks,
                                    std::size_t period_len = kDefaultPeriodLength)
{
    detail::require(period_len >= 1, ErrorCode::InvalidArgument, "period length must be >= 1");
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        if (blocks[i].height != blocks[i - 1].height + 1) {
            throw NonContiguousError(blocks[i - 1].height + 1);
        }
    }
    Segmentation seg;
    const std::size_t full = blocks.size() / period_len;
    for (std::size_t k = 0; k < full; ++k) {
        PeriodSlice p;
        p.index = k;
        p.begin = k * period_len;
        p.end = p.begin + period_len;
        p.first_height = blocks[p.begin].height;
        p.last_height = blocks[p.end - 1].height;
        seg.periods.push_back(p);
    }
    seg.remainder = blocks.size() - full * period_len;
    return seg;
}

/// Distinct stale heights within [first_height, last_height] per block,
/// times the rescale factor, capped at one.
inline double fork_rate_empirical(std::span<const StaleRow> stales, std::int64_t first_height,
                                  std::int64_t last_height, double rescale = kDefaultRescale)
{
    detail::require(last_height >= first_height, ErrorCode::EmptyPeriod, "period has no blocks");
    detail::require(rescale > 0.0, ErrorCode::InvalidArgument, "rescale must be positive");
    std::set<std::int64_t> heights;
    for (const auto& s : stales) {
        if (s.height >= first_height && s.height <= last_height) {
            heights.insert(s.height);
        }
    }
    const double length = static_cast<double>(last_height - first_height + 1);
    return std::min(1.0, static_cast<double>(heights.size()) / length * rescale);
}

struct LambdaEstimate {
    double lambda = 0.0;
    double sanity = 0.0; // |Lambda * 600 - 1|
    std::size_t days = 0;
};

/// Difficulty of one block: expected hashes per block at its timestamp.
struct DifficultySample {
    std::int64_t timestamp = 0;
    double hashes = 0.0;
};

namespace detail {

inline std::int64_t utc_day(std::int64_t timestamp)
{
    return timestamp >= 0 ? timestamp / kSecondsPerDay : -((-timestamp + kSecondsPerDay - 1) / kSecondsPerDay);
}

} // namespace detail

/// Mean over days of (hash rate / mean difficulty of that day's blocks).
/// Days without a hash-rate row are skipped.
inline LambdaEstimate compute_lambda(std::span<const HashrateRow> hashrate,
                                     std::span<const DifficultySample> difficulty)
{
    std::map<std::int64_t, std::pair<CompensatedSum, std::size_t>> per_day;
    for (const auto& d : difficulty) {
        detail::require(d.hashes > 0.0 && std::isfinite(d.hashes), ErrorCode::InvalidArgument,
                        "difficulty must be positive");
        auto& [sum, n] = per_day[detail::utc_day(d.timestamp)];
        sum += d.hashes;
        ++n;
    }
    std::map<std::int64_t, double> rate;
    for (const auto& h : hashrate) {
        rate[h.day] = h.hashes_per_second;
    }
    CompensatedSum acc;
    std::size_t days = 0;
    for (const auto& [day, entry] : per_day) {
        const auto it = rate.find(day);
        if (it == rate.end()) {
            continue;
        }
        const double mean_difficulty = entry.first.value() / static_cast<double>(entry.second);
        acc += it->second / mean_difficulty;
        ++days;
    }
    if (days == 0) {
        throw Error(ErrorCode::EmptyPeriod, "no hash-rate data overlaps the period");
    }
    LambdaEstimate out;
    out.lambda = acc.value() / static_cast<double>(days);
    out.sanity = std::abs(out.lambda * 600.0 - 1.0);
    out.days = days;
    return out;
}

/// Same, with each block's difficulty decoded from its bits.
inline LambdaEstimate compute_lambda(std::span<const HashrateRow> hashrate, std::span<const BlockRow> blocks)
{
    std::unordered_map<std::uint32_t, double> decoded;
    std::vector<DifficultySample> difficulty;
    difficulty.reserve(blocks.size());
    for (const auto& b : blocks) {
        auto it = decoded.find(b.bits);
        if (it == decoded.end()) {
            it = decoded.emplace(b.bits, bits_to_expected_hashes(b.bits)).first;
        }
        difficulty.push_back({b.timestamp, it->second});
    }
    return compute_lambda(hashrate, std::span<const DifficultySample>(difficulty));
}

/// Aggregates one period of blocks with the other series.
inline PeriodRecord build_period_record(std::span<const BlockRow> period_blocks, std::span<const StaleRow> stales,
                                        std::span<const PropagationRow> propagation,
                                        std::span<const HashrateRow> hashrate, std::size_t period_index,
                                        double rescale = kDefaultRescale)
{
    detail::require(!period_blocks.empty(), ErrorCode::EmptyPeriod, "period has no blocks");
    PeriodRecord rec;
    rec.index = period_index;
    rec.first_height = period_blocks.front().height;
    rec.last_height = period_blocks.back().height;
    rec.start_time = period_blocks.front().timestamp;
    rec.end_time = period_blocks.front().timestamp;
    std::map<std::string, std::int64_t> per_miner;
    for (const auto& b : period_blocks) {
        rec.start_time = std::min(rec.start_time, b.timestamp);
        rec.end_time = std::max(rec.end_time, b.timestamp);
        ++per_miner[b.miner_id];
    }
    for (const auto& [id, count] : per_miner) {
        rec.miner_ids.push_back(id);
        rec.counts.push_back(count);
    }
    rec.n_miners = rec.counts.size();

    const auto lambda = compute_lambda(hashrate, period_blocks);
    rec.lambda_total = lambda.lambda;
    rec.lambda_sanity = lambda.sanity;
    rec.fork_rate_empirical = fork_rate_empirical(stales, rec.first_height, rec.last_height, rescale);

    CompensatedSum p50;
    CompensatedSum p90;
    CompensatedSum p99;
    for (const auto& p : propagation) {
        if (p.timestamp >= rec.start_time && p.timestamp <= rec.end_time) {
            p50 += p.p50;
            p90 += p.p90;
            p99 += p.p99;
            ++rec.propagation_samples;
        }
    }
    if (rec.propagation_samples > 0) {
        const double n = static_cast<double>(rec.propagation_samples);
        rec.prop_p50 = p50.value() / n;
        rec.prop_p90 = p90.value() / n;
        rec.prop_p99 = p99.value() / n;
    }
    return rec;
}

} // namespace forkcast
