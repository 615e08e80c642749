#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace forkcast {

enum class ErrorCode {
    InvalidArgument,
    NonConvergent,
    NonFinite,
    InvalidFamily,
    InvalidModel,
    InvalidMoments,
    ShareSumViolation,
    DegenerateHHI,
    AllZero,
    InvalidBits,
    EmptyPeriod,
    NonContiguous,
    Parse,
    Io,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidFamily: return "InvalidFamily";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::InvalidMoments: return "InvalidMoments";
    case ErrorCode::ShareSumViolation: return "ShareSumViolation";
    case ErrorCode::DegenerateHHI: return "DegenerateHHI";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::InvalidBits: return "InvalidBits";
    case ErrorCode::EmptyPeriod: return "EmptyPeriod";
    case ErrorCode::NonContiguous: return "NonContiguous";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

    /// True for errors caused by bad input data rather than numerics.
    bool is_input_error() const noexcept
    {
        return code_ == ErrorCode::Parse || code_ == ErrorCode::Io || code_ == ErrorCode::InvalidArgument ||
               code_ == ErrorCode::NonContiguous || code_ == ErrorCode::InvalidBits;
    }

private:
    ErrorCode code_;
};

/// Malformed input line. Carries the file name and 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::string file, std::size_t line, const std::string& message)
        : Error(ErrorCode::Parse, file + ":" + std::to_string(line) + ": " + message),
          file_(std::move(file)), line_(line)
    {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

class NonContiguousError : public Error {
public:
    explicit NonContiguousError(std::int64_t height)
        : Error(ErrorCode::NonContiguous, "block heights not contiguous, first gap at height " +
                                              std::to_string(height)),
          height_(height)
    {}

    std::int64_t height() const noexcept { return height_; }

private:
    std::int64_t height_;
};

namespace detail {

inline void require(bool condition, ErrorCode code, const std::string& message)
{
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace detail
} // namespace forkcast
