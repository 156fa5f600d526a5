#pragma once

#include <stdexcept>
#include <string>

namespace stiv {

enum class ErrorCode {
    DegenerateColumn,
    ConstantMissing,
    DimensionMismatch,
    SpecInvalid,
    SolverFailure,
    BlockTooLarge,
    InvalidParams,
    InfeasibleQuantile,
    MismatchedReport,
    InfiniteC1,
    DegenerateInstrument,
    InfinitePilotBound,
    ParseError,
    IoError,
};

inline const char* error_code_name(ErrorCode c)
{
    switch (c) {
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::ConstantMissing: return "ConstantMissing";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::BlockTooLarge: return "BlockTooLarge";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InfeasibleQuantile: return "InfeasibleQuantile";
    case ErrorCode::MismatchedReport: return "MismatchedReport";
    case ErrorCode::InfiniteC1: return "InfiniteC1";
    case ErrorCode::DegenerateInstrument: return "DegenerateInstrument";
    case ErrorCode::InfinitePilotBound: return "InfinitePilotBound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace stiv
