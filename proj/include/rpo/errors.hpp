#pragma once

#include <stdexcept>
#include <string>

namespace rpo {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (carries a 1-based line number when known).
struct ParseError : Error {
    ParseError(const std::string& what, long line = -1)
        : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what), line_number(line) {}
    long line_number;
};

/// Price and score files have no usable overlap.
struct AlignmentError : Error {
    using Error::Error;
};

/// Not enough history for the requested window or day.
struct InsufficientDataError : Error {
    using Error::Error;
};

/// Requested day precedes the indicator/lookback warm-up horizon.
struct WarmupError : Error {
    using Error::Error;
};

/// Constraint set admits no solution.
struct InfeasibleError : Error {
    using Error::Error;
};

/// No asset offers an excess return; the tangency problem is undefined.
struct DegenerateMarketError : Error {
    using Error::Error;
};

/// Every frontier target was infeasible.
struct EmptyFrontierError : Error {
    using Error::Error;
};

/// Responsibility scores sum to zero; the performance ratio is undefined.
struct UndefinedScoreError : Error {
    using Error::Error;
};

/// Invalid run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Solver or training failure that is not an infeasibility.
struct SolverError : Error {
    using Error::Error;
};

/// Invalid value passed to an environment or learner operation.
struct InvalidActionError : Error {
    using Error::Error;
};

}  // namespace rpo
