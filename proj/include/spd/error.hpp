#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spd {

/// Machine-readable failure categories. The CLI prints these as
/// `ERROR <code>: <detail>` and maps each to a distinct exit status.
enum class ErrorCode {
    InvalidArgument,
    EmptyQuotes,
    InconsistentParity,
    Infeasible,
    NonConvergence,
    Parse,
    Io,
    StudyFailed,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exit status used by the CLI for a given error category (always nonzero).
int exit_status(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised by the QP solver when the iteration cap is hit; carries the
/// best KKT residual reached.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& detail, double best_residual)
        : Error(ErrorCode::NonConvergence, detail), best_residual_(best_residual) {}

    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

}  // namespace spd
