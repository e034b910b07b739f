#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace corrugate {

// Exit codes used by the CLI. Library code throws; the tool maps to codes.
enum class ExitCode : int {
    ok = 0,
    ledger_infeasible = 2,
    stage_failure = 3,
    io_error = 4,
};

struct Error : std::runtime_error {
    ExitCode code;
    explicit Error(ExitCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ExitCode::io_error, msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ExitCode::io_error, msg) {}
};

struct StageError : Error {
    explicit StageError(const std::string& msg) : Error(ExitCode::stage_failure, msg) {}
};

struct InfeasibleError : Error {
    explicit InfeasibleError(const std::string& msg) : Error(ExitCode::ledger_infeasible, msg) {}
};

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

inline bool finite(double x) { return std::isfinite(x); }

} // namespace corrugate
