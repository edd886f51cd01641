#pragma once

// Command-line front end. `run_cli` is the whole program minus process
// plumbing so tests can drive it in-process.
//
// Exit codes: 0 success, 2 I/O, 3 configuration or usage, 4 numeric failure.

#include <iosfwd>
#include <string>
#include <vector>

#include "byteflow/error.hpp"

namespace byteflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind) noexcept;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace byteflow::cli
