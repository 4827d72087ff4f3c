#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hai {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitBackend = 2;

// args[0] is the program name. Errors are reported as one line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hai
