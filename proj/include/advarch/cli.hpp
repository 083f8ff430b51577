#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace advarch {

/// Exit codes: 0 success, 1 domain error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name. Reports go to files named by
/// flags or, without one, to `out`; diagnostics and usage text go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "4/255" or "0.0157". Throws std::invalid_argument.
double parse_fraction(const std::string& text);
/// "25557032", "25.56M", "1.2k". Throws std::invalid_argument.
std::int64_t parse_count(const std::string& text);

}  // namespace advarch
