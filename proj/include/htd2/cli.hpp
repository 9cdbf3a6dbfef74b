#pragma once

#include "htd2/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace htd2 {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Stable process exit codes.
enum ExitCode : int { exit_ok = 0, exit_runtime = 1, exit_usage = 2 };

/// "0..4", "1,3,7" or a mix such as "0..2,9". Ranges are inclusive.
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Comma-separated dispatcher names.
std::vector<Dispatcher> parse_variant_list(std::string_view text);

/// Comma-separated numeric values.
std::vector<double> parse_value_list(std::string_view text);

/// Work-pool size: HTD2_THREADS when set to a positive integer, else the
/// hardware concurrency, never more than `jobs`.
unsigned pool_size(std::size_t jobs);

/// Entry point behind the `htd2` executable. Errors go to `err`, progress
/// and single-file dumps without --out go to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace htd2
