#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "adaor/guidance.hpp"

namespace adaor::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// "START:END:COUNT" (uniform, inclusive) or a comma-separated list.
std::vector<double> parse_alphas(const std::string& text);

/// Comma-separated "variant[:scheduler]" entries, e.g. "cfg,adaor,adaor:linear".
std::vector<std::pair<Variant, Scheduler>> parse_variant_list(const std::string& text);

/// Runs the `adaor` command line. Diagnostics and the effective config go to
/// `err`, summaries to `out`. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adaor::cli
