#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bsvie/error.hpp"

namespace bsvie::cli {


/// 1 config / bad parameter, 2 assumption, 3 numeric, 4 verifier.
int exit_code(ErrorKind kind);

struct RunOptions {
  std::filesystem::path out_dir = "bsvie_out";
  /// Wins over both the `threads` key and BSVIE_THREADS.
  std::optional<std::size_t> threads;
};

/// Runs resolvent, solve, example1, example2 or control on a fully merged config. Library errors propagate; a
/// failed check returns 4.
int run_command(const std::string& command, const nlohmann::json& config, const RunOptions& options,
                std::ostream& log);

}  // namespace bsvie::cli
