#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace edgelab::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitAssertion = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
};

struct CommandArgs {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand. Progress goes to `log`; files go to the output
/// directory. Config errors propagate as ConfigError.
int run_command(const std::string& name, const CommandArgs& args, std::ostream& log);

/// Parses EDGE_LAB_THREADS. Empty means no cap; anything other than a
/// positive integer is a config error.
std::optional<unsigned> parse_thread_cap(const char* value);

}  // namespace edgelab::cli
