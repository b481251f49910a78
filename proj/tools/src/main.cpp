#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "edgelab/errors.hpp"
#include "edgelab/parallel.hpp"

int main(int argc, char** argv) {
  using namespace edgelab::cli;
  CLI::App app{"edge-lab: edge-of-stability experiment runner"};
  app.require_subcommand(1);
  CommandArgs args;
  std::string out_dir;
  std::uint64_t seed = 0;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "JSON experiment config")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "seed (overrides the config seed)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--out") > 0) args.out_dir = out_dir;
  if (chosen->count("--seed") > 0) args.seed = seed;

  try {
    if (auto cap = parse_thread_cap(std::getenv("EDGE_LAB_THREADS"))) edgelab::set_max_threads(*cap);
    return run_command(chosen->get_name(), args, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const edgelab::Error& e) {
    // Library errors raised by a well-formed config (bad shapes, unsupported
    // degeneracies) are reported as config errors too.
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAssertion;
  }
}
