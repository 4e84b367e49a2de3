#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acceptance.hpp"
#include "commands.hpp"
#include "config.hpp"

namespace {

int report(bsvie::ErrorKind kind, const std::string& message) {
  std::cerr << "error [" << bsvie::to_string(kind) << "]: " << message << '\n';
  return bsvie::cli::exit_code(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear infinite-horizon BSVIE solver"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "bsvie_out";
  for (const char* name : {"resolvent", "solve", "example1", "example2", "control"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON config file")->required();
    sub->add_option("--set", overrides, "Override a config value: dotted.key=json");
    sub->add_option("-o,--out", out_dir, "Output directory");
  }
  std::vector<int> only;
  CLI::App* selftest = app.add_subcommand("selftest", "Run the acceptance suite");
  selftest->add_option("--only", only, "Criteria to run (default: all)")
      ->check(CLI::Range(1, bsvie::acceptance::kCriteria));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (selftest->parsed()) return bsvie::acceptance::run_suite(only, std::cout) ? 0 : 4;
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    std::ifstream is(config_path);
    if (!is) return report(bsvie::ErrorKind::config_error, "cannot open config '" + config_path + "'");
    nlohmann::json config = nlohmann::json::parse(is, nullptr, false);
    if (config.is_discarded()) return report(bsvie::ErrorKind::config_error, "malformed JSON in '" + config_path + "'");
    for (const auto& o : overrides) bsvie::cli::apply_override(config, o);
    bsvie::cli::RunOptions options;
    options.out_dir = out_dir;
    const int code = bsvie::cli::run_command(command, config, options, std::cout);
    if (code == 4) std::cerr << "error [verifier_failed]: a check exceeded its tolerance, see the report\n";
    return code;
  } catch (const bsvie::Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report(bsvie::ErrorKind::numeric_error, e.what());
  }
}
