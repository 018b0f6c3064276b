// Command-line front end: enumerate, train, sample, baseline, report.
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gfnadapt/experiment.hpp"

namespace {

int run(const std::string& command, const gfnadapt::ExperimentConfig& config) {
  using namespace gfnadapt;
  CommandResult result;
  if (command == "enumerate") result = cmd_enumerate(config);
  else if (command == "train") result = cmd_train(config);
  else if (command == "sample") result = cmd_sample(config);
  else if (command == "baseline") result = cmd_baseline(config);
  else result = cmd_report(config);

  std::cout << command << " [config " << config.hash() << "]\n";
  for (const auto& m : result.messages) std::cout << "  " << m << '\n';
  for (const auto& p : result.outputs) std::cout << "  wrote " << p.string() << '\n';
  std::cerr << "simulator evaluations: " << result.simulator_calls << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-proportional retrieval of crop model adaptations"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "INI experiment configuration");
  app.add_option("--set", overrides, "Override a key, e.g. --set reward.beta=8")->take_all();

  bool print_defaults = false;
  std::string method;
  auto* show = app.add_subcommand("config", "Print the resolved configuration and its hash");
  show->add_flag("--defaults", print_defaults, "Print every key with its built-in default");
  for (const char* name : {"enumerate", "train", "sample", "report"})
    app.add_subcommand(name, std::string("Run the ") + name + " stage");
  auto* baseline = app.add_subcommand("baseline", "Run a baseline search (random or tpe)");
  baseline->add_option("--method", method, "Shortcut for --set method.name=...")
      ->check(CLI::IsMember({"random", "tpe"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  const auto* sub = app.get_subcommands().front();
  try {
    if (!method.empty()) overrides.push_back("method.name=" + method);
    if (sub == show && print_defaults) {
      std::cout << gfnadapt::default_config_ini();
      return 0;
    }
    const auto config = gfnadapt::load_config(config_path, overrides);
    if (sub == show) {
      std::cout << "# config_hash=" << config.hash() << '\n' << config.canonical();
      return 0;
    }
    return run(sub->get_name(), config);
  } catch (const gfnadapt::ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
}
