#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "ncpoisson/errors.hpp"
#include "ncpoisson/experiment.hpp"

namespace {

int report_config_error(const ncp::ConfigError& e) {
  std::cerr << "config invalid (" << e.faults().size() << " fault" << (e.faults().size() == 1 ? "" : "s") << "):\n";
  for (const auto& f : e.faults()) std::cerr << "  - " << f << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson limits for nonconventional sums: experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "run an experiment and write its tables");
  run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory")->required();

  auto* validate = app.add_subcommand("validate", "check a config and list every fault");
  validate->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

  app.add_subcommand("list-tables", "print the names of the result tables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-tables")) {
      for (const auto& name : ncp::table_names()) std::cout << name << '\n';
      return 0;
    }
    const ncp::ExperimentConfig config = ncp::load_config(config_path);
    if (app.got_subcommand("validate")) {
      std::cout << "ok " << ncp::config_hash(config) << '\n';
      return 0;
    }
    const auto tables = ncp::run_experiment(config);
    for (const auto& path : ncp::write_outputs(config, tables, out_dir)) std::cout << path.string() << '\n';
    return 0;
  } catch (const ncp::ConfigError& e) {
    return report_config_error(e);
  } catch (const ncp::ResourceError& e) {
    std::cerr << "resource limit in " << e.module() << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
