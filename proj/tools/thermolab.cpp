// thermolab command-line runner.
//
//   thermolab run <config> [--paper-scale] [--out DIR]   run one experiment
//   thermolab list                                       print the catalog
//   thermolab check                                      run the diagnostics suite
//
// THERMOLAB_THREADS caps the number of worker threads.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "thermolab/thermolab.hpp"

namespace {

int cmd_run(const std::string& config_path, const thermolab::RunOptions& opts) {
  const auto cfg = thermolab::Config::parse_file(config_path);
  const auto manifest = thermolab::run_experiment(cfg, opts);
  std::cout << "experiment: " << manifest.experiment << "\n";
  std::cout << "out: " << opts.out_dir << " (" << manifest.outputs.size()
            << " file(s), manifest.json)\n";
  for (const auto& f : manifest.outputs)
    std::cout << "  " << f.name << "  rows=" << f.rows << "  fnv1a=" << f.checksum
              << "\n";
  for (const auto& w : manifest.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "wall: " << thermolab::format_g17(manifest.wall_seconds) << " s\n";
  return 0;
}

int cmd_list() {
  for (const auto& e : thermolab::experiment_catalog())
    std::printf("%-24s %s\n", e.id.c_str(), e.summary.c_str());
  return 0;
}

int cmd_check() {
  const auto rows = thermolab::run_diagnostics_suite();
  std::size_t failures = 0;
  for (const auto& r : rows) {
    std::printf("%-36s %-26s %s %-24s %s\n", r.name.c_str(),
                thermolab::format_g17(r.value).c_str(), r.larger_is_pass ? ">" : "<",
                thermolab::format_g17(r.threshold).c_str(), r.pass ? "PASS" : "FAIL");
    if (!r.pass) ++failures;
  }
  if (failures) {
    std::printf("%zu check(s) FAILED\n", failures);
    return 1;
  }
  std::printf("all %zu checks passed\n", rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermostatted harmonic-oscillator laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  thermolab::RunOptions opts;
  auto* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_flag("--paper-scale", opts.paper_scale,
                "use the published step budgets instead of the reduced defaults");
  run->add_option("--out", opts.out_dir, "output directory (default: out)");

  auto* list = app.add_subcommand("list", "print the experiment catalog");
  auto* check = app.add_subcommand("check", "run the diagnostics suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, opts);
    if (list->parsed()) return cmd_list();
    if (check->parsed()) return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
