#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fluxcount/commands.hpp"
#include "fluxcount/config.hpp"
#include "fluxcount/errors.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config, "YAML configuration file")->required();
  sub->add_option("--seed", opts.seed, "Master seed (overrides config and FLUXCOUNT_SEED)");
  sub->add_option("--out", opts.out, "Output directory (overrides config and FLUXCOUNT_OUT)");
  sub->add_option("--threads", opts.threads, "Worker threads; outputs do not depend on this")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fluxcount;
  CLI::App app{"fluxcount: single-photon counter hidden-photon search pipeline"};
  app.require_subcommand(1);

  CommonOptions opts;
  using Command = std::function<StageResult(const RunConfig&)>;
  const std::pair<const char*, Command> commands[] = {
      {"simulate-scan", cmd_simulate_scan}, {"characterize", cmd_characterize},
      {"lindblad-eff", cmd_lindblad},       {"exclude", cmd_exclude},
      {"report", cmd_report},
  };
  const char* help[] = {
      "Simulate a flux scan of photon counts",
      "Monte-Carlo detector efficiency and dark counts",
      "Parity-protocol efficiency from the master equation",
      "Background fit and exclusion limit from a scan",
      "Figure data files from upstream stage outputs",
  };
  Command selected;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].first, help[i]);
    add_common(sub, opts);
    sub->callback([&selected, cmd = commands[i].second] { selected = cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ConfigOverrides ov;
    ov.seed = opts.seed;
    ov.output_dir = opts.out;
    ov.threads = opts.threads;
    const RunConfig cfg = load_config(opts.config, ov);
    const StageResult r = selected(cfg);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : r.outputs) std::cout << cfg.output_dir << '/' << f << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
