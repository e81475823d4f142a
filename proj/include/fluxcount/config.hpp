#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fluxcount/device_model.hpp"
#include "fluxcount/exclusion.hpp"
#include "fluxcount/lindblad.hpp"
#include "fluxcount/scan.hpp"

namespace fluxcount {

struct CharacterizeConfig {
  double phi_ext = 0.0;
  std::vector<double> injections{0.0, 0.02, 0.05, 0.1, 0.15, 0.2};
  std::size_t trials = 20000;
  double probe_injection = 0.2;
  std::size_t sweep_trials = 100000;
  std::vector<double> thresholds{1, 2, 5, 10, 20, 50, 125, 200, 500, 1000, 2000, 5000};
  std::size_t flux_trials = 4000;  // per injection, for efficiency vs flux
};

struct LindbladConfig {
  std::size_t trials = 2000;
  ProtocolOptions options;
  bool dump_sequences = false;
};

struct RunConfig {
  DeviceParams device;
  TuningModel tuning;
  FluxConvention flux_convention = FluxConvention::kFluxQuanta;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  std::string output_dir = "out";
  ScanConfig scan;
  double quoted_time_per_point = 10.65;
  CharacterizeConfig characterize;
  LindbladConfig lindblad;
  ExclusionConfig exclusion;
  std::string exclusion_input;  // empty: <output_dir>/scan.csv

  /// SHA-256 over the config text and the effective seed.
  std::string config_hash;
};

/// Command-line values that take precedence over the file and environment.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<unsigned> threads;
};

/// Parses YAML text. Unknown keys and malformed values throw ConfigError
/// naming the field path. FLUXCOUNT_SEED and FLUXCOUNT_OUT override the
/// file; `overrides` override both.
RunConfig parse_config(const std::string& yaml_text, const ConfigOverrides& overrides = {},
                       const std::string& base_dir = ".");

/// Reads the file (ConfigError on failure) and parses it relative to its directory.
RunConfig load_config(const std::string& path, const ConfigOverrides& overrides = {});

/// Loads a flux table CSV `phi_ext,omega_s_hz,t1_s_us,t2_s_us,eta,delta`.
std::vector<FluxRow> load_flux_table_csv(const std::string& path, FluxConvention convention);

}  // namespace fluxcount
