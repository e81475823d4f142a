#pragma once

#include <string>
#include <vector>

#include "fluxcount/config.hpp"

namespace fluxcount {

struct StageResult {
  std::string stage;
  std::vector<std::string> outputs;  // file names relative to the output directory
  std::vector<std::string> warnings;
};

/// Each command writes its outputs plus manifest_<stage>.json into
/// config.output_dir. Missing upstream files raise DependencyError.
StageResult cmd_simulate_scan(const RunConfig& config);
StageResult cmd_characterize(const RunConfig& config);
StageResult cmd_lindblad(const RunConfig& config);
StageResult cmd_exclude(const RunConfig& config);
StageResult cmd_report(const RunConfig& config);

/// Scan CSV rows `phi_ext,freq_hz,n_meas,n_obs` joined with the tuning table.
std::vector<ScanBin> read_scan_csv(const std::string& path, const TuningModel& tuning);

}  // namespace fluxcount
