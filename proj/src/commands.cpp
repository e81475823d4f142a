#include "fluxcount/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "fluxcount/characterize.hpp"
#include "fluxcount/errors.hpp"
#include "fluxcount/io.hpp"
#include "fluxcount/lindblad.hpp"
#include "fluxcount/rng.hpp"
#include "fluxcount/savgol.hpp"

namespace fluxcount {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

void require_inputs(const std::vector<std::string>& paths) {
  for (const auto& p : paths)
    if (!fs::exists(p)) throw DependencyError(p);
}

// JSON cannot carry infinities; they are written as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_manifest(const RunConfig& cfg, const StageResult& r, double wall_time, const json& extra) {
  json m;
  m["stage"] = r.stage;
  m["artifact_version"] = kArtifactVersion;
  m["config_hash"] = cfg.config_hash;
  m["seed"] = cfg.seed;
  m["threads"] = cfg.threads;
  m["wall_time_s"] = {{r.stage, wall_time}};
  json digests = json::object();
  for (const auto& f : r.outputs) digests[f] = sha256_file(out_path(cfg, f));
  m["outputs"] = digests;
  m["warnings"] = r.warnings;
  if (!extra.is_null()) m["details"] = extra;
  write_json(out_path(cfg, "manifest_" + r.stage + ".json"), m);
}

template <class F>
StageResult run_stage(const RunConfig& cfg, const std::string& name, F&& body) {
  ensure_dir(cfg.output_dir);
  const auto t0 = Clock::now();
  StageResult r;
  r.stage = name;
  json extra = body(r);
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  write_manifest(cfg, r, wall, extra);
  return r;
}

const char* rho_name(RhoConvention c) {
  switch (c) {
    case RhoConvention::kEnergyOverHbar:
      return "energy_over_hbar";
    case RhoConvention::kQuotedConstant:
      return "quoted_constant";
    case RhoConvention::kUnresolved:
      break;
  }
  return "unresolved";
}

}  // namespace

std::vector<ScanBin> read_scan_csv(const std::string& path, const TuningModel& tuning) {
  const CsvTable t = read_csv(path);
  std::vector<ScanBin> bins;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    ScanBin b = bin_at_flux(tuning, t.number(i, "phi_ext"), t.number(i, "freq_hz"), t.number(i, "n_meas"));
    b.n_obs = t.number(i, "n_obs");
    bins.push_back(b);
  }
  return bins;
}

StageResult cmd_simulate_scan(const RunConfig& cfg) {
  return run_stage(cfg, "simulate-scan", [&](StageResult& r) {
    const ScanDataset ds = simulate_scan(cfg.device, cfg.tuning, cfg.scan, cfg.exclusion.model, cfg.seed);
    r.warnings = ds.warnings;
    {
      CsvWriter w(out_path(cfg, "scan.csv"), cfg.config_hash, {"phi_ext", "freq_hz", "n_meas", "n_obs"});
      for (const auto& b : ds.bins) w.add_row({num(b.phi_ext), num(b.freq_hz), num(b.n_meas), num(b.n_obs)});
    }
    r.outputs.push_back("scan.csv");

    const DutyCycle d = duty_cycle(cfg.device, cfg.scan.n_meas, cfg.quoted_time_per_point);
    if (!d.consistent) {
      r.warnings.push_back("protocol time per point " + num(d.protocol_time_per_point) +
                           " s differs from the quoted " + num(d.quoted_time_per_point) + " s");
    }
    json summary;
    summary["n_points"] = ds.bins.size();
    summary["step_hz"] = ds.step_hz;
    summary["span_hz"] = ds.span_hz;
    summary["duty_cycle"] = {{"cycle_time_s", d.cycle_time},
                             {"readout_time_s", d.readout_time},
                             {"readout_fraction", d.readout_fraction},
                             {"protocol_time_per_point_s", d.protocol_time_per_point},
                             {"quoted_time_per_point_s", d.quoted_time_per_point},
                             {"implied_cycle_time_s", d.implied_cycle_time},
                             {"consistent", d.consistent}};
    if (cfg.scan.planted.epsilon > 0) {
      const auto mu = planted_expectation(ds.bins, cfg.scan.planted, cfg.exclusion.model);
      json planted = {{"epsilon", cfg.scan.planted.epsilon}, {"freq_hz", cfg.scan.planted.freq_hz}};
      json bins = json::array();
      for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu[i] > 0) bins.push_back({{"freq_hz", ds.bins[i].freq_hz}, {"expected_counts", mu[i]}});
      planted["bins"] = bins;
      summary["planted"] = planted;
    }
    write_json(out_path(cfg, "scan_summary.json"), summary);
    r.outputs.push_back("scan_summary.json");
    return json();
  });
}

StageResult cmd_characterize(const RunConfig& cfg) {
  return run_stage(cfg, "characterize", [&](StageResult& r) {
    const CharacterizeConfig& c = cfg.characterize;
    const FluxParams fp = interpolate_flux_params(cfg.tuning, c.phi_ext);
    const auto res = run_characterization(cfg.device, fp.t1_s, c.injections, c.trials, cfg.seed, cfg.threads);
    {
      CsvWriter w(out_path(cfg, "characterization.csv"), cfg.config_hash,
                  {"n_inj", "n_meas", "trials", "positives"});
      for (const auto& p : res.points) w.add_row({num(p.n_inj), num(p.n_meas), num(p.trials), num(p.positives)});
    }
    write_json(out_path(cfg, "characterization.json"),
               {{"phi_ext", c.phi_ext},
                {"t1_s", fp.t1_s},
                {"eta", res.eta},
                {"eta_err", res.eta_err},
                {"delta", res.delta},
                {"delta_err", res.delta_err},
                {"lambda_thresh", res.lambda_thresh},
                {"trials_per_point", c.trials}});

    const auto sweep = threshold_sweep(cfg.device, fp.t1_s, c.probe_injection, c.thresholds, c.sweep_trials,
                                       cfg.seed, cfg.threads);
    {
      CsvWriter w(out_path(cfg, "threshold_sweep.csv"), cfg.config_hash,
                  {"lambda", "eta", "delta", "delta_over_eta"});
      for (const auto& s : sweep) w.add_row({num(s.lambda), num(s.eta), num(s.delta), num(s.delta_over_eta)});
    }

    {
      CsvWriter w(out_path(cfg, "efficiency_vs_flux.csv"), cfg.config_hash,
                  {"phi_ext", "freq_hz", "t1_s_us", "eta_table", "eta_mc", "eta_mc_err", "delta_mc"});
      std::uint64_t row_seed = 0;
      for (const auto& row : cfg.tuning.flux_table) {
        const auto fit = run_characterization(cfg.device, row.t1_s, c.injections, c.flux_trials,
                                              derive_seed(cfg.seed, 0x464c5558ULL, row_seed++), cfg.threads);
        w.add_row({num(row.phi_ext), num(row.omega_s / kTwoPi), num(row.t1_s * 1e6), num(row.eta),
                   num(fit.eta), num(fit.eta_err), num(fit.delta)});
      }
    }
    r.outputs = {"characterization.csv", "characterization.json", "threshold_sweep.csv",
                 "efficiency_vs_flux.csv"};
    return json();
  });
}

StageResult cmd_lindblad(const RunConfig& cfg) {
  return run_stage(cfg, "lindblad-eff", [&](StageResult& r) {
    ProtocolOptions opts = cfg.lindblad.options;
    opts.keep_sequences = cfg.lindblad.dump_sequences;
    json runs = json::array();
    for (bool dec : {false, true}) {
      const auto res = simulate_parity_protocol(cfg.device, cfg.lindblad.trials, dec, cfg.seed, opts);
      runs.push_back({{"with_decoherence", dec},
                      {"efficiency", res.efficiency},
                      {"stderr", res.std_error},
                      {"trials", res.trials},
                      {"positives", res.positives},
                      {"dt", res.dt},
                      {"pulse_amplitude", res.pulse_amplitude}});
      if (cfg.lindblad.dump_sequences) {
        const std::string name = dec ? "lindblad_sequences_decoherent.txt" : "lindblad_sequences_ideal.txt";
        std::ofstream out(out_path(cfg, name), std::ios::binary);
        write_sequences(out, res.sequences);
        r.outputs.push_back(name);
      }
    }
    const auto& o = cfg.lindblad.options;
    json doc = {{"runs", runs},
                {"pulse_shape", o.pulse_shape == PulseShape::kGaussian ? "gaussian" : "hard"},
                {"wait_reference", o.wait_reference == ParityWaitReference::kPulseCenters ? "pulse_centers"
                                                                                        : "pulse_edges"},
                {"measurement", o.measurement == MeasurementModel::kProjective ? "projective" : "assign_outcome"},
                {"storage_coherence", o.storage_coherence == StorageCoherence::kKeep ? "keep" : "dephase"},
                {"sigma", o.sigma},
                {"cutoff_sigmas", o.cutoff_sigmas}};
    write_json(out_path(cfg, "lindblad.json"), doc);
    r.outputs.insert(r.outputs.begin(), "lindblad.json");
    return json();
  });
}

StageResult cmd_exclude(const RunConfig& cfg) {
  require_inputs({cfg.exclusion_input});
  return run_stage(cfg, "exclude", [&](StageResult& r) {
    const auto bins = read_scan_csv(cfg.exclusion_input, cfg.tuning);
    const int window = normalized_window(cfg.exclusion.window);
    if (!bins.empty() && static_cast<int>(bins.size()) < window)
      throw ConfigError("exclusion.window", "scan has " + std::to_string(bins.size()) +
                                                " bins, fewer than the smoothing window " + std::to_string(window));
    if (bins.empty()) r.warnings.push_back("scan is empty; no exclusion computed");
    const ExclusionResult res = run_exclusion(bins, cfg.exclusion);

    {
      CsvWriter w(out_path(cfg, "exclusion.csv"), cfg.config_hash, {"freq_hz", "n_back", "epsilon95_envelope"});
      for (std::size_t i = 0; i < res.bins.size(); ++i)
        w.add_row({num(res.curve.freq_hz[i]), num(res.bins[i].bin.n_back), num(res.curve.envelope[i])});
    }
    {
      CsvWriter w(out_path(cfg, "exclusion_bins.csv"), cfg.config_hash,
                  {"phi_ext", "freq_hz", "n_meas", "n_obs", "n_back", "eta", "t1_s_us", "q_s", "epsilon95",
                   "p_value", "candidate"});
      for (const auto& b : res.bins)
        w.add_row({num(b.bin.phi_ext), num(b.bin.freq_hz), num(b.bin.n_meas), num(b.bin.n_obs), num(b.bin.n_back),
                   num(b.bin.eta), num(b.bin.t1_s * 1e6), num(b.bin.q_s), num(b.epsilon95), num(b.p_value),
                   b.candidate ? "1" : "0"});
    }
    {
      CsvWriter w(out_path(cfg, "exclusion_family.csv"), cfg.config_hash,
                  {"centre_hz", "epsilon95", "freq_hz", "epsilon"});
      for (const auto& f : res.curve.family)
        for (std::size_t i = 0; i < f.freq_hz.size(); ++i)
          w.add_row({num(f.centre_hz), num(f.epsilon95), num(f.freq_hz[i]), num(f.epsilon[i])});
    }
    json summary;
    double best = std::numeric_limits<double>::infinity(), best_f = 0.0;
    json candidates = json::array();
    for (const auto& b : res.bins) {
      if (b.epsilon95 < best) {
        best = b.epsilon95;
        best_f = b.bin.freq_hz;
      }
      if (b.candidate) candidates.push_back({{"freq_hz", b.bin.freq_hz}, {"p_value", b.p_value}});
    }
    summary["band_best_epsilon95"] = finite_or_null(best);
    summary["band_best_freq_hz"] = best_f;
    summary["candidates"] = candidates;
    summary["rho_convention"] = rho_name(cfg.exclusion.model.rho_convention);
    summary["rho_rate_density_rad_s_cm3"] = cfg.exclusion.model.rho_rate_density();
    summary["form_factor"] = cfg.exclusion.model.form_factor;
    summary["window"] = window;
    summary["order"] = cfg.exclusion.order;
    write_json(out_path(cfg, "exclusion_summary.json"), summary);
    if (!candidates.empty())
      r.warnings.push_back(std::to_string(candidates.size()) + " bin(s) flagged as non-excludable excess");
    r.outputs = {"exclusion.csv", "exclusion_bins.csv", "exclusion_family.csv", "exclusion_summary.json"};
    return json();
  });
}

StageResult cmd_report(const RunConfig& cfg) {
  const std::string envelope = out_path(cfg, "exclusion.csv");
  const std::string bins = out_path(cfg, "exclusion_bins.csv");
  const std::string sweep = out_path(cfg, "threshold_sweep.csv");
  const std::string flux = out_path(cfg, "efficiency_vs_flux.csv");
  require_inputs({envelope, bins, sweep, flux});
  return run_stage(cfg, "report", [&](StageResult& r) {
    ensure_dir(out_path(cfg, "report"));
    {
      const CsvTable t = read_csv(bins);
      CsvWriter w(out_path(cfg, "report/fig_counts_background.csv"), cfg.config_hash,
                  {"freq_hz", "n_obs", "n_back"});
      for (std::size_t i = 0; i < t.rows.size(); ++i)
        w.add_row({num(t.number(i, "freq_hz")), num(t.number(i, "n_obs")), num(t.number(i, "n_back"))});
    }
    {
      const CsvTable t = read_csv(sweep);
      CsvWriter w(out_path(cfg, "report/fig_delta_over_eta.csv"), cfg.config_hash,
                  {"lambda", "delta_over_eta", "eta", "delta"});
      for (std::size_t i = 0; i < t.rows.size(); ++i)
        w.add_row({num(t.number(i, "lambda")), num(t.number(i, "delta_over_eta")), num(t.number(i, "eta")),
                   num(t.number(i, "delta"))});
    }
    {
      const CsvTable t = read_csv(flux);
      CsvWriter w(out_path(cfg, "report/fig_efficiency_vs_flux.csv"), cfg.config_hash,
                  {"phi_ext", "freq_hz", "eta_table", "eta_mc"});
      for (std::size_t i = 0; i < t.rows.size(); ++i)
        w.add_row({num(t.number(i, "phi_ext")), num(t.number(i, "freq_hz")), num(t.number(i, "eta_table")),
                   num(t.number(i, "eta_mc"))});
    }
    {
      const CsvTable t = read_csv(envelope);
      CsvWriter w(out_path(cfg, "report/fig_exclusion_envelope.csv"), cfg.config_hash,
                  {"freq_hz", "epsilon95_envelope"});
      for (std::size_t i = 0; i < t.rows.size(); ++i)
        w.add_row({num(t.number(i, "freq_hz")), num(t.number(i, "epsilon95_envelope"))});
    }
    r.outputs = {"report/fig_counts_background.csv", "report/fig_delta_over_eta.csv",
                 "report/fig_efficiency_vs_flux.csv", "report/fig_exclusion_envelope.csv"};
    return json();
  });
}

}  // namespace fluxcount
