#include "fluxcount/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include <yaml-cpp/yaml.h>

#include "fluxcount/errors.hpp"
#include "fluxcount/io.hpp"

namespace fluxcount {
namespace {

// Reads one YAML mapping, remembering which keys were consumed so that
// leftovers can be reported as unknown fields.
class MapReader {
 public:
  MapReader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where(), "expected a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? node_[key] : YAML::Node(YAML::NodeType::Undefined);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const std::string& key, double& out, double scale = 1.0) {
    const YAML::Node n = raw(key);
    if (!n) return;
    try {
      out = n.as<double>() * scale;
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), "expected a number");
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    const YAML::Node n = raw(key);
    if (!n) return;
    long long v = 0;
    try {
      v = n.as<long long>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), "expected an integer");
    }
    if (v < 0) throw ConfigError(field(key), "must be non-negative");
    out = static_cast<Int>(v);
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    const YAML::Node n = raw(key);
    if (!n) return;
    try {
      out = n.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), "expected an unsigned 64-bit integer");
    }
  }

  void boolean(const std::string& key, bool& out) {
    const YAML::Node n = raw(key);
    if (!n) return;
    try {
      out = n.as<bool>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), "expected true or false");
    }
  }

  void text(const std::string& key, std::string& out) {
    const YAML::Node n = raw(key);
    if (!n) return;
    if (!n.IsScalar()) throw ConfigError(field(key), "expected a string");
    out = n.as<std::string>();
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    const YAML::Node n = raw(key);
    if (!n) return;
    if (!n.IsSequence()) throw ConfigError(field(key), "expected a list of numbers");
    out.clear();
    for (std::size_t i = 0; i < n.size(); ++i) {
      try {
        out.push_back(n[i].as<double>());
      } catch (const YAML::Exception&) {
        throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      }
    }
  }

  template <class Enum>
  void choice(const std::string& key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> options) {
    std::string s;
    text(key, s);
    if (s.empty()) return;
    std::string allowed;
    for (const auto& [name, value] : options) {
      if (s == name) {
        out = value;
        return;
      }
      allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError(field(key), "unknown value '" + s + "' (expected one of: " + allowed + ")");
  }

  MapReader child(const std::string& key) { return MapReader(raw(key), field(key)); }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void wrap(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string();
}

void parse_device(MapReader r, DeviceParams& d) {
  r.number("omega_q_hz", d.omega_q, kTwoPi);
  r.number("alpha_hz", d.alpha_q, kTwoPi);
  r.number("omega_r_hz", d.omega_r, kTwoPi);
  r.number("omega_s_hz", d.omega_s, kTwoPi);
  r.number("chi_hz", d.chi, kTwoPi);
  r.number("chi_qr_hz", d.chi_qr, kTwoPi);
  r.number("t1_q_us", d.t1_q, 1e-6);
  r.number("t2_q_us", d.t2_q, 1e-6);
  r.number("t1_s_us", d.t1_s, 1e-6);
  r.number("t2_s_us", d.t2_s, 1e-6);
  r.number("nbar_q", d.nbar_q);
  r.number("nbar_s", d.nbar_s);
  r.number("f_gg", d.f_gg);
  r.number("f_ee", d.f_ee);
  r.number("t_r_us", d.t_r, 1e-6);
  r.number("t_l_us", d.t_l, 1e-6);
  r.number("t_c_us", d.t_c, 1e-6);
  r.integer("n_parity", d.n_parity);
  r.number("lambda_thresh", d.lambda_thresh);
  r.choice("error_combination", d.error_combination,
           {{"additive", ErrorCombination::kAdditive}, {"multiplicative", ErrorCombination::kMultiplicative}});
  r.finish();
  wrap("device", [&] { d.validate(); });
}

void parse_tuning(MapReader r, RunConfig& cfg, const std::string& base_dir) {
  r.choice("flux_convention", cfg.flux_convention,
           {{"flux_quanta", FluxConvention::kFluxQuanta}, {"phase_radians", FluxConvention::kPhaseRadians}});
  const FluxConvention conv = cfg.flux_convention;
  TuningModel t = default_tuning();

  double g_hz = t.g / kTwoPi;
  const bool refit = r.has("coupling_hz") || r.has("endpoints");
  r.number("coupling_hz", g_hz);
  double phi_a = flux_from_quoted(-0.4793, FluxConvention::kFluxQuanta), f_a = 5671.4e6;
  double phi_b = 0.0, f_b = 5694.2e6;
  if (r.has("endpoints")) {
    MapReader e = r.child("endpoints");
    double qa = quoted_from_flux(phi_a, conv), qb = quoted_from_flux(phi_b, conv);
    e.number("phi_a", qa);
    e.number("freq_a_hz", f_a);
    e.number("phi_b", qb);
    e.number("freq_b_hz", f_b);
    e.finish();
    phi_a = flux_from_quoted(qa, conv);
    phi_b = flux_from_quoted(qb, conv);
  } else {
    r.raw("endpoints");
  }
  if (refit) {
    std::vector<FluxRow> rows = t.flux_table;
    wrap(r.field("endpoints"),
         [&] { t = fit_tuning_endpoints(kTwoPi * g_hz, phi_b, kTwoPi * f_b, phi_a, kTwoPi * f_a); });
    for (auto& row : rows) row.omega_s = storage_frequency(t, row.phi_ext);
    t.flux_table = rows;
  }

  const YAML::Node table = r.raw("table");
  std::string csv;
  r.text("table_csv", csv);
  if (table && !csv.empty()) throw ConfigError(r.field("table"), "give either table or table_csv, not both");
  if (table) {
    if (!table.IsSequence()) throw ConfigError(r.field("table"), "expected a list of [phi, t1_us, t2_us, eta, delta]");
    t.flux_table.clear();
    for (std::size_t i = 0; i < table.size(); ++i) {
      const std::string f = r.field("table") + "[" + std::to_string(i) + "]";
      if (!table[i].IsSequence() || table[i].size() != 5)
        throw ConfigError(f, "expected [phi, t1_us, t2_us, eta, delta]");
      double v[5];
      for (int k = 0; k < 5; ++k) {
        try {
          v[k] = table[i][k].as<double>();
        } catch (const YAML::Exception&) {
          throw ConfigError(f, "expected numbers");
        }
      }
      const double phi = flux_from_quoted(v[0], conv);
      double omega = 0.0;
      wrap(f, [&] { omega = storage_frequency(t, phi); });
      t.flux_table.push_back(FluxRow{phi, omega, v[1] * 1e-6, v[2] * 1e-6, v[3], v[4]});
    }
  }
  if (!csv.empty()) {
    wrap(r.field("table_csv"), [&] { t.flux_table = load_flux_table_csv(resolve(base_dir, csv), conv); });
  }
  r.finish();
  wrap("tuning", [&] { t.validate(); });
  cfg.tuning = std::move(t);
}

void parse_scan(MapReader r, RunConfig& cfg) {
  ScanConfig& s = cfg.scan;
  r.integer("n_points", s.n_points);
  r.number("start_hz", s.start_hz);
  r.number("step_hz", s.step_hz);
  r.integer("n_meas", s.n_meas);
  r.number("quoted_time_per_point_s", cfg.quoted_time_per_point);
  if (r.has("planted")) {
    MapReader p = r.child("planted");
    p.number("epsilon", s.planted.epsilon);
    p.number("freq_hz", s.planted.freq_hz);
    p.finish();
    if (s.planted.epsilon < 0) throw ConfigError(r.field("planted.epsilon"), "must be non-negative");
  } else {
    r.raw("planted");
  }
  r.finish();
  if (s.n_points > 0 && !(s.step_hz > 0)) throw ConfigError(r.field("step_hz"), "must be positive");
  if (s.n_meas == 0) throw ConfigError(r.field("n_meas"), "must be positive");
}

void parse_characterize(MapReader r, CharacterizeConfig& c, FluxConvention conv) {
  double quoted = quoted_from_flux(c.phi_ext, conv);
  r.number("phi_ext", quoted);
  c.phi_ext = flux_from_quoted(quoted, conv);
  r.numbers("injections", c.injections);
  r.integer("trials", c.trials);
  r.number("probe_injection", c.probe_injection);
  r.integer("sweep_trials", c.sweep_trials);
  r.numbers("thresholds", c.thresholds);
  r.integer("flux_trials", c.flux_trials);
  r.finish();
  for (double x : c.injections)
    if (!(x >= 0 && x <= 0.2)) throw ConfigError(r.field("injections"), "values must lie in [0, 0.2]");
  if (c.injections.size() < 2) throw ConfigError(r.field("injections"), "need at least two values");
  if (c.trials < 100) throw ConfigError(r.field("trials"), "need at least 100 trials");
  if (c.flux_trials < 100) throw ConfigError(r.field("flux_trials"), "need at least 100 trials");
  if (!(c.probe_injection > 0 && c.probe_injection <= 1))
    throw ConfigError(r.field("probe_injection"), "must lie in (0, 1]");
  if (c.sweep_trials == 0) throw ConfigError(r.field("sweep_trials"), "must be positive");
  if (c.thresholds.empty()) throw ConfigError(r.field("thresholds"), "need at least one threshold");
  for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
    if (!(c.thresholds[i] > 0) || (i > 0 && !(c.thresholds[i] > c.thresholds[i - 1])))
      throw ConfigError(r.field("thresholds"), "must be positive and strictly increasing");
  }
}

void parse_lindblad(MapReader r, LindbladConfig& l) {
  ProtocolOptions& o = l.options;
  r.integer("trials", l.trials);
  r.choice("pulse_shape", o.pulse_shape, {{"gaussian", PulseShape::kGaussian}, {"hard", PulseShape::kHard}});
  r.choice("wait_reference", o.wait_reference,
           {{"pulse_centers", ParityWaitReference::kPulseCenters},
            {"pulse_edges", ParityWaitReference::kPulseEdges}});
  r.choice("measurement", o.measurement,
           {{"projective", MeasurementModel::kProjective},
            {"assign_outcome", MeasurementModel::kAssignOutcome}});
  r.choice("storage_coherence", o.storage_coherence,
           {{"keep", StorageCoherence::kKeep}, {"dephase", StorageCoherence::kDephase}});
  r.number("dt_ns", o.dt.max_dt, 1e-9);
  r.number("tolerance", o.dt.tolerance);
  r.integer("max_refinements", o.dt.max_refinements);
  r.number("sigma_ns", o.sigma, 1e-9);
  r.number("cutoff_sigmas", o.cutoff_sigmas);
  r.boolean("dump_sequences", l.dump_sequences);
  r.finish();
  if (l.trials == 0) throw ConfigError(r.field("trials"), "must be positive");
  if (!(o.sigma > 0)) throw ConfigError(r.field("sigma_ns"), "must be positive");
  if (!(o.cutoff_sigmas > 0)) throw ConfigError(r.field("cutoff_sigmas"), "must be positive");
  if (!(o.dt.max_dt > 0) || o.dt.max_dt > o.sigma / 10.0 * (1 + 1e-12))
    throw ConfigError(r.field("dt_ns"), "must lie in (0, sigma/10]");
  if (!(o.dt.tolerance > 0)) throw ConfigError(r.field("tolerance"), "must be positive");
}

void parse_exclusion(MapReader r, RunConfig& cfg, const std::string& base_dir) {
  ExclusionConfig& x = cfg.exclusion;
  SignalModel& m = x.model;
  r.integer("window", x.window);
  r.integer("order", x.order);
  r.number("confidence", x.confidence);
  r.number("candidate_p_value", x.candidate_p_value);
  r.choice("rho_convention", m.rho_convention,
           {{"energy_over_hbar", RhoConvention::kEnergyOverHbar},
            {"quoted_constant", RhoConvention::kQuotedConstant},
            {"unresolved", RhoConvention::kUnresolved}});
  r.number("rho_dm_gev_cm3", m.rho_dm_gev_cm3);
  r.number("quoted_rho_2pi_ghz_cm3", m.quoted_rho_rad_s_cm3, kTwoPi * 1e9);
  r.number("q_dm", m.q_dm);
  r.number("volume_cm3", m.volume_cm3);
  const YAML::Node g = r.raw("form_factor");
  if (g) {
    if (g.IsScalar() && g.as<std::string>() == "closed_form") {
      m.form_factor = form_factor_rect();
    } else {
      try {
        m.form_factor = g.as<double>();
      } catch (const YAML::Exception&) {
        throw ConfigError(r.field("form_factor"), "expected a number or 'closed_form'");
      }
    }
  }
  if (r.has("sigmas")) {
    MapReader s = r.child("sigmas");
    s.number("eta", m.sigma.eta);
    s.number("q_s", m.sigma.q_s);
    s.number("freq_hz", m.sigma.freq_hz);
    s.number("volume_cm3", m.sigma.volume_cm3);
    s.number("form_factor", m.sigma.form_factor);
    s.finish();
  } else {
    r.raw("sigmas");
  }
  if (r.has("quadrature")) {
    MapReader q = r.child("quadrature");
    q.choice("mode", x.quadrature.mode,
             {{"gauss_hermite", Marginalization::kGaussHermite}, {"monte_carlo", Marginalization::kMonteCarlo}});
    q.integer("nodes", x.quadrature.nodes);
    q.integer("mc_samples", x.quadrature.mc_samples);
    q.finish();
    if (x.quadrature.nodes < 1) throw ConfigError(q.field("nodes"), "must be at least 1");
    if (x.quadrature.mc_samples == 0) throw ConfigError(q.field("mc_samples"), "must be positive");
  } else {
    r.raw("quadrature");
  }
  if (r.has("lineshape")) {
    MapReader l = r.child("lineshape");
    l.choice("kind", x.lineshape.kind,
             {{"maxwellian", LineshapeKind::kMaxwellian},
              {"lorentzian", LineshapeKind::kLorentzian},
              {"top_hat", LineshapeKind::kTopHat}});
    l.number("coverage_fraction", x.lineshape.coverage_fraction);
    l.finish();
  } else {
    r.raw("lineshape");
  }
  std::string input;
  r.text("input", input);
  if (!input.empty()) cfg.exclusion_input = resolve(base_dir, input);
  r.finish();

  x.lineshape.q_dm = m.q_dm;
  if (m.rho_convention == RhoConvention::kUnresolved)
    throw ConfigError(r.field("rho_convention"), "dark-matter density unit convention must be resolved");
  if (x.order < 0 || x.order >= x.window) throw ConfigError(r.field("order"), "must satisfy 0 <= order < window");
  if (!(x.confidence > 0 && x.confidence < 1)) throw ConfigError(r.field("confidence"), "must lie in (0, 1)");
  wrap("exclusion", [&] { m.validate(); });
}

}  // namespace

std::vector<FluxRow> load_flux_table_csv(const std::string& path, FluxConvention convention) {
  const CsvTable t = read_csv(path);
  std::vector<FluxRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    FluxRow r;
    r.phi_ext = flux_from_quoted(t.number(i, "phi_ext"), convention);
    r.omega_s = kTwoPi * t.number(i, "omega_s_hz");
    r.t1_s = t.number(i, "t1_s_us") * 1e-6;
    r.t2_s = t.number(i, "t2_s_us") * 1e-6;
    r.eta = t.number(i, "eta");
    r.delta = t.number(i, "delta");
    rows.push_back(r);
  }
  return rows;
}

RunConfig parse_config(const std::string& yaml_text, const ConfigOverrides& overrides,
                       const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("<root>", std::string("invalid YAML: ") + e.what());
  }
  RunConfig cfg;
  MapReader r(root, "");
  r.unsigned64("seed", cfg.seed);
  r.integer("threads", cfg.threads);
  r.text("output_dir", cfg.output_dir);
  parse_device(r.child("device"), cfg.device);
  parse_tuning(r.child("tuning"), cfg, base_dir);
  parse_scan(r.child("scan"), cfg);
  parse_characterize(r.child("characterize"), cfg.characterize, cfg.flux_convention);
  parse_lindblad(r.child("lindblad"), cfg.lindblad);
  parse_exclusion(r.child("exclusion"), cfg, base_dir);
  r.finish();

  if (const char* env = std::getenv("FLUXCOUNT_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("FLUXCOUNT_SEED", "expected an unsigned integer");
    }
  }
  if (const char* env = std::getenv("FLUXCOUNT_OUT"); env && *env) cfg.output_dir = env;
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  if (overrides.threads) cfg.threads = *overrides.threads;
  if (cfg.threads == 0) cfg.threads = 1;

  cfg.scan.threads = cfg.threads;
  cfg.lindblad.options.threads = cfg.threads;
  cfg.exclusion.threads = cfg.threads;
  cfg.exclusion.quadrature.seed = cfg.seed;
  if (cfg.exclusion_input.empty())
    cfg.exclusion_input = (std::filesystem::path(cfg.output_dir) / "scan.csv").string();
  cfg.config_hash = sha256_hex(yaml_text + "\nseed=" + std::to_string(cfg.seed));
  return cfg;
}

RunConfig load_config(const std::string& path, const ConfigOverrides& overrides) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DependencyError&) {
    throw ConfigError("--config", "cannot read " + path);
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config(text, overrides, dir.empty() ? "." : dir.string());
}

}  // namespace fluxcount
