#include "gfast/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "gfast/errors.hpp"
#include "gfast/random.hpp"
#include "gfast/units.hpp"

namespace gfast {

namespace {

using nlohmann::json;

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ValidationError(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ValidationError(where.empty() ? key : where + "." + key, "unknown field");
  }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

double get_number(const json& obj, const std::string& where, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ValidationError(join(where, key), "expected a number");
  return v.get<double>();
}

std::uint64_t get_count(const json& obj, const std::string& where, const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ValidationError(join(where, key), "expected a nonnegative integer");
}

std::string get_string(const json& obj, const std::string& where, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ValidationError(join(where, key), "expected a string");
  return v.get<std::string>();
}

std::vector<double> get_numbers(const json& obj, const std::string& where, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ValidationError(join(where, key), "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ValidationError(join(where, key), "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::size_t> get_indices(const json& obj, const std::string& where, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ValidationError(join(where, key), "expected an array of line indices");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
      throw ValidationError(join(where, key), "line indices must be nonnegative integers");
    out.push_back(static_cast<std::size_t>(e.get<std::int64_t>()));
  }
  return out;
}

bool finite(double v) { return std::isfinite(v); }

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ValidationError(field, message);
}

}  // namespace

Scenario parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError("scenario", std::string("not valid JSON: ") + e.what());
  }
  allow_keys(doc, "", {"name", "topology", "band", "noise_psd_dbm_hz", "constraints", "snr_gap_db", "precoders",
                       "partition", "region", "round_robin", "solver", "seed", "realizations", "output_dir"});
  Scenario s;
  s.name = get_string(doc, "", "name", s.name);
  s.output_dir = "runs/" + s.name;

  if (doc.contains("topology")) {
    const auto& t = doc.at("topology");
    const std::string w = "topology";
    allow_keys(t, w, {"num_lines", "line_lengths_m", "length_range_m", "fext_coupling",
                      "attenuation_db_per_sqrt_mhz_per_100m", "propagation_speed_m_s", "xtalk_sigma_db",
                      "channel_file"});
    s.num_lines = get_count(t, w, "num_lines", 0);
    if (t.contains("line_lengths_m")) s.line_lengths_m = get_numbers(t, w, "line_lengths_m");
    if (t.contains("length_range_m")) {
      auto r = get_numbers(t, w, "length_range_m");
      require(r.size() == 2, "topology.length_range_m", "expected [min, max]");
      s.length_range_m = {r[0], r[1]};
    }
    s.fext_coupling = get_number(t, w, "fext_coupling", s.fext_coupling);
    s.model.attenuation_db_per_sqrt_mhz_per_100m =
        get_number(t, w, "attenuation_db_per_sqrt_mhz_per_100m", s.model.attenuation_db_per_sqrt_mhz_per_100m);
    s.model.propagation_speed_m_s = get_number(t, w, "propagation_speed_m_s", s.model.propagation_speed_m_s);
    s.model.xtalk_sigma_db = get_number(t, w, "xtalk_sigma_db", s.model.xtalk_sigma_db);
    if (t.contains("channel_file")) {
      std::filesystem::path p = get_string(t, w, "channel_file", "");
      s.channel_file = p.is_relative() ? base_dir / p : p;
    }
  }

  if (doc.contains("band")) {
    const auto& b = doc.at("band");
    allow_keys(b, "band", {"num_tones", "f_start_hz", "f_stop_hz", "symbol_rate_hz"});
    s.band.num_tones = get_count(b, "band", "num_tones", s.band.num_tones);
    s.band.f_start_hz = get_number(b, "band", "f_start_hz", s.band.f_start_hz);
    s.band.f_stop_hz = get_number(b, "band", "f_stop_hz", s.band.f_stop_hz);
    s.band.symbol_rate_hz = get_number(b, "band", "symbol_rate_hz", s.band.symbol_rate_hz);
  }
  s.noise_psd_dbm_hz = get_number(doc, "", "noise_psd_dbm_hz", s.noise_psd_dbm_hz);
  s.mask = {{s.band.f_start_hz, -65.0}, {s.band.f_stop_hz, -79.0}};

  if (doc.contains("constraints")) {
    const auto& c = doc.at("constraints");
    const std::string w = "constraints";
    allow_keys(c, w, {"p_sum_dbm", "b_max_bits", "mask_dbm_hz", "regulatory_ceiling_dbm_hz"});
    s.p_sum_dbm = get_number(c, w, "p_sum_dbm", s.p_sum_dbm);
    s.b_max_bits = get_number(c, w, "b_max_bits", s.b_max_bits);
    s.regulatory_ceiling_dbm_hz = get_number(c, w, "regulatory_ceiling_dbm_hz", s.regulatory_ceiling_dbm_hz);
    if (c.contains("mask_dbm_hz")) {
      const auto& m = c.at("mask_dbm_hz");
      require(m.is_array(), "constraints.mask_dbm_hz", "expected a list of breakpoints");
      s.mask.clear();
      for (const auto& bp : m) {
        allow_keys(bp, "constraints.mask_dbm_hz[]", {"frequency_hz", "psd_dbm_hz"});
        require(bp.contains("frequency_hz") && bp.contains("psd_dbm_hz"), "constraints.mask_dbm_hz",
                "each breakpoint needs frequency_hz and psd_dbm_hz");
        s.mask.push_back({get_number(bp, "constraints.mask_dbm_hz[]", "frequency_hz", 0.0),
                          get_number(bp, "constraints.mask_dbm_hz[]", "psd_dbm_hz", 0.0)});
      }
    }
  }
  s.snr_gap_db = get_number(doc, "", "snr_gap_db", s.snr_gap_db);

  if (doc.contains("precoders")) {
    const auto& p = doc.at("precoders");
    require(p.is_array(), "precoders", "expected a list of precoder names");
    s.kinds.clear();
    for (const auto& e : p) {
      require(e.is_string(), "precoders", "expected a list of precoder names");
      try {
        s.kinds.push_back(parse_precoder_kind(e.get<std::string>()));
      } catch (const ValidationError& err) {
        throw ValidationError("precoders", err.what());
      }
    }
  }

  if (doc.contains("partition")) {
    const auto& p = doc.at("partition");
    const std::string w = "partition";
    allow_keys(p, w, {"prioritized_lines", "constrained_lines", "r_min_bps", "r_min_bps_per_line"});
    if (p.contains("prioritized_lines")) s.prioritized_lines = get_indices(p, w, "prioritized_lines");
    s.r_min_bps = get_number(p, w, "r_min_bps", s.r_min_bps);
    if (p.contains("r_min_bps_per_line")) s.r_min_bps_per_line = get_numbers(p, w, "r_min_bps_per_line");
    if (p.contains("constrained_lines")) {
      // Optional explicit complement; checked for coverage in validate_scenario.
      auto constrained = get_indices(p, w, "constrained_lines");
      std::set<std::size_t> all(s.prioritized_lines.begin(), s.prioritized_lines.end());
      std::size_t expected = s.lines();
      for (auto l : constrained) {
        if (all.count(l)) throw ValidationError("partition.constrained_lines", "line " + std::to_string(l) +
                                                                                   " is also prioritized");
        all.insert(l);
      }
      if (expected > 0 && all.size() != expected)
        throw ValidationError("partition", "prioritized and constrained lines cover " + std::to_string(all.size()) +
                                               " of " + std::to_string(expected) + " lines");
      for (auto l : all)
        if (expected > 0 && l >= expected)
          throw ValidationError("partition", "line " + std::to_string(l) + " out of range");
    }
  }

  if (doc.contains("region")) {
    const auto& r = doc.at("region");
    allow_keys(r, "region", {"weight_ratios"});
    if (r.contains("weight_ratios")) s.region_ratios = get_numbers(r, "region", "weight_ratios");
  }

  if (doc.contains("round_robin")) {
    const auto& r = doc.at("round_robin");
    const std::string w = "round_robin";
    allow_keys(r, w, {"group_size", "mode", "min_rate_bps", "solver"});
    s.rr_group_size = get_count(r, w, "group_size", s.rr_group_size);
    const auto mode = get_string(r, w, "mode", "extreme");
    if (mode == "extreme")
      s.rr_mode = RoundRobinMode::Extreme;
    else if (mode == "min_rate")
      s.rr_mode = RoundRobinMode::MinRate;
    else
      throw ValidationError("round_robin.mode", "must be 'extreme' or 'min_rate'");
    s.rr_min_rate_bps = get_number(r, w, "min_rate_bps", s.rr_min_rate_bps);
    s.rr_solver = get_string(r, w, "solver", s.rr_solver);
  }

  if (doc.contains("solver")) {
    const auto& v = doc.at("solver");
    const std::string w = "solver";
    allow_keys(v, w, {"feasibility_tolerance", "max_outer_iterations", "max_inner_iterations", "max_sweeps",
                      "disable_threshold_bits", "step0", "rate_tolerance", "lambda_tolerance",
                      "slackness_tolerance", "max_iterations", "max_phases", "restore_factor",
                      "max_restore_rounds", "guard_prioritized"});
    auto& d = s.settings;
    d.spectrum.wsr.feasibility_tolerance = get_number(v, w, "feasibility_tolerance", d.spectrum.wsr.feasibility_tolerance);
    d.spectrum.wsr.max_outer_iterations =
        static_cast<int>(get_count(v, w, "max_outer_iterations", static_cast<std::uint64_t>(d.spectrum.wsr.max_outer_iterations)));
    d.spectrum.wsr.max_inner_iterations =
        static_cast<int>(get_count(v, w, "max_inner_iterations", static_cast<std::uint64_t>(d.spectrum.wsr.max_inner_iterations)));
    d.spectrum.max_sweeps = static_cast<int>(get_count(v, w, "max_sweeps", static_cast<std::uint64_t>(d.spectrum.max_sweeps)));
    d.spectrum.disable_threshold_bits = get_number(v, w, "disable_threshold_bits", d.spectrum.disable_threshold_bits);
    d.step0 = get_number(v, w, "step0", d.step0);
    d.rate_tolerance = get_number(v, w, "rate_tolerance", d.rate_tolerance);
    d.lambda_tolerance = get_number(v, w, "lambda_tolerance", d.lambda_tolerance);
    d.slackness_tolerance = get_number(v, w, "slackness_tolerance", d.slackness_tolerance);
    d.max_iterations = static_cast<int>(get_count(v, w, "max_iterations", static_cast<std::uint64_t>(d.max_iterations)));
    d.max_phases = static_cast<int>(get_count(v, w, "max_phases", static_cast<std::uint64_t>(d.max_phases)));
    d.restore_factor = get_number(v, w, "restore_factor", d.restore_factor);
    d.max_restore_rounds =
        static_cast<int>(get_count(v, w, "max_restore_rounds", static_cast<std::uint64_t>(d.max_restore_rounds)));
    if (v.contains("guard_prioritized")) {
      require(v.at("guard_prioritized").is_boolean(), "solver.guard_prioritized", "expected true or false");
      d.guard_prioritized = v.at("guard_prioritized").get<bool>();
    }
  }

  s.seed = get_count(doc, "", "seed", s.seed);
  s.realizations = get_count(doc, "", "realizations", s.realizations);
  if (doc.contains("output_dir")) {
    std::filesystem::path p = get_string(doc, "", "output_dir", "");
    s.output_dir = p;
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("scenario", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> warnings;
  const std::size_t lines = s.lines();
  require(lines >= 1, "topology.num_lines", "need at least one line (num_lines or line_lengths_m)");
  if (s.num_lines != 0 && !s.line_lengths_m.empty())
    require(s.num_lines == s.line_lengths_m.size(), "topology.num_lines",
            "disagrees with the length of line_lengths_m");
  for (double d : s.line_lengths_m) require(finite(d) && d > 0.0, "topology.line_lengths_m", "lengths must be > 0");
  require(finite(s.length_range_m.first) && finite(s.length_range_m.second) && s.length_range_m.first > 0.0 &&
              s.length_range_m.first <= s.length_range_m.second,
          "topology.length_range_m", "need 0 < min <= max");
  require(finite(s.fext_coupling) && s.fext_coupling >= 0.0, "topology.fext_coupling", "must be finite and >= 0");
  require(finite(s.model.attenuation_db_per_sqrt_mhz_per_100m) && s.model.attenuation_db_per_sqrt_mhz_per_100m >= 0.0,
          "topology.attenuation_db_per_sqrt_mhz_per_100m", "must be finite and >= 0");
  require(finite(s.model.propagation_speed_m_s) && s.model.propagation_speed_m_s > 0.0,
          "topology.propagation_speed_m_s", "must be > 0");
  require(finite(s.model.xtalk_sigma_db) && s.model.xtalk_sigma_db >= 0.0, "topology.xtalk_sigma_db",
          "must be finite and >= 0");
  if (s.channel_file)
    require(std::filesystem::exists(*s.channel_file), "topology.channel_file",
            "file not found: " + s.channel_file->string());

  try {
    s.band.validate();
  } catch (const ValidationError& e) {
    throw ValidationError("band", e.what());
  }
  require(finite(s.band.symbol_rate_hz) && s.band.symbol_rate_hz > 0.0, "band.symbol_rate_hz", "must be > 0");
  require(finite(s.noise_psd_dbm_hz), "noise_psd_dbm_hz", "must be finite");

  require(finite(s.p_sum_dbm), "constraints.p_sum_dbm", "must be finite");
  require(finite(s.b_max_bits) && s.b_max_bits >= 1.0 && s.b_max_bits == std::floor(s.b_max_bits),
          "constraints.b_max_bits", "b_max must be an integer >= 1");
  require(!s.mask.empty(), "constraints.mask_dbm_hz", "need at least one breakpoint");
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    require(finite(s.mask[i].frequency_hz) && finite(s.mask[i].psd_dbm_hz), "constraints.mask_dbm_hz",
            "breakpoints must be finite");
    if (i > 0)
      require(s.mask[i].frequency_hz > s.mask[i - 1].frequency_hz, "constraints.mask_dbm_hz",
              "breakpoint frequencies must increase");
    if (s.mask[i].psd_dbm_hz > s.regulatory_ceiling_dbm_hz)
      warnings.push_back("constraints.mask_dbm_hz: " + std::to_string(s.mask[i].psd_dbm_hz) + " dBm/Hz at " +
                         std::to_string(s.mask[i].frequency_hz) + " Hz exceeds the regulatory ceiling of " +
                         std::to_string(s.regulatory_ceiling_dbm_hz) + " dBm/Hz");
  }
  require(finite(s.snr_gap_db) && s.snr_gap_db >= 0.0, "snr_gap_db", "must be finite and >= 0");
  require(!s.kinds.empty(), "precoders", "need at least one precoder");

  std::set<std::size_t> seen;
  for (auto l : s.prioritized_lines) {
    require(l < lines, "partition.prioritized_lines", "line " + std::to_string(l) + " out of range");
    require(seen.insert(l).second, "partition.prioritized_lines", "line " + std::to_string(l) + " listed twice");
  }
  require(finite(s.r_min_bps) && s.r_min_bps >= 0.0, "partition.r_min_bps", "must be finite and >= 0");
  if (!s.r_min_bps_per_line.empty()) {
    require(s.r_min_bps_per_line.size() == lines, "partition.r_min_bps_per_line",
            "needs one entry per line (" + std::to_string(lines) + ")");
    for (double r : s.r_min_bps_per_line)
      require(finite(r) && r >= 0.0, "partition.r_min_bps_per_line", "entries must be finite and >= 0");
  }

  require(!s.region_ratios.empty(), "region.weight_ratios", "need at least one ratio");
  for (double r : s.region_ratios) require(finite(r) && r >= 0.0, "region.weight_ratios", "ratios must be >= 0");

  require(s.rr_group_size >= 1 && s.rr_group_size <= lines, "round_robin.group_size",
          "must be between 1 and the number of lines");
  require(finite(s.rr_min_rate_bps) && s.rr_min_rate_bps >= 0.0, "round_robin.min_rate_bps", "must be >= 0");
  require(s.rr_solver == "heuristic" || s.rr_solver == "alternating", "round_robin.solver",
          "must be 'heuristic' or 'alternating'");

  const auto& d = s.settings;
  require(d.spectrum.wsr.feasibility_tolerance > 0.0, "solver.feasibility_tolerance", "must be > 0");
  require(d.spectrum.wsr.max_outer_iterations >= 1, "solver.max_outer_iterations", "must be >= 1");
  require(d.spectrum.wsr.max_inner_iterations >= 1, "solver.max_inner_iterations", "must be >= 1");
  require(d.spectrum.disable_threshold_bits >= 0.0, "solver.disable_threshold_bits", "must be >= 0");
  require(d.step0 > 0.0 && finite(d.step0), "solver.step0", "must be > 0");
  require(d.rate_tolerance > 0.0, "solver.rate_tolerance", "must be > 0");
  require(d.lambda_tolerance > 0.0, "solver.lambda_tolerance", "must be > 0");
  require(d.slackness_tolerance > 0.0, "solver.slackness_tolerance", "must be > 0");
  require(d.max_iterations >= 1, "solver.max_iterations", "must be >= 1");
  require(d.restore_factor > 1.0, "solver.restore_factor", "must be > 1");
  require(s.realizations >= 1, "realizations", "must be >= 1");
  return warnings;
}

Eigen::VectorXd mask_watts(const Scenario& s, const BandPlan& band) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(band.num_tones));
  for (std::size_t n = 0; n < band.num_tones; ++n) {
    const double f = band.tone_frequency_hz(n);
    double psd = s.mask.front().psd_dbm_hz;
    if (f >= s.mask.back().frequency_hz) {
      psd = s.mask.back().psd_dbm_hz;
    } else if (f > s.mask.front().frequency_hz) {
      auto hi = std::upper_bound(s.mask.begin(), s.mask.end(), f,
                                 [](double x, const MaskPoint& p) { return x < p.frequency_hz; });
      auto lo = hi - 1;
      const double t = (f - lo->frequency_hz) / (hi->frequency_hz - lo->frequency_hz);
      psd = lo->psd_dbm_hz + t * (hi->psd_dbm_hz - lo->psd_dbm_hz);
    }
    out(static_cast<Eigen::Index>(n)) = psd_dbm_hz_to_watt(psd, band.tone_spacing_hz());
  }
  return out;
}

PowerConstraints build_constraints(const Scenario& s, const BandPlan& band) {
  return PowerConstraints::uniform(mask_watts(s, band), s.lines(), dbm_to_watt(s.p_sum_dbm), s.b_max_bits);
}

PriorityPartition build_partition(const Scenario& s) {
  auto p = PriorityPartition::from_prioritized(s.lines(), s.prioritized_lines, s.r_min_bps);
  if (!s.r_min_bps_per_line.empty())
    for (std::size_t l = 0; l < s.lines(); ++l)
      p.min_rate_bps[l] = p.prioritized[l] ? 0.0 : s.r_min_bps_per_line[l];
  return p;
}

SnrGap scenario_gap(const Scenario& s) { return SnrGap::from_db(s.snr_gap_db); }

std::vector<double> realization_lengths(const Scenario& s, std::uint64_t seed) {
  if (!s.line_lengths_m.empty()) return s.line_lengths_m;
  // Separate stream from the channel generator, which is seeded with `seed` itself.
  Rng rng(seed ^ 0x6c656e67746873ull);
  std::vector<double> out(s.num_lines);
  for (auto& d : out) d = rng.uniform(s.length_range_m.first, s.length_range_m.second);
  return out;
}

ChannelTensor build_channel(const Scenario& s, std::uint64_t seed, const std::vector<double>& lengths) {
  if (s.channel_file) {
    auto tensor = load_channel(*s.channel_file);
    if (tensor.num_lines() != lengths.size())
      throw ValidationError("topology.channel_file", "has " + std::to_string(tensor.num_lines()) +
                                                         " lines, scenario has " + std::to_string(lengths.size()));
    tensor.set_symbol_rate(s.band.symbol_rate_hz);
    return tensor;
  }
  BinderTopology topo{lengths, s.fext_coupling, seed};
  return generate_channel(topo, s.band, s.noise_psd_dbm_hz, s.model);
}

}  // namespace gfast
