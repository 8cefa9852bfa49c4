#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfast/channel.hpp"
#include "gfast/demand.hpp"
#include "gfast/region.hpp"

namespace gfast {

/// Mask breakpoint: PSD in dBm/Hz at a frequency; interpolated linearly in dB.
struct MaskPoint {
  double frequency_hz = 0.0;
  double psd_dbm_hz = 0.0;
};

struct Scenario {
  std::string name = "scenario";

  // Topology: explicit lengths, or `num_lines` lengths drawn uniformly from the range.
  std::size_t num_lines = 0;
  std::vector<double> line_lengths_m;
  std::pair<double, double> length_range_m{10.0, 400.0};
  double fext_coupling = 1e-7;
  ChannelModel model;
  std::optional<std::filesystem::path> channel_file;

  BandPlan band;
  double noise_psd_dbm_hz = -140.0;

  double p_sum_dbm = 4.0;
  double b_max_bits = 12.0;
  std::vector<MaskPoint> mask{{2e6, -65.0}, {212e6, -79.0}};
  double regulatory_ceiling_dbm_hz = -65.0;
  double snr_gap_db = 9.75;

  std::vector<PrecoderKind> kinds{PrecoderKind::ZfLinear, PrecoderKind::ZfThp};

  std::vector<std::size_t> prioritized_lines;
  double r_min_bps = 0.0;
  std::vector<double> r_min_bps_per_line;  // overrides r_min_bps when present

  std::vector<double> region_ratios = default_weight_grid();

  std::size_t rr_group_size = 5;
  RoundRobinMode rr_mode = RoundRobinMode::Extreme;
  double rr_min_rate_bps = 0.0;
  std::string rr_solver = "heuristic";

  DemandSettings settings;

  std::uint64_t seed = 1;
  std::size_t realizations = 1;
  std::filesystem::path output_dir = "runs/scenario";

  std::size_t lines() const { return line_lengths_m.empty() ? num_lines : line_lengths_m.size(); }
};

/// Parses the JSON text of a scenario. Relative paths resolve against `base_dir`.
/// Throws ValidationError naming the offending field.
Scenario parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Full consistency check; throws ValidationError on the first error, returns warnings.
std::vector<std::string> validate_scenario(const Scenario& scenario);

/// Per-tone mask in watts (linear-in-dB interpolation of the breakpoints at tone centers).
Eigen::VectorXd mask_watts(const Scenario& scenario, const BandPlan& band);

PowerConstraints build_constraints(const Scenario& scenario, const BandPlan& band);
PriorityPartition build_partition(const Scenario& scenario);
SnrGap scenario_gap(const Scenario& scenario);

/// Line lengths for one realization (drawn from the range when not listed).
std::vector<double> realization_lengths(const Scenario& scenario, std::uint64_t seed);

/// Generates (or loads) the channel of one realization.
ChannelTensor build_channel(const Scenario& scenario, std::uint64_t seed, const std::vector<double>& lengths);

}  // namespace gfast
