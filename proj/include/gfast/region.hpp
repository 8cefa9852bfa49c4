#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfast/demand.hpp"

namespace gfast {

/// Ratio w(unprioritized) / w(prioritized). 0 means the unprioritized lines only help.
std::vector<double> default_weight_grid();

struct RegionSweepSpec {
  PriorityPartition partition;
  std::vector<double> ratios = default_weight_grid();
  std::vector<PrecoderKind> kinds{PrecoderKind::ZfLinear, PrecoderKind::ZfThp};
};

struct RegionPoint {
  PrecoderKind kind = PrecoderKind::ZfLinear;
  double ratio = 0.0;
  double group1_pct = 0.0;  // prioritized group, percent of its SROP sum
  double group2_pct = 0.0;  // remaining lines
  double group1_bps = 0.0;
  double group2_bps = 0.0;
  bool pareto = true;
  std::string error;  // set when the solver failed at this ratio
};

/// Group weights for a ratio: the larger-weight group gets weight 1.
std::pair<double, double> group_weights(double ratio);

/// Encoding order used at a ratio: the higher-weight group is encoded first, shortest lines
/// last inside each group; ratio 1 is the plain shortest-lines-last order.
EncodingOrder sweep_order(std::span<const double> line_lengths, const PriorityPartition& partition, double ratio);

/// Marks dominated points (strict domination, `tolerance` in percent).
void mark_pareto(std::vector<RegionPoint>& points, double tolerance = 1e-6);

std::vector<RegionPoint> sweep_region(const ChannelTensor& tensor, std::span<const double> line_lengths,
                                      const RegionSweepSpec& spec, const PowerConstraints& constraints, SnrGap gap,
                                      const SpectrumSettings& settings = {}, unsigned jobs = 1);

enum class RoundRobinMode { Extreme, MinRate };

std::string to_string(RoundRobinMode mode);

struct RoundRobinSpec {
  std::size_t group_size = 5;
  PrecoderKind kind = PrecoderKind::ZfLinear;
  RoundRobinMode mode = RoundRobinMode::Extreme;
  double min_rate_bps = 0.0;  // MinRate mode, capped at each line's SROP rate
  std::string solver = "heuristic";  // MinRate mode: "heuristic" or "alternating"
};

struct GainRecord {
  std::uint64_t realization = 0;
  std::size_t window = 0;
  std::size_t line = 0;
  PrecoderKind kind = PrecoderKind::ZfLinear;
  RoundRobinMode mode = RoundRobinMode::Extreme;
  std::string role = "prioritized";
  double line_length_m = 0.0;
  double srop_bps = 0.0;
  double achieved_bps = 0.0;
  double gain_pct = 0.0;
  int wsr_solves = 0;
};

/// Windows of consecutive lines; the last one wraps around so every line is covered.
std::vector<std::vector<std::size_t>> round_robin_windows(std::size_t lines, std::size_t group_size);

/// Every line is prioritized exactly once; one record per line.
std::vector<GainRecord> round_robin_study(const ChannelTensor& tensor, std::span<const double> line_lengths,
                                          const RoundRobinSpec& spec, const PowerConstraints& constraints,
                                          SnrGap gap, const DemandSettings& settings = {},
                                          std::uint64_t realization = 0, unsigned jobs = 1);

struct GainSummary {
  PrecoderKind kind = PrecoderKind::ZfLinear;
  RoundRobinMode mode = RoundRobinMode::Extreme;
  std::string role;
  std::size_t count = 0;
  double mean_gain_pct = 0.0;
  double mean_normalized_pct = 0.0;
  double p10_normalized_pct = 0.0;
  double p50_normalized_pct = 0.0;
  double p90_normalized_pct = 0.0;
};

/// Statistics per (kind, mode, role) group, in order of first appearance.
std::vector<GainSummary> aggregate(const std::vector<GainRecord>& records);

/// Linear-interpolation percentile of unsorted data, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gfast
