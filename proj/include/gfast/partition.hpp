#pragma once

#include <cstddef>
#include <vector>

namespace gfast {

/// Split of the lines into the prioritized group and the remaining users, which are
/// guaranteed `min_rate_bps`. Entries of `min_rate_bps` for prioritized lines are ignored.
struct PriorityPartition {
  std::vector<bool> prioritized;
  std::vector<double> min_rate_bps;

  /// Every line prioritized, no rate targets: the plain sum-rate setting.
  static PriorityPartition all(std::size_t lines);
  static PriorityPartition from_prioritized(std::size_t lines, const std::vector<std::size_t>& members,
                                            double min_rate_bps = 0.0);

  std::size_t num_lines() const { return prioritized.size(); }
  bool is_prioritized(std::size_t line) const { return prioritized[line]; }
  std::vector<std::size_t> prioritized_lines() const;
  std::vector<std::size_t> constrained_lines() const;

  /// Throws ValidationError unless the partition covers exactly `lines` lines with finite,
  /// nonnegative rate targets.
  void validate(std::size_t lines) const;
};

}  // namespace gfast
