#include "gfast/partition.hpp"

#include <cmath>
#include <string>

#include "gfast/errors.hpp"

namespace gfast {

PriorityPartition PriorityPartition::all(std::size_t lines) {
  return PriorityPartition{std::vector<bool>(lines, true), std::vector<double>(lines, 0.0)};
}

PriorityPartition PriorityPartition::from_prioritized(std::size_t lines, const std::vector<std::size_t>& members,
                                                      double min_rate_bps) {
  PriorityPartition p{std::vector<bool>(lines, false), std::vector<double>(lines, min_rate_bps)};
  for (auto m : members) {
    if (m >= lines) throw ValidationError("partition.prioritized", "line " + std::to_string(m) + " out of range");
    p.prioritized[m] = true;
    p.min_rate_bps[m] = 0.0;
  }
  return p;
}

std::vector<std::size_t> PriorityPartition::prioritized_lines() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < prioritized.size(); ++l)
    if (prioritized[l]) out.push_back(l);
  return out;
}

std::vector<std::size_t> PriorityPartition::constrained_lines() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < prioritized.size(); ++l)
    if (!prioritized[l]) out.push_back(l);
  return out;
}

void PriorityPartition::validate(std::size_t lines) const {
  if (prioritized.size() != lines)
    throw ValidationError("partition", "covers " + std::to_string(prioritized.size()) + " lines, scenario has " +
                                           std::to_string(lines));
  if (min_rate_bps.size() != lines)
    throw ValidationError("partition.min_rate_bps", "needs one entry per line");
  for (std::size_t l = 0; l < lines; ++l) {
    if (!std::isfinite(min_rate_bps[l]) || min_rate_bps[l] < 0.0)
      throw ValidationError("partition.min_rate_bps[" + std::to_string(l) + "]", "must be finite and >= 0");
  }
}

}  // namespace gfast
