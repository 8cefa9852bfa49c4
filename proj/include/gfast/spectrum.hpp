#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfast/channel.hpp"
#include "gfast/partition.hpp"
#include "gfast/precoding.hpp"
#include "gfast/units.hpp"

namespace gfast {

struct PowerConstraints {
  Eigen::MatrixXd mask;       // N x L, watts per tone and line
  Eigen::VectorXd sum_power;  // L, watts per line
  double max_bits = 12.0;

  /// Same mask on every line, same budget on every line.
  static PowerConstraints uniform(const Eigen::VectorXd& mask_per_tone, std::size_t lines, double sum_power_w,
                                  double max_bits);
  void validate(std::size_t tones, std::size_t lines) const;
};

struct WsrSettings {
  double feasibility_tolerance = 1e-9;  // relative, on the sum-power complementarity conditions
  int max_outer_iterations = 200;
  int max_inner_iterations = 60;
  unsigned workers = 1;
};

/// Dual variables kept between calls: sum-power prices and per-tone mask prices.
struct WsrWarmStart {
  Eigen::VectorXd nu;
  std::vector<Eigen::VectorXd> mu;
};

struct WsrResult {
  Eigen::MatrixXd power;       // N x L stream power in watts (zero when disabled)
  Eigen::MatrixXd rates;       // N x L, bits per tone
  Eigen::VectorXd line_power;  // L, watts summed over tones
  double objective = 0.0;      // sum of w_l * bits, over tones and users
  double dual_value = 0.0;
  double dual_gap = 0.0;       // relative to the objective
  int iterations = 0;
  bool converged = false;
  WsrWarmStart warm;
};

/// Weighted sum-rate power allocation for a fixed precoder structure and disabled set.
WsrResult solve_wsr(const ChannelTensor& tensor, const PrecoderStructure& structure, const Eigen::VectorXd& weights,
                    const PowerConstraints& constraints, SnrGap gap, const DisabledSet& disabled,
                    const WsrSettings& settings = {}, const WsrWarmStart* warm = nullptr);

/// One disabling sweep: on every tone the weakest active line below `threshold_bits` is
/// disabled, preferring lines outside `partition`'s prioritized group.
DisabledSet update_disabled(const Eigen::MatrixXd& rates, const DisabledSet& disabled,
                            const PriorityPartition& partition, double threshold_bits = 1.0);

struct SpectrumSettings {
  WsrSettings wsr;
  int max_sweeps = 32;
  double disable_threshold_bits = 1.0;
};

struct PrecoderSolution {
  PrecoderKind kind = PrecoderKind::ZfLinear;
  EncodingOrder order;
  PrecoderStructure structure;
  DisabledSet disabled;
  Eigen::VectorXd weights;
  Eigen::MatrixXd power;      // N x L watts
  Eigen::MatrixXd rates;      // N x L bits per tone
  Eigen::VectorXd user_rate;  // L, bit/s
  Eigen::VectorXd line_power; // L, watts
  double objective = 0.0;
  double dual_gap = 0.0;
  bool converged = true;
  int sweeps = 0;
  int wsr_solves = 0;
  std::vector<double> objective_history;
  std::vector<std::string> warnings;
  WsrWarmStart warm;

  double sum_rate_bps() const { return user_rate.sum(); }
};

/// Alternates solve_wsr with disabling sweeps for fixed weights. A sweep that lowers the
/// weighted objective is reverted and ends the alternation. `protect` decides which lines
/// are disabled last. Zero-weight lines start disabled on every tone.
PrecoderSolution solve_weighted(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                                SnrGap gap, const EncodingOrder& order, const Eigen::VectorXd& weights,
                                const PriorityPartition& protect, const SpectrumSettings& settings = {},
                                const DisabledSet* initial_disabled = nullptr);

/// Sum-rate optimal point: unit weights, no disabling preference.
PrecoderSolution solve_srop(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                            SnrGap gap, const EncodingOrder& order, const SpectrumSettings& settings = {});

/// Packs a power allocation and its precoder into a solution record (user rates in bit/s).
PrecoderSolution make_solution(const ChannelTensor& tensor, PrecoderKind kind, const EncodingOrder& order,
                               PrecoderStructure structure, DisabledSet disabled, const Eigen::VectorXd& weights,
                               WsrResult wsr);

/// Solves once for a fixed disabled set (no sweeps).
PrecoderSolution solve_fixed(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                             SnrGap gap, const EncodingOrder& order, const Eigen::VectorXd& weights,
                             const DisabledSet& disabled, const SpectrumSettings& settings = {});

/// Independent re-check of a solution from explicit precoder matrices.
struct AuditReport {
  double max_mask_excess = 0.0;  // relative
  double max_sum_excess = 0.0;   // relative
  double max_bits = 0.0;
  double max_rate_mismatch = 0.0;  // |reported - recomputed| bits per tone
  double max_disabled_power = 0.0;
  bool ok(double tolerance, double max_bits_allowed) const;
};

AuditReport audit_solution(const ChannelTensor& tensor, const PrecoderSolution& solution,
                           const PowerConstraints& constraints, SnrGap gap);

}  // namespace gfast
