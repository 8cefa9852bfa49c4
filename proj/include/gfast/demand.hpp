#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfast/spectrum.hpp"

namespace gfast {

struct DemandSettings {
  SpectrumSettings spectrum;
  double step0 = 1.0;                 // alpha_0, normalized rate units
  double rate_tolerance = 5e-3;       // eps_r, relative to r_min
  double lambda_tolerance = 1e-3;     // eps_lambda, relative to max(1, lambda)
  double slackness_tolerance = 1e-2;  // eps_cs, normalized units
  int max_iterations = 200;           // subgradient steps per fixed disabled set
  int max_phases = 32;                // disabling updates
  double restore_factor = 1.5;
  int max_restore_rounds = 8;
  bool guard_prioritized = false;     // keep prioritized users at >= their SROP rate
};

/// One logged multiplier update: lambda_after = max(0, lambda_before + step * (r_min - rate)).
/// `step` is in multiplier per bit/s, rates in bit/s.
struct LambdaStep {
  int phase = 0;
  int iteration = 0;
  std::size_t line = 0;
  double lambda_before = 0.0;
  double step = 0.0;
  double r_min = 0.0;
  double rate = 0.0;
  double lambda_after = 0.0;
};

double subgradient_update(double lambda, double step, double r_min, double rate);

struct SolveReport {
  std::string solver;
  PriorityPartition partition;
  PrecoderSolution srop;
  PrecoderSolution solution;
  Eigen::VectorXd lambda;                // per line, zero for prioritized lines
  std::vector<LambdaStep> trajectory;
  Eigen::VectorXd violation;             // max(0, r_min - rate) in bit/s
  std::vector<std::size_t> n_max;        // heuristic only: tones kept per line (N for prioritized)
  std::vector<std::size_t> below_min_rate;      // constrained lines under r_min after solving
  std::vector<std::size_t> prioritized_below_srop;
  double slackness_residual = 0.0;
  double reference_rate = 1.0;           // R_ref, bit/s
  int iterations = 0;
  int phases = 0;
  int wsr_solves = 0;                    // after the SROP
  bool converged = false;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;

  /// Mean over prioritized lines of rate / SROP rate.
  double prioritized_normalized_rate() const;
  /// Largest (r_min - rate) / r_min over constrained lines with r_min > 0.
  double max_relative_violation() const;
};

/// Smallest number of leading tones whose rates sum to at least `target_bits`; 0 when the
/// target is zero. Returns `rates.size()` when the whole band is needed and
/// `rates.size() + 1` when even the whole band is not enough.
std::size_t allocation_limit(const Eigen::VectorXd& rates_bits, double target_bits);

/// SROP with the demand encoding order; r_min is checked against it.
PrecoderSolution demand_srop(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                             SnrGap gap, const EncodingOrder& order, const SpectrumSettings& settings = {});

SolveReport solve_alternating(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                              SnrGap gap, const PriorityPartition& partition, const EncodingOrder& order,
                              const DemandSettings& settings = {}, const PrecoderSolution* srop = nullptr);

SolveReport solve_heuristic(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                            SnrGap gap, const PriorityPartition& partition, const EncodingOrder& order,
                            const DemandSettings& settings = {}, const PrecoderSolution* srop = nullptr);

struct SolverComparison {
  Eigen::VectorXd srop_rate;
  SolveReport alternating;
  SolveReport heuristic;
  Eigen::VectorXd normalized_alternating;  // rate / SROP rate per line
  Eigen::VectorXd normalized_heuristic;
};

SolverComparison compare_solvers(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                                 SnrGap gap, const PriorityPartition& partition, const EncodingOrder& order,
                                 const DemandSettings& settings = {});

}  // namespace gfast
