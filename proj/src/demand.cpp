#include "gfast/demand.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "gfast/errors.hpp"

namespace gfast {

double subgradient_update(double lambda, double step, double r_min, double rate) {
  return std::max(0.0, lambda + step * (r_min - rate));
}

double SolveReport::prioritized_normalized_rate() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (auto l : partition.prioritized_lines()) {
    const auto i = static_cast<Eigen::Index>(l);
    if (srop.user_rate(i) <= 0.0) continue;
    sum += solution.user_rate(i) / srop.user_rate(i);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double SolveReport::max_relative_violation() const {
  double worst = 0.0;
  for (auto l : partition.constrained_lines()) {
    const double r_min = partition.min_rate_bps[l];
    if (r_min <= 0.0) continue;
    worst = std::max(worst, (r_min - solution.user_rate(static_cast<Eigen::Index>(l))) / r_min);
  }
  return worst;
}

std::size_t allocation_limit(const Eigen::VectorXd& rates_bits, double target_bits) {
  if (target_bits <= 0.0) return 0;
  // A target taken from the same rates (full SROP rate) must not miss by summation order.
  const double reach = target_bits * (1.0 - 1e-12);
  double prefix = 0.0;
  for (Eigen::Index n = 0; n < rates_bits.size(); ++n) {
    prefix += rates_bits(n);
    if (prefix >= reach) return static_cast<std::size_t>(n) + 1;
  }
  return static_cast<std::size_t>(rates_bits.size()) + 1;
}

PrecoderSolution demand_srop(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                             SnrGap gap, const EncodingOrder& order, const SpectrumSettings& settings) {
  return solve_srop(tensor, kind, constraints, gap, order, settings);
}

namespace {

using Clock = std::chrono::steady_clock;

// Relative slack when comparing a target against a rate computed from the same tones.
constexpr double kRateSlack = 1e-9;

void check_targets(const PriorityPartition& partition, const PrecoderSolution& srop) {
  for (auto l : partition.constrained_lines()) {
    const double r_min = partition.min_rate_bps[l];
    const double available = srop.user_rate(static_cast<Eigen::Index>(l));
    if (r_min > available * (1.0 + kRateSlack))
      throw ValidationError("partition.min_rate_bps[" + std::to_string(l) + "]",
                            "target " + std::to_string(r_min) + " bit/s exceeds the sum-rate optimal rate " +
                                std::to_string(available) + " bit/s of that line");
  }
}

void finish_report(SolveReport& report, double rate_tolerance) {
  const auto& part = report.partition;
  const auto lines = static_cast<Eigen::Index>(part.num_lines());
  report.violation = Eigen::VectorXd::Zero(lines);
  report.below_min_rate.clear();
  report.prioritized_below_srop.clear();
  report.slackness_residual = 0.0;
  for (Eigen::Index l = 0; l < lines; ++l) {
    const auto line = static_cast<std::size_t>(l);
    const double rate = report.solution.user_rate(l);
    if (part.is_prioritized(line)) {
      if (rate < report.srop.user_rate(l) * (1.0 - 1e-6)) report.prioritized_below_srop.push_back(line);
      continue;
    }
    const double r_min = part.min_rate_bps[line];
    report.violation(l) = std::max(0.0, r_min - rate);
    if (rate < r_min * (1.0 - rate_tolerance)) report.below_min_rate.push_back(line);
    if (report.lambda.size() == lines)
      report.slackness_residual =
          std::max(report.slackness_residual, report.lambda(l) * std::abs(rate - r_min) / report.reference_rate);
  }
  if (!report.below_min_rate.empty())
    report.warnings.push_back(std::to_string(report.below_min_rate.size()) +
                              " constrained line(s) end below their minimum rate");
  if (!report.prioritized_below_srop.empty())
    report.warnings.push_back(std::to_string(report.prioritized_below_srop.size()) +
                              " prioritized line(s) end below their sum-rate optimal rate");
}

struct Iterate {
  Eigen::VectorXd lambda;
  Eigen::VectorXd kappa;
  WsrResult wsr;
  Eigen::VectorXd rate;
  double violation = std::numeric_limits<double>::infinity();
  double prioritized_sum = 0.0;
};

struct PhaseOutcome {
  Iterate last;
  Iterate best;
  bool converged = false;
  int iterations = 0;
};

class Alternation {
 public:
  Alternation(const ChannelTensor& tensor, const PowerConstraints& constraints, SnrGap gap,
              const PriorityPartition& partition, const DemandSettings& settings, const PrecoderSolution& srop,
              double reference_rate, SolveReport& report)
      : tensor_(tensor),
        constraints_(constraints),
        gap_(gap),
        partition_(partition),
        settings_(settings),
        srop_(srop),
        reference_(reference_rate),
        report_(report),
        constrained_(partition.constrained_lines()),
        prioritized_(partition.prioritized_lines()) {}

  Eigen::VectorXd weights(const Eigen::VectorXd& lambda, const Eigen::VectorXd& kappa) const {
    Eigen::VectorXd w = lambda;
    for (auto l : prioritized_) w(static_cast<Eigen::Index>(l)) = 1.0 + kappa(static_cast<Eigen::Index>(l));
    return w;
  }

  Iterate solve(const PrecoderStructure& structure, const DisabledSet& disabled, const Eigen::VectorXd& lambda,
                const Eigen::VectorXd& kappa, WsrWarmStart& warm) {
    Iterate it;
    it.lambda = lambda;
    it.kappa = kappa;
    it.wsr = solve_wsr(tensor_, structure, weights(lambda, kappa), constraints_, gap_, disabled,
                       settings_.spectrum.wsr, &warm);
    ++report_.wsr_solves;
    warm = it.wsr.warm;
    it.rate = it.wsr.rates.colwise().sum().transpose() * tensor_.band().symbol_rate_hz;
    it.violation = 0.0;
    for (auto l : constrained_) {
      const double r_min = partition_.min_rate_bps[l];
      if (r_min > 0.0) it.violation = std::max(it.violation, (r_min - it.rate(static_cast<Eigen::Index>(l))) / r_min);
    }
    it.prioritized_sum = 0.0;
    for (auto l : prioritized_) it.prioritized_sum += it.rate(static_cast<Eigen::Index>(l));
    return it;
  }

  double unit(Eigen::Index line) const {
    const double r = srop_.user_rate(line);
    return r > 0.0 ? r : reference_;
  }

  static bool better(const Iterate& a, const Iterate& b) {
    if (a.violation != b.violation) return a.violation < b.violation;
    return a.prioritized_sum > b.prioritized_sum;
  }

  double slackness(const Iterate& it) const {
    double worst = 0.0;
    for (auto l : constrained_) {
      const auto i = static_cast<Eigen::Index>(l);
      worst = std::max(worst, it.lambda(i) * std::abs(it.rate(i) - partition_.min_rate_bps[l]) / reference_);
    }
    return worst;
  }

  // Subgradient iterations on the multipliers for a fixed disabled set.
  PhaseOutcome run_phase(int phase, const PrecoderStructure& structure, const DisabledSet& disabled,
                         Eigen::VectorXd lambda, Eigen::VectorXd kappa, WsrWarmStart& warm) {
    PhaseOutcome out;
    double last_change = std::numeric_limits<double>::infinity();
    // Step control: a line's step scale halves whenever its subgradient changes sign and
    // grows back (up to 1) while the sign holds.
    Eigen::VectorXd damping = Eigen::VectorXd::Ones(lambda.size());
    Eigen::VectorXd previous_g;
    for (int t = 1; t <= settings_.max_iterations; ++t) {
      Iterate it = solve(structure, disabled, lambda, kappa, warm);
      ++report_.iterations;
      out.iterations = t;
      if (t == 1 || better(it, out.best)) out.best = it;
      const bool feasible = it.violation <= settings_.rate_tolerance;
      if (feasible && last_change <= settings_.lambda_tolerance && slackness(it) <= settings_.slackness_tolerance) {
        out.last = std::move(it);
        out.converged = true;
        return out;
      }
      // Subgradient in units of each line's own SROP rate, so the bit/s terms of the update are O(1).
      Eigen::VectorXd g = Eigen::VectorXd::Zero(lambda.size());
      for (auto l : constrained_) {
        const auto i = static_cast<Eigen::Index>(l);
        g(i) = (partition_.min_rate_bps[l] - it.rate(i)) / unit(i);
      }
      if (settings_.guard_prioritized)
        for (auto l : prioritized_) {
          const auto i = static_cast<Eigen::Index>(l);
          g(i) = (srop_.user_rate(i) - it.rate(i)) / unit(i);
        }
      if (previous_g.size() == g.size())
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          const double turn = g(i) * previous_g(i);
          if (turn < 0.0)
            damping(i) *= 0.5;
          else if (turn > 0.0)
            damping(i) = std::min(1.0, damping(i) * 1.5);
        }
      previous_g = g;
      const double alpha = settings_.step0 / (std::sqrt(static_cast<double>(t)) * std::max(1.0, g.norm()));
      last_change = 0.0;
      for (auto l : constrained_) {
        const auto i = static_cast<Eigen::Index>(l);
        LambdaStep rec;
        rec.phase = phase;
        rec.iteration = t;
        rec.line = l;
        rec.lambda_before = lambda(i);
        rec.step = alpha * damping(i) / unit(i);
        rec.r_min = partition_.min_rate_bps[l];
        rec.rate = it.rate(i);
        rec.lambda_after = subgradient_update(rec.lambda_before, rec.step, rec.r_min, rec.rate);
        last_change = std::max(last_change, std::abs(rec.lambda_after - lambda(i)) / std::max(1.0, lambda(i)));
        lambda(i) = rec.lambda_after;
        report_.trajectory.push_back(rec);
      }
      if (settings_.guard_prioritized)
        for (auto l : prioritized_) {
          const auto i = static_cast<Eigen::Index>(l);
          const double next =
              subgradient_update(kappa(i), alpha * damping(i) / unit(i), srop_.user_rate(i), it.rate(i));
          last_change = std::max(last_change, std::abs(next - kappa(i)) / std::max(1.0, kappa(i)));
          kappa(i) = next;
        }
      out.last = std::move(it);
    }
    return out;
  }

  // Bounded feasibility restoration: raise the multipliers of violated lines.
  Iterate restore(const PrecoderStructure& structure, const DisabledSet& disabled, Iterate start,
                  WsrWarmStart& warm) {
    Iterate current = std::move(start);
    for (int round = 0; round < settings_.max_restore_rounds && current.violation > settings_.rate_tolerance;
         ++round) {
      Eigen::VectorXd lambda = current.lambda;
      for (auto l : constrained_) {
        const auto i = static_cast<Eigen::Index>(l);
        const double r_min = partition_.min_rate_bps[l];
        if (r_min > 0.0 && current.rate(i) < r_min * (1.0 - settings_.rate_tolerance))
          lambda(i) = std::max(lambda(i) * settings_.restore_factor, 0.1);
      }
      current = solve(structure, disabled, lambda, current.kappa, warm);
    }
    return current;
  }

 private:
  const ChannelTensor& tensor_;
  const PowerConstraints& constraints_;
  SnrGap gap_;
  const PriorityPartition& partition_;
  const DemandSettings& settings_;
  const PrecoderSolution& srop_;
  double reference_;
  SolveReport& report_;
  std::vector<std::size_t> constrained_;
  std::vector<std::size_t> prioritized_;
};

}  // namespace

SolveReport solve_alternating(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                              SnrGap gap, const PriorityPartition& partition, const EncodingOrder& order,
                              const DemandSettings& settings, const PrecoderSolution* srop) {
  const auto start = Clock::now();
  const auto lines = tensor.num_lines();
  partition.validate(lines);
  order.validate(lines);
  SolveReport report;
  report.solver = "alternating";
  report.partition = partition;
  report.srop = srop ? *srop : demand_srop(tensor, kind, constraints, gap, order, settings.spectrum);
  check_targets(partition, report.srop);

  const auto constrained = partition.constrained_lines();
  double reference = 0.0;
  for (auto l : constrained) reference += report.srop.user_rate(static_cast<Eigen::Index>(l));
  if (!constrained.empty()) reference /= static_cast<double>(constrained.size());
  report.reference_rate = reference > 0.0 ? reference : 1.0;

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lines));
  for (auto l : constrained) lambda(static_cast<Eigen::Index>(l)) = 1.0;
  Eigen::VectorXd kappa = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lines));

  Alternation alt(tensor, constraints, gap, partition, settings, report.srop, report.reference_rate, report);
  DisabledSet disabled = report.srop.disabled;
  PrecoderStructure structure = report.srop.structure;
  WsrWarmStart warm = report.srop.warm;

  PhaseOutcome phase = alt.run_phase(0, structure, disabled, lambda, kappa, warm);
  report.phases = 1;
  Iterate accepted;
  if (phase.converged) {
    accepted = std::move(phase.last);
    report.converged = true;
  } else {
    report.warnings.push_back("subgradient iterations hit the cap of " + std::to_string(settings.max_iterations) +
                              "; restoring feasibility from the best iterate");
    accepted = alt.restore(structure, disabled, std::move(phase.best), warm);
  }

  // Disabling updates, one per converged phase, kept only if they help the prioritized users.
  for (int p = 1; report.converged && p < settings.max_phases; ++p) {
    DisabledSet next = update_disabled(accepted.wsr.rates, disabled, partition,
                                       settings.spectrum.disable_threshold_bits);
    if (next == disabled) break;
    PrecoderStructure next_structure =
        rebuild_precoder(structure, disabled, tensor, next, order, settings.spectrum.wsr.workers);
    WsrWarmStart next_warm = accepted.wsr.warm;
    PhaseOutcome trial = alt.run_phase(p, next_structure, next, accepted.lambda, accepted.kappa, next_warm);
    ++report.phases;
    const bool keeps_order = trial.converged && trial.last.violation <= settings.rate_tolerance &&
                             trial.last.prioritized_sum >= accepted.prioritized_sum * (1.0 - kRateSlack);
    if (!keeps_order) break;
    accepted = std::move(trial.last);
    disabled = std::move(next);
    structure = std::move(next_structure);
    warm = std::move(next_warm);
  }

  report.lambda = accepted.lambda;
  Eigen::VectorXd weights = alt.weights(accepted.lambda, accepted.kappa);
  report.solution =
      make_solution(tensor, kind, order, std::move(structure), std::move(disabled), weights, std::move(accepted.wsr));
  report.solution.wsr_solves = report.wsr_solves;
  finish_report(report, settings.rate_tolerance);
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

SolveReport solve_heuristic(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                            SnrGap gap, const PriorityPartition& partition, const EncodingOrder& order,
                            const DemandSettings& settings, const PrecoderSolution* srop) {
  const auto start = Clock::now();
  const auto lines = tensor.num_lines();
  const auto tones = tensor.num_tones();
  partition.validate(lines);
  order.validate(lines);
  SolveReport report;
  report.solver = "heuristic";
  report.partition = partition;
  report.srop = srop ? *srop : demand_srop(tensor, kind, constraints, gap, order, settings.spectrum);
  check_targets(partition, report.srop);

  const double symbol_rate = tensor.band().symbol_rate_hz;
  DisabledSet disabled = report.srop.disabled;
  report.n_max.assign(lines, tones);
  for (auto l : partition.constrained_lines()) {
    const auto i = static_cast<Eigen::Index>(l);
    std::size_t limit = allocation_limit(report.srop.rates.col(i), partition.min_rate_bps[l] / symbol_rate);
    if (limit > tones) limit = tones;
    report.n_max[l] = limit;
    for (std::size_t n = limit; n < tones; ++n) disabled.insert(n, l);
  }

  report.solution = solve_fixed(tensor, kind, constraints, gap, order,
                                Eigen::VectorXd::Ones(static_cast<Eigen::Index>(lines)), disabled, settings.spectrum);
  report.wsr_solves = 1;
  report.iterations = 1;
  report.phases = 1;
  report.converged = report.solution.converged;
  // Deterioration check against the exact target, not the eps_r band.
  finish_report(report, 0.0);
  for (auto l : report.below_min_rate)
    report.warnings.push_back("line " + std::to_string(l) + " fell below its minimum rate after re-optimization");
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

SolverComparison compare_solvers(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                                 SnrGap gap, const PriorityPartition& partition, const EncodingOrder& order,
                                 const DemandSettings& settings) {
  const auto srop = demand_srop(tensor, kind, constraints, gap, order, settings.spectrum);
  SolverComparison cmp;
  cmp.srop_rate = srop.user_rate;
  cmp.alternating = solve_alternating(tensor, kind, constraints, gap, partition, order, settings, &srop);
  cmp.heuristic = solve_heuristic(tensor, kind, constraints, gap, partition, order, settings, &srop);
  auto normalize = [&](const Eigen::VectorXd& rate) {
    Eigen::VectorXd out(rate.size());
    for (Eigen::Index l = 0; l < rate.size(); ++l)
      out(l) = cmp.srop_rate(l) > 0.0 ? rate(l) / cmp.srop_rate(l) : 0.0;
    return out;
  };
  cmp.normalized_alternating = normalize(cmp.alternating.solution.user_rate);
  cmp.normalized_heuristic = normalize(cmp.heuristic.solution.user_rate);
  return cmp;
}

}  // namespace gfast
