#include "gfast/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gfast/errors.hpp"

namespace gfast {

PowerConstraints PowerConstraints::uniform(const Eigen::VectorXd& mask_per_tone, std::size_t lines,
                                           double sum_power_w, double max_bits) {
  PowerConstraints c;
  c.mask = mask_per_tone.replicate(1, static_cast<Eigen::Index>(lines));
  c.sum_power = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lines), sum_power_w);
  c.max_bits = max_bits;
  return c;
}

void PowerConstraints::validate(std::size_t tones, std::size_t lines) const {
  if (mask.rows() != static_cast<Eigen::Index>(tones) || mask.cols() != static_cast<Eigen::Index>(lines))
    throw ValidationError("constraints.mask", "must be N x L");
  if (sum_power.size() != static_cast<Eigen::Index>(lines))
    throw ValidationError("constraints.sum_power", "needs one budget per line");
  if (!mask.allFinite() || (mask.array() <= 0.0).any())
    throw ValidationError("constraints.mask", "entries must be positive and finite");
  if (!sum_power.allFinite() || (sum_power.array() <= 0.0).any())
    throw ValidationError("constraints.sum_power", "budgets must be positive and finite");
  if (!std::isfinite(max_bits) || max_bits < 1.0 || max_bits != std::floor(max_bits))
    throw ValidationError("b_max_bits", "must be an integer >= 1");
}

DisabledSet update_disabled(const Eigen::MatrixXd& rates, const DisabledSet& disabled,
                            const PriorityPartition& partition, double threshold_bits) {
  const std::size_t tones = disabled.num_tones();
  const std::size_t lines = disabled.num_lines();
  if (rates.rows() != static_cast<Eigen::Index>(tones) || rates.cols() != static_cast<Eigen::Index>(lines))
    throw ValidationError("rates", "must be N x L");
  partition.validate(lines);
  DisabledSet out = disabled;
  for (std::size_t n = 0; n < tones; ++n) {
    // Candidate with the lowest (group, rate) key: unprioritized lines go first.
    std::size_t pick = lines;
    bool pick_prioritized = true;
    double pick_rate = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < lines; ++l) {
      if (disabled.contains(n, l)) continue;
      const double r = rates(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l));
      if (!(r < threshold_bits)) continue;
      const bool prio = partition.is_prioritized(l);
      if (pick == lines || (pick_prioritized && !prio) || (prio == pick_prioritized && r < pick_rate)) {
        pick = l;
        pick_prioritized = prio;
        pick_rate = r;
      }
    }
    if (pick != lines) out.insert(n, pick);
  }
  return out;
}

PrecoderSolution make_solution(const ChannelTensor& tensor, PrecoderKind kind, const EncodingOrder& order,
                               PrecoderStructure structure, DisabledSet disabled, const Eigen::VectorXd& weights,
                               WsrResult wsr) {
  PrecoderSolution s;
  s.kind = kind;
  s.order = order;
  s.structure = std::move(structure);
  s.disabled = std::move(disabled);
  s.weights = weights;
  s.power = std::move(wsr.power);
  s.rates = std::move(wsr.rates);
  s.user_rate = s.rates.colwise().sum().transpose() * tensor.band().symbol_rate_hz;
  s.line_power = std::move(wsr.line_power);
  s.objective = wsr.objective;
  s.dual_gap = wsr.dual_gap;
  s.converged = wsr.converged;
  s.warm = std::move(wsr.warm);
  if (!wsr.converged) s.warnings.push_back("power allocation reached its iteration cap");
  return s;
}

PrecoderSolution solve_fixed(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                             SnrGap gap, const EncodingOrder& order, const Eigen::VectorXd& weights,
                             const DisabledSet& disabled, const SpectrumSettings& settings) {
  auto structure = build_precoder(kind, tensor, disabled, order, settings.wsr.workers);
  auto wsr = solve_wsr(tensor, structure, weights, constraints, gap, disabled, settings.wsr);
  auto s = make_solution(tensor, kind, order, std::move(structure), disabled, weights, std::move(wsr));
  s.wsr_solves = 1;
  s.objective_history.push_back(s.objective);
  return s;
}

PrecoderSolution solve_weighted(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                                SnrGap gap, const EncodingOrder& order, const Eigen::VectorXd& weights,
                                const PriorityPartition& protect, const SpectrumSettings& settings,
                                const DisabledSet* initial_disabled) {
  order.validate(tensor.num_lines());
  DisabledSet disabled = initial_disabled ? *initial_disabled : DisabledSet(tensor.num_tones(), tensor.num_lines());
  // A zero-weight user adds nothing to the objective, only ZF constraints on the others.
  for (std::size_t l = 0; l < tensor.num_lines(); ++l)
    if (weights(static_cast<Eigen::Index>(l)) == 0.0)
      for (std::size_t n = 0; n < tensor.num_tones(); ++n) disabled.insert(n, l);
  auto structure = build_precoder(kind, tensor, disabled, order, settings.wsr.workers);
  auto wsr = solve_wsr(tensor, structure, weights, constraints, gap, disabled, settings.wsr);
  int solves = 1;
  int sweeps = 0;
  std::vector<double> history{wsr.objective};
  std::vector<std::string> notes;
  bool fixed_point = false;
  for (int sweep = 0; sweep < settings.max_sweeps; ++sweep) {
    DisabledSet next = update_disabled(wsr.rates, disabled, protect, settings.disable_threshold_bits);
    if (next == disabled) {
      fixed_point = true;
      break;
    }
    auto next_structure = rebuild_precoder(structure, disabled, tensor, next, order, settings.wsr.workers);
    auto next_wsr = solve_wsr(tensor, next_structure, weights, constraints, gap, next, settings.wsr, &wsr.warm);
    ++solves;
    const double floor = wsr.objective - 1e-9 * std::max(1.0, std::abs(wsr.objective));
    if (next_wsr.objective < floor) {
      // Guarded acceptance: the sweep lowered the objective, keep the previous set.
      fixed_point = true;
      break;
    }
    disabled = std::move(next);
    structure = std::move(next_structure);
    wsr = std::move(next_wsr);
    history.push_back(wsr.objective);
    ++sweeps;
  }
  if (!fixed_point)
    notes.push_back("disabling sweeps hit the cap of " + std::to_string(settings.max_sweeps) +
                    "; returning the best set found");
  auto s = make_solution(tensor, kind, order, std::move(structure), std::move(disabled), weights, std::move(wsr));
  s.sweeps = sweeps;
  s.wsr_solves = solves;
  s.objective_history = std::move(history);
  s.warnings.insert(s.warnings.end(), notes.begin(), notes.end());
  return s;
}

PrecoderSolution solve_srop(const ChannelTensor& tensor, PrecoderKind kind, const PowerConstraints& constraints,
                            SnrGap gap, const EncodingOrder& order, const SpectrumSettings& settings) {
  const auto lines = tensor.num_lines();
  return solve_weighted(tensor, kind, constraints, gap, order,
                        Eigen::VectorXd::Ones(static_cast<Eigen::Index>(lines)), PriorityPartition::all(lines),
                        settings);
}

bool AuditReport::ok(double tolerance, double max_bits_allowed) const {
  return max_mask_excess <= tolerance && max_sum_excess <= tolerance && max_bits <= max_bits_allowed + 1e-9 &&
         max_rate_mismatch <= tolerance && max_disabled_power == 0.0;
}

AuditReport audit_solution(const ChannelTensor& tensor, const PrecoderSolution& solution,
                           const PowerConstraints& constraints, SnrGap gap) {
  AuditReport report;
  const auto lines = static_cast<Eigen::Index>(tensor.num_lines());
  Eigen::VectorXd line_total = Eigen::VectorXd::Zero(lines);
  std::vector<double> noise(static_cast<std::size_t>(lines));
  for (std::size_t n = 0; n < tensor.num_tones(); ++n) {
    const auto row = static_cast<Eigen::Index>(n);
    const auto& tone = solution.structure.tones[n];
    const auto a = static_cast<Eigen::Index>(tone.users.size());
    std::vector<double> p(static_cast<std::size_t>(a));
    Eigen::MatrixXcd transmit = tone.columns;
    for (Eigen::Index s = 0; s < a; ++s) {
      p[static_cast<std::size_t>(s)] = solution.power(row, static_cast<Eigen::Index>(tone.users[static_cast<std::size_t>(s)]));
      transmit.col(s) *= std::sqrt(p[static_cast<std::size_t>(s)]);
    }
    // Per-line power is the diagonal of T diag(p) T^H.
    const Eigen::VectorXd per_line = (transmit * transmit.adjoint()).diagonal().real();
    for (Eigen::Index j = 0; j < lines; ++j) {
      const double m = constraints.mask(row, j);
      report.max_mask_excess = std::max(report.max_mask_excess, (per_line(j) - m) / m);
      line_total(j) += per_line(j);
      noise[static_cast<std::size_t>(j)] = tensor.noise(n, static_cast<std::size_t>(j));
    }
    for (Eigen::Index l = 0; l < lines; ++l) {
      if (solution.disabled.contains(n, static_cast<std::size_t>(l)))
        report.max_disabled_power = std::max(report.max_disabled_power, solution.power(row, l));
      report.max_bits = std::max(report.max_bits, solution.rates(row, l));
    }
    if (a == 0) continue;
    const Eigen::VectorXd recomputed =
        explicit_stream_rates(solution.kind, tensor.matrix(n), tone, p, gap, noise);
    for (Eigen::Index s = 0; s < a; ++s) {
      const double reported = solution.rates(row, static_cast<Eigen::Index>(tone.users[static_cast<std::size_t>(s)]));
      report.max_rate_mismatch = std::max(report.max_rate_mismatch, std::abs(reported - recomputed(s)));
    }
  }
  for (Eigen::Index j = 0; j < lines; ++j)
    report.max_sum_excess =
        std::max(report.max_sum_excess, (line_total(j) - constraints.sum_power(j)) / constraints.sum_power(j));
  report.max_mask_excess = std::max(0.0, report.max_mask_excess);
  report.max_sum_excess = std::max(0.0, report.max_sum_excess);
  return report;
}

}  // namespace gfast
