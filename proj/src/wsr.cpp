#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gfast/errors.hpp"
#include "gfast/parallel.hpp"
#include "gfast/spectrum.hpp"

namespace gfast {

namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kInnerTolerance = 1e-11;

// Per-tone data in scaled power units (watts / scale).
struct ToneProblem {
  std::vector<std::size_t> users;
  Eigen::MatrixXd map;  // L x A
  Eigen::VectorXd a;    // gain / (gap * noise), scaled
  Eigen::VectorXd w;
  Eigen::VectorXd ub;
  Eigen::VectorXd mask;
  std::vector<Eigen::Index> rows;  // lines that carry power of some stream
};

struct ToneState {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  Eigen::VectorXd usage;
  double value = 0.0;
};

struct DualPoint {
  Eigen::VectorXd nu;
  std::vector<Eigen::VectorXd> mu;
  std::vector<ToneState> tones;
  std::vector<Eigen::MatrixXd> hess;
  Eigen::VectorXd usage;
  Eigen::MatrixXd hessian;
  double value = 0.0;
};

double stream_power(double w, double a, double ub, double q) {
  if (w <= 0.0 || a <= 0.0) return 0.0;
  if (q <= 0.0) return ub;
  return std::clamp(w / (kLn2 * q) - 1.0 / a, 0.0, ub);
}

bool is_free(const ToneProblem& t, const ToneState& s, Eigen::Index k) {
  return t.w(k) > 0.0 && t.a(k) > 0.0 && s.q(k) > 0.0 && s.p(k) > 0.0 && s.p(k) < t.ub(k);
}

void evaluate_tone(const ToneProblem& t, const Eigen::VectorXd& nu, const Eigen::VectorXd& mu, ToneState& s) {
  const Eigen::VectorXd price = nu + mu;
  s.q = t.map.transpose() * price;
  const auto n = t.a.size();
  s.p.resize(n);
  double value = mu.dot(t.mask);
  for (Eigen::Index k = 0; k < n; ++k) {
    s.p(k) = stream_power(t.w(k), t.a(k), t.ub(k), s.q(k));
    if (s.p(k) > 0.0) value += t.w(k) * std::log2(1.0 + t.a(k) * s.p(k)) - s.q(k) * s.p(k);
  }
  s.usage = t.map * s.p;
  s.value = value;
}

// Largest normalized violation of the mask-price optimality conditions.
double mask_residual(const ToneProblem& t, const Eigen::VectorXd& mu, const ToneState& s) {
  double worst = 0.0;
  for (auto j : t.rows) {
    const double g = (t.mask(j) - s.usage(j)) / t.mask(j);
    worst = std::max(worst, mu(j) > 0.0 ? std::abs(g) : std::max(0.0, -g));
  }
  return worst;
}

// Exact minimization of the tone dual over mu_j with the other prices fixed.
void coordinate_step(const ToneProblem& t, const Eigen::VectorXd& nu, Eigen::VectorXd& mu, ToneState& s,
                     Eigen::Index j) {
  mu(j) = 0.0;
  evaluate_tone(t, nu, mu, s);
  if (s.usage(j) <= t.mask(j)) return;
  // At `hi` every stream on row j has zero power, so the row is slack.
  double hi = 0.0;
  for (Eigen::Index k = 0; k < t.a.size(); ++k) {
    if (t.map(j, k) <= 0.0 || t.w(k) <= 0.0 || t.a(k) <= 0.0) continue;
    hi = std::max(hi, (t.w(k) * t.a(k) / kLn2 - s.q(k)) / t.map(j, k));
  }
  hi = hi * (1.0 + 1e-12) + std::numeric_limits<double>::min();
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    mu(j) = mid;
    evaluate_tone(t, nu, mu, s);
    if (s.usage(j) > t.mask(j))
      lo = mid;
    else
      hi = mid;
  }
  mu(j) = hi;
  evaluate_tone(t, nu, mu, s);
}

// Minimizes the tone dual over the mask prices mu >= 0 (projected Newton with a
// coordinate-descent fallback).
void solve_tone(const ToneProblem& t, const Eigen::VectorXd& nu, Eigen::VectorXd& mu, ToneState& s, int max_it) {
  for (Eigen::Index j = 0; j < mu.size(); ++j)
    if (std::find(t.rows.begin(), t.rows.end(), j) == t.rows.end()) mu(j) = 0.0;
  evaluate_tone(t, nu, mu, s);
  if (mask_residual(t, mu, s) <= kInnerTolerance) return;
  // Cheap first try: no mask binding at all.
  if (mu.any()) {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(mu.size());
    ToneState trial;
    evaluate_tone(t, nu, zero, trial);
    if (mask_residual(t, zero, trial) <= kInnerTolerance) {
      mu = zero;
      s = std::move(trial);
      return;
    }
  }

  ToneState trial;
  for (int it = 0; it < max_it; ++it) {
    const double residual = mask_residual(t, mu, s);
    if (residual <= kInnerTolerance) return;
    std::vector<Eigen::Index> active;
    for (auto j : t.rows)
      if (mu(j) > 0.0 || s.usage(j) > t.mask(j)) active.push_back(j);
    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(na, na);
    Eigen::VectorXd grad(na);
    for (Eigen::Index r = 0; r < na; ++r) grad(r) = t.mask(active[r]) - s.usage(active[r]);
    for (Eigen::Index k = 0; k < t.a.size(); ++k) {
      if (!is_free(t, s, k)) continue;
      const double h = t.w(k) / (kLn2 * s.q(k) * s.q(k));
      for (Eigen::Index r = 0; r < na; ++r) {
        const double mr = t.map(active[r], k);
        if (mr == 0.0) continue;
        for (Eigen::Index c = 0; c < na; ++c) hess(r, c) += h * mr * t.map(active[c], k);
      }
    }
    bool stepped = false;
    const double diag_max = hess.diagonal().maxCoeff();
    if (diag_max > 0.0 && hess.diagonal().minCoeff() > 1e-14 * diag_max) {
      hess.diagonal().array() += 1e-14 * diag_max;
      const Eigen::VectorXd delta = hess.ldlt().solve(-grad);
      if (delta.allFinite()) {
        double step = 1.0;
        for (int ls = 0; ls < 40 && !stepped; ++ls, step *= 0.5) {
          Eigen::VectorXd cand = mu;
          for (Eigen::Index r = 0; r < na; ++r) cand(active[r]) = std::max(0.0, mu(active[r]) + step * delta(r));
          evaluate_tone(t, nu, cand, trial);
          const double decrease = (cand - mu).dot(t.mask - s.usage);
          const bool armijo = trial.value <= s.value + 1e-4 * decrease;
          const bool flat = trial.value <= s.value + 1e-13 * std::abs(s.value);
          if (armijo || (flat && mask_residual(t, cand, trial) < 0.5 * residual)) {
            mu = std::move(cand);
            std::swap(s, trial);
            stepped = true;
          }
        }
      }
    }
    if (!stepped)
      for (auto j : active) coordinate_step(t, nu, mu, s, j);
  }
}

// Projection of the free-stream sensitivity onto directions that keep the binding mask
// rows fixed; its Gram matrix is the tone's contribution to the Hessian of the dual in nu.
Eigen::MatrixXd tone_hessian(const ToneProblem& t, const Eigen::VectorXd& mu, const ToneState& s,
                             Eigen::Index lines) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index k = 0; k < t.a.size(); ++k)
    if (is_free(t, s, k)) free.push_back(k);
  if (free.empty()) return Eigen::MatrixXd::Zero(lines, lines);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(free.size()), lines);
  for (std::size_t f = 0; f < free.size(); ++f) {
    const auto k = free[f];
    const double h = t.w(k) / (kLn2 * s.q(k) * s.q(k));
    y.row(static_cast<Eigen::Index>(f)) = std::sqrt(h) * t.map.col(k).transpose();
  }
  std::vector<Eigen::Index> binding;
  for (auto j : t.rows)
    if (mu(j) > 0.0) binding.push_back(j);
  if (!binding.empty()) {
    Eigen::MatrixXd yb(y.rows(), static_cast<Eigen::Index>(binding.size()));
    for (std::size_t b = 0; b < binding.size(); ++b) yb.col(static_cast<Eigen::Index>(b)) = y.col(binding[b]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(yb);
    const auto rank = qr.rank();
    if (rank > 0) {
      const Eigen::MatrixXd q = Eigen::MatrixXd(qr.householderQ()).leftCols(rank);
      y -= q * (q.transpose() * y);
    }
  }
  return y.transpose() * y;
}

class DualSolver {
 public:
  DualSolver(std::vector<ToneProblem> tones, Eigen::VectorXd budget, Eigen::Index lines, const WsrSettings& settings)
      : tones_(std::move(tones)), budget_(std::move(budget)), lines_(lines), settings_(settings) {}

  void evaluate(DualPoint& point, bool with_hessian) const {
    const std::size_t n = tones_.size();
    point.tones.resize(n);
    if (with_hessian) point.hess.resize(n);
    parallel_for(n, settings_.workers, [&](std::size_t i) {
      solve_tone(tones_[i], point.nu, point.mu[i], point.tones[i], settings_.max_inner_iterations);
      if (with_hessian) point.hess[i] = tone_hessian(tones_[i], point.mu[i], point.tones[i], lines_);
    });
    point.usage = Eigen::VectorXd::Zero(lines_);
    point.value = point.nu.dot(budget_);
    for (std::size_t i = 0; i < n; ++i) {
      point.usage += point.tones[i].usage;
      point.value += point.tones[i].value;
    }
    if (with_hessian) {
      point.hessian = Eigen::MatrixXd::Zero(lines_, lines_);
      for (const auto& h : point.hess) point.hessian += h;
      point.hess.clear();
    }
  }

  double residual(const DualPoint& point) const {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < lines_; ++j) {
      const double g = (budget_(j) - point.usage(j)) / budget_(j);
      worst = std::max(worst, point.nu(j) > 0.0 ? std::abs(g) : std::max(0.0, -g));
    }
    return worst;
  }

  double max_load(const DualPoint& point) const { return (point.usage.array() / budget_.array()).maxCoeff(); }

  // Common price on all lines that brings the most loaded line to its budget.
  void scalar_start(DualPoint& point) const {
    auto at = [&](double theta) {
      point.nu.setConstant(theta);
      evaluate(point, false);
      return max_load(point);
    };
    if (at(0.0) <= 1.0) return;
    double lo = 0.0;
    double hi = 1.0;
    if (at(hi) <= 1.0) {
      lo = hi;
      for (int i = 0; i < 400 && at(lo) <= 1.0; ++i) {
        hi = lo;
        lo *= 0.5;
      }
    } else {
      for (int i = 0; i < 400 && at(hi) > 1.0; ++i) {
        lo = hi;
        hi *= 2.0;
      }
    }
    for (int i = 0; i < 40 && hi - lo > 1e-6 * hi; ++i) {
      const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
      if (at(mid) > 1.0)
        lo = mid;
      else
        hi = mid;
    }
    at(hi);
  }

  // Exact one-dimensional minimization over nu_j (the load of line j is nonincreasing in nu_j).
  void coordinate_step(DualPoint& point, Eigen::Index j) const {
    auto load = [&](double v) {
      point.nu(j) = v;
      evaluate(point, false);
      return point.usage(j) / budget_(j);
    };
    const double start = point.nu(j);
    if (load(0.0) <= 1.0) return;
    double lo = 0.0;
    double hi = std::max(start, 1e-6);
    for (int i = 0; i < 400 && load(hi) > 1.0; ++i) {
      lo = hi;
      hi *= 4.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
      const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
      if (load(mid) > 1.0)
        lo = mid;
      else
        hi = mid;
    }
    load(hi);
  }

  int run(DualPoint& point, bool& converged) const {
    evaluate(point, true);
    converged = false;
    int it = 0;
    for (; it < settings_.max_outer_iterations; ++it) {
      const double res = residual(point);
      if (res <= settings_.feasibility_tolerance) {
        converged = true;
        break;
      }
      const Eigen::VectorXd grad = budget_ - point.usage;
      std::vector<Eigen::Index> active;
      for (Eigen::Index j = 0; j < lines_; ++j)
        if (point.nu(j) > 0.0 || grad(j) < 0.0) active.push_back(j);
      const auto na = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd hess(na, na);
      Eigen::VectorXd g(na);
      for (Eigen::Index r = 0; r < na; ++r) {
        g(r) = grad(active[r]);
        for (Eigen::Index c = 0; c < na; ++c) hess(r, c) = point.hessian(active[r], active[c]);
      }
      bool stepped = false;
      const double diag_max = na > 0 ? hess.diagonal().maxCoeff() : 0.0;
      if (na > 0 && diag_max > 0.0 && hess.diagonal().minCoeff() > 1e-13 * diag_max) {
        hess.diagonal().array() += 1e-13 * diag_max;
        const Eigen::VectorXd delta = hess.ldlt().solve(-g);
        if (delta.allFinite()) {
          double step = 1.0;
          for (int ls = 0; ls < 30 && !stepped; ++ls, step *= 0.5) {
            DualPoint cand;
            cand.nu = point.nu;
            cand.mu = point.mu;
            for (Eigen::Index r = 0; r < na; ++r)
              cand.nu(active[r]) = std::max(0.0, point.nu(active[r]) + step * delta(r));
            evaluate(cand, true);
            const double decrease = (cand.nu - point.nu).dot(grad);
            const bool armijo = cand.value <= point.value + 1e-4 * decrease;
            const bool flat = cand.value <= point.value + 1e-13 * std::abs(point.value);
            if (armijo || (flat && residual(cand) < 0.5 * res)) {
              point = std::move(cand);
              stepped = true;
            }
          }
        }
      }
      if (!stepped) {
        for (auto j : active) coordinate_step(point, j);
        evaluate(point, true);
      }
    }
    return it;
  }

  const std::vector<ToneProblem>& tones() const { return tones_; }
  const Eigen::VectorXd& budget() const { return budget_; }

 private:
  std::vector<ToneProblem> tones_;
  Eigen::VectorXd budget_;
  Eigen::Index lines_;
  WsrSettings settings_;
};

}  // namespace

WsrResult solve_wsr(const ChannelTensor& tensor, const PrecoderStructure& structure, const Eigen::VectorXd& weights,
                    const PowerConstraints& constraints, SnrGap gap, const DisabledSet& disabled,
                    const WsrSettings& settings, const WsrWarmStart* warm) {
  const std::size_t tones = tensor.num_tones();
  const auto lines = static_cast<Eigen::Index>(tensor.num_lines());
  constraints.validate(tones, tensor.num_lines());
  if (structure.tones.size() != tones || structure.num_lines != tensor.num_lines())
    throw ValidationError("precoder", "structure does not match the channel dimensions");
  if (weights.size() != lines) throw ValidationError("weights", "need one weight per line");
  if ((weights.array() < 0.0).any() || !weights.allFinite())
    throw ValidationError("weights", "must be finite and nonnegative");
  if (disabled.num_tones() != tones || disabled.num_lines() != tensor.num_lines())
    throw ValidationError("disabled_set", "dimensions do not match the channel");
  if (gap.linear < 1.0) throw ValidationError("snr_gap", "must be >= 1 (linear)");

  // Work in units of the largest line budget so that prices are O(1)-ish.
  const double scale = constraints.sum_power.maxCoeff();
  std::vector<ToneProblem> problems(tones);
  const Eigen::VectorXd budget = constraints.sum_power / scale;
  parallel_for(tones, settings.workers, [&](std::size_t n) {
    const auto& pre = structure.tones[n];
    auto& t = problems[n];
    const auto a_count = static_cast<Eigen::Index>(pre.users.size());
    t.users = pre.users;
    t.map = pre.power_map;
    t.mask = constraints.mask.row(static_cast<Eigen::Index>(n)).transpose() / scale;
    t.a = Eigen::VectorXd::Zero(a_count);
    t.w = Eigen::VectorXd::Zero(a_count);
    t.ub = Eigen::VectorXd::Zero(a_count);
    for (Eigen::Index k = 0; k < a_count; ++k) {
      const auto user = pre.users[static_cast<std::size_t>(k)];
      const double noise = tensor.noise(n, user);
      const double g = pre.usable ? pre.gain(k) : 0.0;
      if (!(g > 0.0) || disabled.contains(n, user)) continue;
      t.a(k) = g * scale / (gap.linear * noise);
      t.w(k) = weights(static_cast<Eigen::Index>(user));
      double ub = bitcap_to_power_cap(g, gap, noise, constraints.max_bits) / scale;
      for (Eigen::Index j = 0; j < lines; ++j) {
        const double m = t.map(j, k);
        if (m > 0.0) ub = std::min({ub, t.mask(j) / m, budget(j) / m});
      }
      t.ub(k) = ub;
    }
    for (Eigen::Index j = 0; j < lines; ++j) {
      bool carries = false;
      for (Eigen::Index k = 0; k < a_count && !carries; ++k) carries = t.map(j, k) > 0.0 && t.w(k) > 0.0;
      if (carries) t.rows.push_back(j);
    }
  });

  DualSolver solver(std::move(problems), budget, lines, settings);
  DualPoint point;
  point.mu.assign(tones, Eigen::VectorXd::Zero(lines));
  bool have_start = false;
  if (warm && warm->nu.size() == lines && warm->mu.size() == tones) {
    point.nu = warm->nu;
    point.mu = warm->mu;
    have_start = true;
  }
  if (!have_start) {
    point.nu = Eigen::VectorXd::Zero(lines);
    solver.scalar_start(point);
  }
  bool converged = false;
  const int iterations = solver.run(point, converged);

  // Restore exact feasibility: per tone against the mask, then globally against the budgets.
  Eigen::VectorXd usage = Eigen::VectorXd::Zero(lines);
  std::vector<Eigen::VectorXd> stream_power(tones);
  for (std::size_t n = 0; n < tones; ++n) {
    const auto& t = solver.tones()[n];
    Eigen::VectorXd p = point.tones[n].p;
    const Eigen::VectorXd use = t.map * p;
    double factor = 1.0;
    for (Eigen::Index j = 0; j < lines; ++j)
      if (use(j) > t.mask(j)) factor = std::min(factor, t.mask(j) / use(j));
    p *= factor;
    usage += t.map * p;
    stream_power[n] = std::move(p);
  }
  double global = 1.0;
  for (Eigen::Index j = 0; j < lines; ++j)
    if (usage(j) > budget(j)) global = std::min(global, budget(j) / usage(j));

  WsrResult result;
  result.power = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tones), lines);
  result.rates = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tones), lines);
  result.line_power = Eigen::VectorXd::Zero(lines);
  double objective = 0.0;
  for (std::size_t n = 0; n < tones; ++n) {
    const auto& t = solver.tones()[n];
    const Eigen::VectorXd p = stream_power[n] * global;
    result.line_power += t.map * p * scale;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const auto user = static_cast<Eigen::Index>(t.users[static_cast<std::size_t>(k)]);
      if (p(k) <= 0.0) continue;
      const double bits = std::log2(1.0 + t.a(k) * p(k));
      result.power(static_cast<Eigen::Index>(n), user) = p(k) * scale;
      result.rates(static_cast<Eigen::Index>(n), user) = bits;
      objective += t.w(k) * bits;
    }
  }
  result.objective = objective;
  result.dual_value = point.value;
  result.dual_gap = (point.value - objective) / std::max(std::abs(objective), 1e-300);
  result.iterations = iterations;
  result.converged = converged;
  result.warm.nu = point.nu;
  result.warm.mu = std::move(point.mu);
  return result;
}

}  // namespace gfast
