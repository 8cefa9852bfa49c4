// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--expect-fail C7,...]
//
// Criteria named in --expect-fail are still reported as FAIL; they only stop counting
// towards the exit status (see README, "Known deviations").

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "gfast/csv.hpp"
#include "gfast/demand.hpp"
#include "gfast/errors.hpp"
#include "gfast/experiment.hpp"
#include "gfast/parallel.hpp"
#include "gfast/region.hpp"
#include "support/desk.hpp"

using namespace gfast;
using testing_support::Desk;
using testing_support::make_desk;

namespace {

// Tolerances pinned from the criteria text.
constexpr double kLeakLimit = 1e-9;          // C1
constexpr double kC1Seconds = 60.0;
constexpr double kAuditRel = 1e-6;           // C2
constexpr double kBitSlack = 1e-9;
constexpr double kGridRel = 0.005;           // C3
constexpr double kGridStep = 1e-3;
constexpr double kC3Seconds = 30.0;
constexpr double kMinRateSlack = 0.005;      // C4, C9: r >= r_min (1 - 0.5%)
constexpr double kSweepRel = 0.01;           // C5
constexpr int kSweepPoints = 200;
constexpr double kRectangularPct = 1e-4;     // C7: 1e-6 relative, in percent
constexpr double kThpShare = 0.8;
constexpr double kSweepSeconds = 300.0;
constexpr double kStrongFext = 1e-5;
constexpr double kHeuristicGapPts = 10.0;    // C9
constexpr int kAlternatingMinSolves = 10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

unsigned jobs() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Verdict {
  std::string id;
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------------------
// Independent re-computation of an allocation, straight from H, the precoder columns and p.

struct Recheck {
  double mask_excess = 0.0;
  double sum_excess = 0.0;
  double max_bits = 0.0;
  double rate_mismatch = 0.0;
  double disabled_power = 0.0;
};

Recheck recheck(const ChannelTensor& tensor, const PrecoderSolution& sol, const PowerConstraints& c, SnrGap gap) {
  Recheck out;
  const std::size_t L = tensor.num_lines();
  std::vector<double> total(L, 0.0);
  for (std::size_t n = 0; n < tensor.num_tones(); ++n) {
    const auto& H = tensor.matrix(n);
    const auto& tone = sol.structure.tones[n];
    const std::size_t A = tone.users.size();
    std::vector<double> p(A);
    for (std::size_t s = 0; s < A; ++s)
      p[s] = sol.power(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(tone.users[s]));
    for (std::size_t j = 0; j < L; ++j) {
      double line = 0.0;
      for (std::size_t s = 0; s < A; ++s)
        line += std::norm(tone.columns(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(s))) * p[s];
      const double m = c.mask(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
      out.mask_excess = std::max(out.mask_excess, (line - m) / m);
      total[j] += line;
    }
    std::vector<bool> active(L, false);
    for (auto u : tone.users) active[u] = true;
    for (std::size_t l = 0; l < L; ++l) {
      const double r = sol.rates(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l));
      out.max_bits = std::max(out.max_bits, r);
      if (!active[l]) {
        out.disabled_power =
            std::max(out.disabled_power, sol.power(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l)));
        out.rate_mismatch = std::max(out.rate_mismatch, std::abs(r));
      }
    }
    // Linear ZF: every other stream interferes. THP: only streams encoded after the user
    // (the earlier ones are presubtracted).
    for (std::size_t s = 0; s < A; ++s) {
      const auto u = tone.users[s];
      const auto h = H.row(static_cast<Eigen::Index>(u));
      const double signal = std::norm((h * tone.columns.col(static_cast<Eigen::Index>(s)))(0)) * p[s];
      double interference = 0.0;
      for (std::size_t j = 0; j < A; ++j) {
        if (j == s || (sol.kind == PrecoderKind::ZfThp && j < s)) continue;
        interference += std::norm((h * tone.columns.col(static_cast<Eigen::Index>(j)))(0)) * p[j];
      }
      const double r = std::log2(1.0 + signal / (gap.linear * (interference + tensor.noise(n, u))));
      out.rate_mismatch = std::max(
          out.rate_mismatch, std::abs(r - sol.rates(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(u))));
    }
  }
  for (std::size_t j = 0; j < L; ++j) {
    const double b = c.sum_power(static_cast<Eigen::Index>(j));
    out.sum_excess = std::max(out.sum_excess, (total[j] - b) / b);
  }
  return out;
}

struct AuditLog {
  std::size_t solutions = 0;
  Recheck worst;
  double b_max = 12.0;

  void add(const Desk& d, const PrecoderSolution& sol) {
    const auto r = recheck(d.tensor, sol, d.constraints, d.gap);
    ++solutions;
    worst.mask_excess = std::max(worst.mask_excess, r.mask_excess);
    worst.sum_excess = std::max(worst.sum_excess, r.sum_excess);
    worst.max_bits = std::max(worst.max_bits, r.max_bits);
    worst.rate_mismatch = std::max(worst.rate_mismatch, r.rate_mismatch);
    worst.disabled_power = std::max(worst.disabled_power, r.disabled_power);
    b_max = d.constraints.max_bits;
  }
};

// ---------------------------------------------------------------------------------------

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
  return v;
}

Verdict criterion1() {
  const auto start = Clock::now();
  double worst_zf = 0.0;
  double worst_thp = 0.0;
  std::size_t tones = 0;
  std::size_t skipped = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t L = 3 + static_cast<std::size_t>(i % 6);
    const std::size_t N = 16 + static_cast<std::size_t>((i * 37) % 113);
    const auto d = make_desk(1000 + static_cast<std::uint64_t>(i), L, N, i % 2 ? 1e-5 : 1e-6);
    Rng rng(7000 + static_cast<std::uint64_t>(i));
    EncodingOrder order{shuffled(L, rng)};
    // Half the instances also drop a few (tone, line) pairs.
    DisabledSet disabled(N, L);
    if (i % 2 == 0)
      for (std::size_t n = 0; n < N; ++n)
        if (rng.uniform() < 0.3) disabled.insert(n, static_cast<std::size_t>(rng.uniform() * static_cast<double>(L)) % L);
    const auto zf = build_precoder(PrecoderKind::ZfLinear, d.tensor, disabled, order);
    const auto thp = build_precoder(PrecoderKind::ZfThp, d.tensor, disabled, order);
    for (std::size_t n = 0; n < N; ++n) {
      const auto& H = d.tensor.matrix(n);
      ++tones;
      for (const auto* tp : {&zf.tones[n], &thp.tones[n]}) {
        if (!tp->usable) {
          ++skipped;
          continue;
        }
        const bool is_thp = tp == &thp.tones[n];
        const auto& t = *tp;
        for (std::size_t j = 0; j < t.users.size(); ++j) {
          const Eigen::VectorXcd col = t.columns.col(static_cast<Eigen::Index>(j));
          for (std::size_t s = 0; s < t.users.size(); ++s) {
            if (s == j) continue;
            if (is_thp && s > j) continue;  // users encoded after stream j cancel it themselves
            const double leak = testing_support::normalized_leak(H, t.users[s], col);
            (is_thp ? worst_thp : worst_zf) = std::max(is_thp ? worst_thp : worst_zf, leak);
          }
        }
      }
    }
  }
  const double secs = seconds_since(start);
  Verdict v{"C1", worst_zf < kLeakLimit && worst_thp < kLeakLimit && secs < kC1Seconds, ""};
  v.detail = "ZF residual suite, 50 instances / " + std::to_string(tones) + " tones: max leak zf_linear " +
             fmt("%.2e", worst_zf) + ", zf_thp " + fmt("%.2e", worst_thp) + " (limit 1e-09), " +
             std::to_string(skipped) + " rank-deficient tone builds skipped, " + fmt("%.1f", secs) + " s (limit 60 s)";
  return v;
}

// ---------------------------------------------------------------------------------------
// C3: exhaustive grid on 2 lines x 2 tones. For each tone all grid points (p1, p2) are
// enumerated; the pairing of tone-1 and tone-2 points under the sum-power budgets is an
// exact 2-D dominance query (sweep on line-1 usage, Fenwick tree of maxima on line-2 usage).

struct GridPoint {
  double u0, u1, value;
};

struct StreamModel {
  double gain[2];
  double map[2][2];  // map[line][stream]
};

StreamModel oracle_streams(const Eigen::Matrix2cd& H, PrecoderKind kind) {
  StreamModel m{};
  if (kind == PrecoderKind::ZfLinear) {
    const Eigen::Matrix2cd inv = H.inverse();
    for (int s = 0; s < 2; ++s) {
      const Eigen::Vector2cd t = inv.col(s).normalized();
      m.gain[s] = std::norm((H.row(s) * t)(0));
      for (int j = 0; j < 2; ++j) m.map[j][s] = std::norm(t(j));
    }
  } else {
    // Encoding order (0, 1): the first stream is unconstrained, the second avoids user 0.
    const Eigen::Vector2cd q0 = H.row(0).adjoint().normalized();
    Eigen::Vector2cd q1 = H.row(1).adjoint();
    q1 -= q0 * (q0.adjoint() * q1)(0);
    q1.normalize();
    m.gain[0] = std::norm((H.row(0) * q0)(0));
    m.gain[1] = std::norm((H.row(1) * q1)(0));
    for (int j = 0; j < 2; ++j) {
      m.map[j][0] = std::norm(q0(j));
      m.map[j][1] = std::norm(q1(j));
    }
  }
  return m;
}

double grid_optimum(const std::vector<Eigen::Matrix2cd>& H, const Eigen::MatrixXd& noise,
                    const PowerConstraints& c, const Eigen::Vector2d& w, double gamma, PrecoderKind kind) {
  std::vector<std::vector<GridPoint>> per_tone(2);
  const int steps = static_cast<int>(std::lround(1.0 / kGridStep));
  for (int n = 0; n < 2; ++n) {
    const auto m = oracle_streams(H[static_cast<std::size_t>(n)], kind);
    double cap[2];
    for (int s = 0; s < 2; ++s) {
      cap[s] = (std::exp2(c.max_bits) - 1.0) * gamma * noise(n, s) / m.gain[s];
      for (int j = 0; j < 2; ++j)
        if (m.map[j][s] > 0.0)
          cap[s] = std::min({cap[s], c.mask(n, j) / m.map[j][s], c.sum_power(j) / m.map[j][s]});
    }
    auto& pts = per_tone[static_cast<std::size_t>(n)];
    pts.reserve(static_cast<std::size_t>((steps + 1) * (steps + 1)));
    for (int a = 0; a <= steps; ++a) {
      const double p0 = cap[0] * a / steps;
      for (int b = 0; b <= steps; ++b) {
        const double p1 = cap[1] * b / steps;
        const double u0 = m.map[0][0] * p0 + m.map[0][1] * p1;
        const double u1 = m.map[1][0] * p0 + m.map[1][1] * p1;
        if (u0 > c.mask(n, 0) || u1 > c.mask(n, 1)) continue;
        const double v = w(0) * std::log2(1.0 + m.gain[0] * p0 / (gamma * noise(n, 0))) +
                         w(1) * std::log2(1.0 + m.gain[1] * p1 / (gamma * noise(n, 1)));
        pts.push_back({u0, u1, v});
      }
    }
  }
  auto& second = per_tone[1];
  std::sort(second.begin(), second.end(), [](const GridPoint& a, const GridPoint& b) { return a.u0 < b.u0; });
  std::vector<double> keys;
  keys.reserve(second.size());
  for (const auto& p : second) keys.push_back(p.u1);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<double> tree(keys.size() + 1, -INFINITY);
  auto update = [&](std::size_t i, double v) {
    for (++i; i < tree.size(); i += i & (~i + 1)) tree[i] = std::max(tree[i], v);
  };
  auto query = [&](std::size_t count) {
    double best = -INFINITY;
    for (std::size_t i = count; i > 0; i -= i & (~i + 1)) best = std::max(best, tree[i]);
    return best;
  };
  std::vector<GridPoint> first = per_tone[0];
  std::sort(first.begin(), first.end(), [&](const GridPoint& a, const GridPoint& b) {
    return c.sum_power(0) - a.u0 < c.sum_power(0) - b.u0;
  });
  double best = -INFINITY;
  std::size_t next = 0;
  for (const auto& q : first) {
    const double b0 = c.sum_power(0) - q.u0;
    const double b1 = c.sum_power(1) - q.u1;
    while (next < second.size() && second[next].u0 <= b0) {
      const auto k = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), second[next].u1) - keys.begin());
      update(k, second[next].value);
      ++next;
    }
    const auto count = static_cast<std::size_t>(std::upper_bound(keys.begin(), keys.end(), b1) - keys.begin());
    const double v = query(count);
    if (v > -INFINITY) best = std::max(best, q.value + v);
  }
  return best;
}

Verdict criterion3() {
  const auto start = Clock::now();
  double worst = 0.0;
  int done = 0;
  for (int i = 0; i < 20; ++i) {
    Rng rng(3000 + static_cast<std::uint64_t>(i));
    const auto kind = i % 2 ? PrecoderKind::ZfThp : PrecoderKind::ZfLinear;
    std::vector<Eigen::Matrix2cd> H(2);
    Eigen::MatrixXd noise(2, 2);
    PowerConstraints c;
    c.mask.resize(2, 2);
    c.sum_power.resize(2);
    c.max_bits = 12.0;
    for (int n = 0; n < 2; ++n) {
      for (int r = 0; r < 2; ++r)
        for (int k = 0; k < 2; ++k)
          H[static_cast<std::size_t>(n)](r, k) = Complex(rng.normal(), rng.normal()) * (r == k ? 1.5 : 0.5);
      for (int l = 0; l < 2; ++l) {
        noise(n, l) = std::pow(10.0, rng.uniform(-4.5, -1.0));
        c.mask(n, l) = rng.uniform(0.2, 1.0);
      }
    }
    for (int l = 0; l < 2; ++l) c.sum_power(l) = rng.uniform(0.3, 1.2) * (c.mask(0, l) + c.mask(1, l));
    const Eigen::Vector2d w(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0));
    BandPlan band;
    band.num_tones = 2;
    ChannelTensor tensor(band, {H[0], H[1]}, noise);
    const SnrGap gap{1.0};
    const DisabledSet none(2, 2);
    const EncodingOrder order{{0, 1}};
    const auto structure = build_precoder(kind, tensor, none, order);
    const auto wsr = solve_wsr(tensor, structure, w, c, gap, none);
    const double grid = grid_optimum(H, noise, c, w, gap.linear, kind);
    worst = std::max(worst, std::abs(wsr.objective - grid) / grid);
    ++done;
  }
  const double secs = seconds_since(start);
  Verdict v{"C3", worst <= kGridRel && secs < kC3Seconds, ""};
  v.detail = "convex-solver oracle, " + std::to_string(done) + " instances (2 lines x 2 tones, grid step 1e-3 of each cap): "
             "max |wsr - grid| / grid = " + fmt("%.2e", worst) + " (limit 5e-03), " + fmt("%.1f", secs) +
             " s (limit 30 s)";
  return v;
}

// ---------------------------------------------------------------------------------------

PriorityPartition partition_with(std::size_t lines, std::vector<std::size_t> prio) {
  return PriorityPartition::from_prioritized(lines, prio, 0.0);
}

Verdict criterion4(AuditLog& audit) {
  int converged = 0;
  double worst_violation = 0.0;
  double worst_cs = 0.0;
  double worst_lambda = 0.0;
  std::size_t steps = 0;
  int max_iter = 0;
  bool ok = true;
  const DemandSettings settings;
  for (int i = 0; i < 20; ++i) {
    const std::size_t L = 4 + static_cast<std::size_t>(i % 3);
    const std::size_t N = i % 2 ? 128 : 64;
    const auto d = make_desk(4000 + static_cast<std::uint64_t>(i), L, N, 1e-6);
    const auto kind = (i / 2) % 2 ? PrecoderKind::ZfThp : PrecoderKind::ZfLinear;
    auto part = partition_with(L, i % 3 ? std::vector<std::size_t>{0} : std::vector<std::size_t>{0, 2});
    const auto order = make_order(d.lengths, part);
    const auto srop = demand_srop(d.tensor, kind, d.constraints, d.gap, order, settings.spectrum);
    for (auto l : part.constrained_lines()) part.min_rate_bps[l] = 0.6 * srop.user_rate(static_cast<Eigen::Index>(l));
    const auto rep = solve_alternating(d.tensor, kind, d.constraints, d.gap, part, order, settings, &srop);
    audit.add(d, srop);
    audit.add(d, rep.solution);
    int phase0 = 0;
    for (const auto& s : rep.trajectory) {
      if (s.phase == 0) phase0 = std::max(phase0, s.iteration);
      const double expect = std::max(0.0, s.lambda_before + s.step * (s.r_min - s.rate));
      worst_lambda = std::max(worst_lambda, std::abs(expect - s.lambda_after) / std::max(std::abs(expect), 1e-12));
      if (s.r_min != part.min_rate_bps[s.line]) ok = false;
      ++steps;
    }
    max_iter = std::max(max_iter, phase0);
    if (rep.converged && phase0 < settings.max_iterations) ++converged;
    for (auto l : part.constrained_lines()) {
      const double r_min = part.min_rate_bps[l];
      worst_violation = std::max(worst_violation, (r_min - rep.solution.user_rate(static_cast<Eigen::Index>(l))) / r_min);
    }
    worst_cs = std::max(worst_cs, rep.slackness_residual);
  }
  const bool pass = ok && converged == 20 && worst_violation <= kMinRateSlack &&
                    worst_cs <= settings.slackness_tolerance && worst_lambda <= 1e-12;
  Verdict v{"C4", pass, ""};
  v.detail = "dual solver contract, 20 instances at r_min = 60% SROP: converged " + std::to_string(converged) +
             "/20 (max " + std::to_string(max_iter) + " of " + std::to_string(settings.max_iterations) +
             " iterations), worst shortfall " + fmt("%.2e", std::max(0.0, worst_violation)) +
             " (limit 5e-03), CS residual " + fmt("%.2e", worst_cs) + " (limit 1e-02), multiplier update max rel err " +
             fmt("%.1e", worst_lambda) + " over " + std::to_string(steps) + " logged steps";
  return v;
}

Verdict criterion5(AuditLog& audit) {
  double worst = 0.0;
  int instances = 0;
  bool ok = true;
  const DemandSettings settings;
  for (int i = 0; i < 10; ++i) {
    const auto d = make_desk(5000 + static_cast<std::uint64_t>(i), 2, 128, kStrongFext);
    Rng rng(5500 + static_cast<std::uint64_t>(i));
    const auto kind = i % 2 ? PrecoderKind::ZfThp : PrecoderKind::ZfLinear;
    auto part = partition_with(2, {0});
    const auto order = make_order(d.lengths, part);
    const auto srop = demand_srop(d.tensor, kind, d.constraints, d.gap, order, settings.spectrum);
    part.min_rate_bps[1] = rng.uniform(0.3, 0.9) * srop.user_rate(1);
    const auto rep = solve_alternating(d.tensor, kind, d.constraints, d.gap, part, order, settings, &srop);
    audit.add(d, rep.solution);
    std::vector<double> feasible(kSweepPoints, -1.0);
    parallel_for(kSweepPoints, jobs(), [&](std::size_t k) {
      const double ratio = std::pow(10.0, -6.0 + 9.0 * static_cast<double>(k) / (kSweepPoints - 1));
      const auto sol = solve_fixed(d.tensor, kind, d.constraints, d.gap, rep.solution.order, Eigen::Vector2d(1.0, ratio),
                                   rep.solution.disabled, settings.spectrum);
      if (sol.user_rate(1) >= part.min_rate_bps[1] * (1.0 - kMinRateSlack)) feasible[k] = sol.user_rate(0);
    });
    const double best = *std::max_element(feasible.begin(), feasible.end());
    if (best <= 0.0) {
      ok = false;
      continue;
    }
    worst = std::max(worst, std::abs(rep.solution.user_rate(0) - best) / best);
    ++instances;
  }
  Verdict v{"C5", ok && worst <= kSweepRel, ""};
  v.detail = "weight-sweep oracle, " + std::to_string(instances) + " two-line instances x " +
             std::to_string(kSweepPoints) + " ratios: max |alternating - sweep best| / sweep best = " +
             fmt("%.2e", worst) + " (limit 1e-02)";
  return v;
}

// Prefix-sum oracle for the tone-limit heuristic: leading SROP tones until r_min is covered, with
// 1e-12 relative slack so a target equal to the full SROP rate stops at the last active tone.
std::size_t oracle_n_max(const PrecoderSolution& srop, double symbol_rate_hz, std::size_t line, double r_min_bps) {
  if (r_min_bps <= 0.0) return 0;
  const auto col = srop.rates.col(static_cast<Eigen::Index>(line));
  double bits = 0.0;
  for (Eigen::Index n = 0; n < col.size(); ++n) {
    bits += col(n);
    if (bits * symbol_rate_hz >= r_min_bps * (1.0 - 1e-12)) return static_cast<std::size_t>(n) + 1;
  }
  return static_cast<std::size_t>(col.size());
}

struct C9Data {
  std::vector<SolveReport> heuristic;
  std::vector<SolveReport> alternating;
};

C9Data run_comparisons(AuditLog& audit) {
  C9Data data;
  const DemandSettings settings;
  for (int i = 0; i < 10; ++i) {
    const auto d = make_desk(9000 + static_cast<std::uint64_t>(i), 6, 128, 1e-6);
    auto part = partition_with(6, {0, 1});
    for (auto kind : {PrecoderKind::ZfLinear, PrecoderKind::ZfThp}) {
      const auto order = make_order(d.lengths, part);
      const auto srop = demand_srop(d.tensor, kind, d.constraints, d.gap, order, settings.spectrum);
      auto p = part;
      // Desk analog of 250 Mbit/s (scaled by N / 4096), capped at 80% of the line's SROP rate.
      const double scaled = 250e6 * 128.0 / 4096.0;
      for (auto l : p.constrained_lines())
        p.min_rate_bps[l] = std::min(scaled, 0.8 * srop.user_rate(static_cast<Eigen::Index>(l)));
      data.alternating.push_back(solve_alternating(d.tensor, kind, d.constraints, d.gap, p, order, settings, &srop));
      data.heuristic.push_back(solve_heuristic(d.tensor, kind, d.constraints, d.gap, p, order, settings, &srop));
      audit.add(d, data.alternating.back().solution);
      audit.add(d, data.heuristic.back().solution);
    }
  }
  return data;
}

Verdict criterion6(const C9Data& c9, AuditLog& audit) {
  std::size_t lines_checked = 0;
  std::size_t mismatches = 0;
  std::size_t flagged = 0;
  std::size_t unflagged = 0;
  std::vector<SolveReport> reports = c9.heuristic;
  // Edge targets: zero, full SROP rate, random fractions.
  const DemandSettings settings;
  for (int i = 0; i < 6; ++i) {
    const auto d = make_desk(6000 + static_cast<std::uint64_t>(i), 5, 96, 1e-6);
    Rng rng(6600 + static_cast<std::uint64_t>(i));
    auto part = partition_with(5, {static_cast<std::size_t>(i % 5)});
    const auto kind = i % 2 ? PrecoderKind::ZfThp : PrecoderKind::ZfLinear;
    const auto order = make_order(d.lengths, part);
    const auto srop = demand_srop(d.tensor, kind, d.constraints, d.gap, order, settings.spectrum);
    int k = 0;
    for (auto l : part.constrained_lines()) {
      const double full = srop.user_rate(static_cast<Eigen::Index>(l));
      part.min_rate_bps[l] = k == 0 ? 0.0 : k == 1 ? full : rng.uniform(0.05, 0.95) * full;
      ++k;
    }
    reports.push_back(solve_heuristic(d.tensor, kind, d.constraints, d.gap, part, order, settings, &srop));
    audit.add(d, reports.back().solution);
  }
  for (const auto& rep : reports) {
    std::set<std::size_t> below(rep.below_min_rate.begin(), rep.below_min_rate.end());
    for (auto l : rep.partition.constrained_lines()) {
      ++lines_checked;
      const double r_min = rep.partition.min_rate_bps[l];
      if (oracle_n_max(rep.srop, 48e3, l, r_min) != rep.n_max[l]) ++mismatches;
      const bool short_of_target = rep.solution.user_rate(static_cast<Eigen::Index>(l)) < r_min;
      if (short_of_target) (below.count(l) ? flagged : unflagged) += 1;
    }
  }
  Verdict v{"C6", mismatches == 0 && unflagged == 0, ""};
  v.detail = "tone-limit heuristic, " + std::to_string(reports.size()) + " runs / " + std::to_string(lines_checked) +
             " constrained lines: n_max mismatches vs prefix-sum oracle " + std::to_string(mismatches) +
             ", lines below r_min after re-optimization " + std::to_string(flagged + unflagged) + " (flagged " +
             std::to_string(flagged) + ", unflagged " + std::to_string(unflagged) + ")";
  return v;
}

Verdict criterion7() {
  const std::size_t L = 8;
  const std::size_t N = 128;
  RegionSweepSpec spec;
  spec.partition = partition_with(L, {0, 1});
  double slowest = 0.0;

  // Zero coupling: every Pareto point is the SROP.
  double off_anchor = 0.0;
  std::size_t pareto_points = 0;
  {
    const auto d = make_desk(7000, L, N, 0.0);
    const auto t0 = Clock::now();
    const auto pts = sweep_region(d.tensor, d.lengths, spec, d.constraints, d.gap, {}, jobs());
    slowest = std::max(slowest, seconds_since(t0) / static_cast<double>(spec.kinds.size()));
    for (const auto& p : pts) {
      if (!p.pareto) continue;
      ++pareto_points;
      off_anchor = std::max({off_anchor, std::abs(p.group1_pct - 100.0), std::abs(p.group2_pct - 100.0)});
    }
  }

  // Strong FEXT: ratio-0 endpoints.
  int seeds = 10;
  int thp_wins = 0;
  double min_endpoint = INFINITY;
  std::ostringstream gains;
  for (int s = 0; s < seeds; ++s) {
    const auto d = make_desk(7100 + static_cast<std::uint64_t>(s), L, N, kStrongFext);
    const auto t0 = Clock::now();
    const auto pts = sweep_region(d.tensor, d.lengths, spec, d.constraints, d.gap, {}, jobs());
    slowest = std::max(slowest, seconds_since(t0) / static_cast<double>(spec.kinds.size()));
    double zf = NAN;
    double thp = NAN;
    for (const auto& p : pts) {
      if (p.ratio != 0.0 || !p.error.empty()) continue;
      (p.kind == PrecoderKind::ZfLinear ? zf : thp) = p.group1_pct;
    }
    min_endpoint = std::min({min_endpoint, std::isnan(zf) ? -INFINITY : zf, std::isnan(thp) ? -INFINITY : thp});
    if (thp - 100.0 >= zf - 100.0) ++thp_wins;
    gains << (s ? " " : "") << fmt("%.1f", zf - 100.0) << "/" << fmt("%.1f", thp - 100.0);
  }
  const bool rectangular = off_anchor <= kRectangularPct && pareto_points > 0;
  const bool above = min_endpoint > 100.0;
  const bool ordering = thp_wins >= static_cast<int>(std::ceil(kThpShare * seeds));
  Verdict v{"C7", rectangular && above && ordering && slowest < kSweepSeconds, ""};
  v.detail = "rate-region shape: K_fext=0 Pareto points off (100%,100%) by " + fmt("%.1e", off_anchor) +
             " pct-pts (limit 1e-04); strong FEXT (K=" + fmt("%.0e", kStrongFext) + ", L=8, N=128) ratio-0 endpoint min " +
             fmt("%.2f", min_endpoint) + "% (> 100% " + (above ? "holds" : "violated") + "), zf_thp gain >= zf_linear gain in " +
             std::to_string(thp_wins) + "/" + std::to_string(seeds) + " seeds (need >= 80%); gains zf/thp in pct-pts: " +
             gains.str() + "; slowest sweep " + fmt("%.1f", slowest) + " s (limit 300 s)";
  return v;
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

Verdict criterion8() {
  const std::size_t L = 8;
  bool pass = true;
  std::ostringstream detail;
  for (auto kind : {PrecoderKind::ZfLinear, PrecoderKind::ZfThp}) {
    std::vector<double> gain, rate, length;
    for (int r = 0; r < 5; ++r) {
      const auto d = make_desk(8000 + static_cast<std::uint64_t>(r), L, 128, 1e-6);
      RoundRobinSpec spec;
      spec.group_size = 2;
      spec.kind = kind;
      spec.mode = RoundRobinMode::Extreme;
      const auto recs = round_robin_study(d.tensor, d.lengths, spec, d.constraints, d.gap, {},
                                          static_cast<std::uint64_t>(r), jobs());
      for (const auto& g : recs) {
        gain.push_back(g.gain_pct);
        rate.push_back(g.srop_bps);
        length.push_back(g.line_length_m);
      }
    }
    const double rho_rate = rank_correlation(gain, rate);
    const double rho_len = rank_correlation(gain, length);
    pass = pass && rho_rate < 0.0 && rho_len > 0.0;
    detail << (kind == PrecoderKind::ZfLinear ? "" : "; ") << to_string(kind) << " " << gain.size()
           << " records: rho(gain, SROP rate) = " << fmt("%.3f", rho_rate) << " (< 0), rho(gain, length) = "
           << fmt("%.3f", rho_len) << " (> 0)";
  }
  return {"C8", pass, "individual-gain structure, round-robin extreme mode, " + detail.str()};
}

Verdict criterion9(const C9Data& c9) {
  double worst_alt = 0.0;
  double worst_heur = 0.0;
  double sum_alt = 0.0;
  double sum_heur = 0.0;
  int heur_one = 0;
  int alt_many = 0;
  int min_alt_solves = 1 << 30;
  const std::size_t cases = c9.heuristic.size();
  for (std::size_t i = 0; i < cases; ++i) {
    const auto& a = c9.alternating[i];
    const auto& h = c9.heuristic[i];
    for (auto l : a.partition.constrained_lines()) {
      const double r_min = a.partition.min_rate_bps[l];
      worst_alt = std::max(worst_alt, (r_min - a.solution.user_rate(static_cast<Eigen::Index>(l))) / r_min);
      worst_heur = std::max(worst_heur, (r_min - h.solution.user_rate(static_cast<Eigen::Index>(l))) / r_min);
    }
    sum_alt += 100.0 * a.prioritized_normalized_rate();
    sum_heur += 100.0 * h.prioritized_normalized_rate();
    heur_one += h.wsr_solves == 1;
    alt_many += a.wsr_solves >= kAlternatingMinSolves;
    min_alt_solves = std::min(min_alt_solves, a.wsr_solves);
  }
  const double n = static_cast<double>(cases);
  const double gap = std::abs(sum_heur / n - sum_alt / n);
  const bool pass = worst_alt <= kMinRateSlack && worst_heur <= kMinRateSlack && gap <= kHeuristicGapPts &&
                    heur_one == static_cast<int>(cases) && alt_many == static_cast<int>(cases);
  Verdict v{"C9", pass, ""};
  v.detail = "heuristic vs alternating, 10 seeds x 2 precoders: worst r_min shortfall alternating " +
             fmt("%.2e", std::max(0.0, worst_alt)) + ", heuristic " + fmt("%.2e", std::max(0.0, worst_heur)) +
             " (limit 5e-03); mean prioritized normalized rate " + fmt("%.2f", sum_heur / n) + "% vs " +
             fmt("%.2f", sum_alt / n) + "% (gap " + fmt("%.2f", gap) + " pct-pts, limit 10); WSR solves after SROP: "
             "heuristic ==1 in " + std::to_string(heur_one) + "/" + std::to_string(cases) + ", alternating >= 10 in " +
             std::to_string(alt_many) + "/" + std::to_string(cases) + " (min " + std::to_string(min_alt_solves) + ")";
  return v;
}

Verdict criterion2(const AuditLog& audit) {
  const auto& w = audit.worst;
  const bool pass = audit.solutions > 0 && w.mask_excess <= kAuditRel && w.sum_excess <= kAuditRel &&
                    w.max_bits <= audit.b_max + kBitSlack && w.rate_mismatch <= kAuditRel && w.disabled_power == 0.0;
  Verdict v{"C2", pass, ""};
  v.detail = "constraint audit of " + std::to_string(audit.solutions) +
             " returned allocations from explicit precoders: mask excess " + fmt("%.1e", w.mask_excess) +
             ", sum-power excess " + fmt("%.1e", w.sum_excess) + " (limit 1e-06 rel), rate mismatch " +
             fmt("%.1e", w.rate_mismatch) + " bits, max bits " + fmt("%.12f", w.max_bits) + " (limit b_max + 1e-09), " +
             "power on disabled pairs " + fmt("%.1e", w.disabled_power);
  return v;
}

Verdict criterion10() {
  namespace fs = std::filesystem;
  const fs::path scenario = fs::path(GFAST_SOURCE_DIR) / "scenarios" / "desk.json";
  const fs::path root = fs::temp_directory_path() / ("gfast_acceptance_" + std::to_string(::getpid()));
  std::size_t files = 0;
  std::vector<std::string> differing;
  std::string error;
  try {
    for (const char* cmd : {"srop", "minrate", "heuristic", "region", "roundrobin"}) {
      RunOptions a;
      a.out_dir = root / "a" / cmd;
      a.workers = jobs();
      RunOptions b = a;
      b.out_dir = root / "b" / cmd;
      const auto ra = run_experiment(cmd, scenario, a);
      run_experiment(cmd, scenario, b);
      for (const auto& art : ra.artifacts) {
        if (art.extension() != ".csv") continue;
        ++files;
        if (sha256_file(*a.out_dir / art) != sha256_file(*b.out_dir / art))
          differing.push_back(std::string(cmd) + "/" + art.string());
      }
    }
  } catch (const std::exception& e) {
    error = e.what();
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  Verdict v{"C10", error.empty() && differing.empty() && files > 0, ""};
  v.detail = "determinism: " + std::to_string(files) + " CSV files from srop/minrate/heuristic/region/roundrobin, "
             "two runs each: " + std::to_string(differing.size()) + " differ";
  if (!error.empty()) v.detail += "; error: " + error;
  for (const auto& d : differing) v.detail += " " + d;
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> expected_failures;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--expect-fail" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string id;
      while (std::getline(ss, id, ',')) expected_failures.insert(id);
    } else {
      std::fprintf(stderr, "usage: acceptance [--expect-fail C7,...]\n");
      return 2;
    }
  }

  AuditLog audit;
  std::map<int, Verdict> verdicts;
  auto guarded = [&](int id, const std::function<Verdict()>& fn) {
    const auto t0 = Clock::now();
    try {
      verdicts[id] = fn();
    } catch (const std::exception& e) {
      verdicts[id] = Verdict{"C" + std::to_string(id), false, std::string("threw: ") + e.what()};
    }
    std::fprintf(stderr, "[C%d done in %.1f s]\n", id, seconds_since(t0));
  };

  C9Data c9;
  guarded(1, criterion1);
  guarded(3, criterion3);
  guarded(4, [&] { return criterion4(audit); });
  guarded(5, [&] { return criterion5(audit); });
  guarded(9, [&] {
    c9 = run_comparisons(audit);
    return criterion9(c9);
  });
  guarded(6, [&] { return criterion6(c9, audit); });
  guarded(2, [&] { return criterion2(audit); });
  guarded(7, criterion7);
  guarded(8, criterion8);
  guarded(10, criterion10);

  int passed = 0;
  int unexpected = 0;
  for (const auto& [id, v] : verdicts) {
    std::printf("%-4s %s  %s\n", v.id.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
    if (v.pass)
      ++passed;
    else if (!expected_failures.count(v.id))
      ++unexpected;
  }
  std::printf("summary: %d/%zu criteria PASS", passed, verdicts.size());
  if (!expected_failures.empty()) {
    std::printf(", known deviations:");
    for (const auto& id : expected_failures) std::printf(" %s", id.c_str());
  }
  std::printf("\n");
  std::fflush(stdout);
  return unexpected == 0 ? 0 : 1;
}
