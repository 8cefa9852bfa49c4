#include "gfast/region.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "gfast/errors.hpp"
#include "gfast/parallel.hpp"

namespace gfast {

std::vector<double> default_weight_grid() {
  return {0.0, 1.0 / 64, 1.0 / 16, 0.25, 0.5, 1.0, 2.0, 4.0, 16.0, 64.0};
}

std::pair<double, double> group_weights(double ratio) {
  if (ratio <= 1.0) return {1.0, ratio};
  return {1.0 / ratio, 1.0};
}

namespace {

PriorityPartition swapped(const PriorityPartition& p) {
  PriorityPartition out = p;
  for (std::size_t l = 0; l < out.prioritized.size(); ++l) out.prioritized[l] = !p.prioritized[l];
  return out;
}

// Lines of the higher-weight group are disabled last.
PriorityPartition protected_group(const PriorityPartition& partition, double ratio) {
  if (ratio == 1.0) return PriorityPartition::all(partition.num_lines());
  return ratio < 1.0 ? partition : swapped(partition);
}

std::pair<double, double> group_sums(const PriorityPartition& partition, const Eigen::VectorXd& rate) {
  double g1 = 0.0;
  double g2 = 0.0;
  for (std::size_t l = 0; l < partition.num_lines(); ++l)
    (partition.is_prioritized(l) ? g1 : g2) += rate(static_cast<Eigen::Index>(l));
  return {g1, g2};
}

double pct(double value, double reference) { return reference > 0.0 ? 100.0 * value / reference : 0.0; }

}  // namespace

EncodingOrder sweep_order(std::span<const double> line_lengths, const PriorityPartition& partition, double ratio) {
  if (ratio == 1.0) return make_order(line_lengths, PriorityPartition::all(line_lengths.size()));
  return make_order(line_lengths, ratio < 1.0 ? partition : swapped(partition));
}

void mark_pareto(std::vector<RegionPoint>& points, double tolerance) {
  for (auto& p : points) p.pareto = p.error.empty();
  for (auto& p : points) {
    if (!p.error.empty()) continue;
    for (const auto& q : points) {
      if (&p == &q || !q.error.empty() || q.kind != p.kind) continue;
      const bool no_worse = q.group1_pct >= p.group1_pct - tolerance && q.group2_pct >= p.group2_pct - tolerance;
      const bool better = q.group1_pct > p.group1_pct + tolerance || q.group2_pct > p.group2_pct + tolerance;
      if (no_worse && better) {
        p.pareto = false;
        break;
      }
    }
  }
}

std::vector<RegionPoint> sweep_region(const ChannelTensor& tensor, std::span<const double> line_lengths,
                                      const RegionSweepSpec& spec, const PowerConstraints& constraints, SnrGap gap,
                                      const SpectrumSettings& settings, unsigned jobs) {
  const auto lines = tensor.num_lines();
  if (line_lengths.size() != lines) throw ValidationError("topology.line_lengths_m", "must list every line");
  spec.partition.validate(lines);
  if (spec.ratios.empty()) throw ValidationError("region.ratios", "need at least one weight ratio");
  for (double r : spec.ratios)
    if (!std::isfinite(r) || r < 0.0) throw ValidationError("region.ratios", "ratios must be finite and >= 0");
  std::vector<double> ratios = spec.ratios;
  std::sort(ratios.begin(), ratios.end());
  ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

  std::vector<RegionPoint> out;
  for (auto kind : spec.kinds) {
    const auto srop = solve_srop(tensor, kind, constraints, gap, sweep_order(line_lengths, spec.partition, 1.0),
                                 settings);
    const auto [ref1, ref2] = group_sums(spec.partition, srop.user_rate);
    std::vector<RegionPoint> points(ratios.size());
    SpectrumSettings inner = settings;
    if (jobs > 1) inner.wsr.workers = 1;
    parallel_for(ratios.size(), jobs, [&](std::size_t i) {
      RegionPoint& pt = points[i];
      pt.kind = kind;
      pt.ratio = ratios[i];
      try {
        Eigen::VectorXd rate;
        if (ratios[i] == 1.0) {
          rate = srop.user_rate;
        } else {
          const auto [wp, wn] = group_weights(ratios[i]);
          Eigen::VectorXd w(static_cast<Eigen::Index>(lines));
          for (std::size_t l = 0; l < lines; ++l)
            w(static_cast<Eigen::Index>(l)) = spec.partition.is_prioritized(l) ? wp : wn;
          const auto sol = solve_weighted(tensor, kind, constraints, gap,
                                          sweep_order(line_lengths, spec.partition, ratios[i]), w,
                                          protected_group(spec.partition, ratios[i]), inner);
          rate = sol.user_rate;
        }
        const auto [g1, g2] = group_sums(spec.partition, rate);
        pt.group1_bps = g1;
        pt.group2_bps = g2;
        pt.group1_pct = pct(g1, ref1);
        pt.group2_pct = pct(g2, ref2);
      } catch (const Error& e) {
        pt.error = e.what();
      }
    });
    out.insert(out.end(), points.begin(), points.end());
  }
  mark_pareto(out);
  return out;
}

std::string to_string(RoundRobinMode mode) { return mode == RoundRobinMode::Extreme ? "extreme" : "min_rate"; }

std::vector<std::vector<std::size_t>> round_robin_windows(std::size_t lines, std::size_t group_size) {
  if (group_size == 0 || group_size > lines)
    throw ValidationError("round_robin.group_size", "must be between 1 and the number of lines");
  std::vector<std::vector<std::size_t>> windows;
  for (std::size_t start = 0; start < lines; start += group_size) {
    std::vector<std::size_t> w;
    for (std::size_t i = 0; i < group_size; ++i) w.push_back((start + i) % lines);
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<GainRecord> round_robin_study(const ChannelTensor& tensor, std::span<const double> line_lengths,
                                          const RoundRobinSpec& spec, const PowerConstraints& constraints,
                                          SnrGap gap, const DemandSettings& settings, std::uint64_t realization,
                                          unsigned jobs) {
  const auto lines = tensor.num_lines();
  if (line_lengths.size() != lines) throw ValidationError("topology.line_lengths_m", "must list every line");
  if (spec.mode == RoundRobinMode::MinRate && spec.solver != "heuristic" && spec.solver != "alternating")
    throw ValidationError("round_robin.solver", "must be 'heuristic' or 'alternating'");
  if (!std::isfinite(spec.min_rate_bps) || spec.min_rate_bps < 0.0)
    throw ValidationError("round_robin.min_rate_bps", "must be finite and >= 0");
  const auto windows = round_robin_windows(lines, spec.group_size);
  const auto srop = solve_srop(tensor, spec.kind, constraints, gap,
                               make_order(line_lengths, PriorityPartition::all(lines)), settings.spectrum);

  DemandSettings inner = settings;
  if (jobs > 1) inner.spectrum.wsr.workers = 1;
  std::vector<Eigen::VectorXd> achieved(windows.size());
  std::vector<int> solves(windows.size(), 0);
  parallel_for(windows.size(), jobs, [&](std::size_t w) {
    auto partition = PriorityPartition::from_prioritized(lines, windows[w], 0.0);
    const auto order = make_order(line_lengths, partition);
    if (spec.mode == RoundRobinMode::Extreme) {
      const auto [wp, wn] = group_weights(0.0);
      Eigen::VectorXd weights(static_cast<Eigen::Index>(lines));
      for (std::size_t l = 0; l < lines; ++l) weights(static_cast<Eigen::Index>(l)) = partition.is_prioritized(l) ? wp : wn;
      const auto sol = solve_weighted(tensor, spec.kind, constraints, gap, order, weights, partition, inner.spectrum);
      achieved[w] = sol.user_rate;
      solves[w] = sol.wsr_solves;
      return;
    }
    const auto demand = demand_srop(tensor, spec.kind, constraints, gap, order, inner.spectrum);
    for (auto l : partition.constrained_lines())
      partition.min_rate_bps[l] = std::min(spec.min_rate_bps, demand.user_rate(static_cast<Eigen::Index>(l)));
    const auto report = spec.solver == "alternating"
                            ? solve_alternating(tensor, spec.kind, constraints, gap, partition, order, inner, &demand)
                            : solve_heuristic(tensor, spec.kind, constraints, gap, partition, order, inner, &demand);
    achieved[w] = report.solution.user_rate;
    solves[w] = report.wsr_solves;
  });

  std::vector<GainRecord> records;
  std::vector<bool> seen(lines, false);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (auto l : windows[w]) {
      if (seen[l]) continue;
      seen[l] = true;
      GainRecord r;
      r.realization = realization;
      r.window = w;
      r.line = l;
      r.kind = spec.kind;
      r.mode = spec.mode;
      r.line_length_m = line_lengths[l];
      r.srop_bps = srop.user_rate(static_cast<Eigen::Index>(l));
      r.achieved_bps = achieved[w](static_cast<Eigen::Index>(l));
      r.gain_pct = r.srop_bps > 0.0 ? 100.0 * (r.achieved_bps / r.srop_bps - 1.0) : 0.0;
      r.wsr_solves = solves[w];
      records.push_back(r);
    }
  }
  return records;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("records", "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<GainSummary> aggregate(const std::vector<GainRecord>& records) {
  if (records.empty()) throw ValidationError("records", "nothing to aggregate");
  using Key = std::tuple<PrecoderKind, RoundRobinMode, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<const GainRecord*>> groups;
  for (const auto& r : records) {
    Key k{r.kind, r.mode, r.role};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::vector<GainSummary> out;
  for (const auto& k : order) {
    const auto& g = groups[k];
    GainSummary s;
    s.kind = std::get<0>(k);
    s.mode = std::get<1>(k);
    s.role = std::get<2>(k);
    s.count = g.size();
    std::vector<double> normalized;
    double gain = 0.0;
    for (const auto* r : g) {
      gain += r->gain_pct;
      normalized.push_back(100.0 + r->gain_pct);
    }
    s.mean_gain_pct = gain / static_cast<double>(g.size());
    s.mean_normalized_pct = std::accumulate(normalized.begin(), normalized.end(), 0.0) /
                            static_cast<double>(normalized.size());
    s.p10_normalized_pct = percentile(normalized, 0.1);
    s.p50_normalized_pct = percentile(normalized, 0.5);
    s.p90_normalized_pct = percentile(normalized, 0.9);
    out.push_back(s);
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman", "need two equally long samples");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gfast
