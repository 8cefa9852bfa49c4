#include "gfast/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

#include "gfast/csv.hpp"
#include "gfast/errors.hpp"

namespace gfast {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "1.0.0";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing artifact " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Run {
 public:
  Run(const std::string& command, const fs::path& scenario_path, const RunOptions& options)
      : command_(command), scenario_path_(scenario_path), started_(utc_now()), clock_(std::chrono::steady_clock::now()) {
    scenario_text_ = read_file_or_reject(scenario_path);
    scenario_ = parse_scenario(scenario_text_, scenario_path.parent_path());
    warnings_ = validate_scenario(scenario_);
    seed_ = options.seed.value_or(scenario_.seed);
    workers_ = std::max(1u, options.workers);
    dir_ = options.out_dir.value_or(scenario_.output_dir);
    scenario_.settings.spectrum.wsr.workers = workers_;
  }

  const Scenario& scenario() const { return scenario_; }
  std::uint64_t seed() const { return seed_; }
  unsigned workers() const { return workers_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void prepare() {
    fs::create_directories(dir_);
    std::ofstream out(path("scenario.json"), std::ios::binary | std::ios::trunc);
    out << scenario_text_;
    out.close();
    if (!out) throw Error("cannot write " + path("scenario.json").string());
    add("scenario.json");
  }

  void add(const std::string& name) { artifacts_.push_back(name); }
  void warn(const std::string& w) { warnings_.push_back(w); }
  void note(const std::string& key, const std::string& value) { notes_[key] = value; }

  RunResult finish() {
    ordered_json m;
    m["tool"] = "gfast";
    m["version"] = kVersion;
    m["command"] = command_;
    m["scenario"] = {{"path", scenario_path_.string()}, {"sha256", sha256_hex(scenario_text_)}};
    m["seed"] = seed_;
    m["realizations"] = scenario_.realizations;
    m["workers"] = workers_;
    m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m["started_utc"] = started_;
    m["finished_utc"] = utc_now();
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
    for (const auto& [k, v] : notes_) m["notes"][k] = v;
    m["artifacts"] = ordered_json::array();
    for (const auto& a : artifacts_)
      m["artifacts"].push_back({{"path", a}, {"bytes", fs::file_size(path(a))}, {"sha256", sha256_file(path(a))}});
    m["warnings"] = warnings_;
    std::ofstream out(path("manifest.json"), std::ios::binary | std::ios::trunc);
    out << m.dump(2) << '\n';
    out.close();
    if (!out) throw Error("cannot write " + path("manifest.json").string());

    RunResult r;
    r.directory = dir_;
    for (const auto& a : artifacts_) r.artifacts.emplace_back(a);
    r.artifacts.emplace_back("manifest.json");
    r.warnings = warnings_;
    return r;
  }

 private:
  static std::string read_file_or_reject(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("scenario", "cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string command_;
  fs::path scenario_path_;
  std::string scenario_text_;
  Scenario scenario_;
  std::vector<std::string> warnings_;
  std::uint64_t seed_ = 0;
  unsigned workers_ = 1;
  fs::path dir_;
  std::vector<std::string> artifacts_;
  std::map<std::string, std::string> notes_;
  std::string started_;
  std::chrono::steady_clock::time_point clock_;
};

const std::vector<std::string> kPerUserHeader{
    "kind", "solver", "line", "line_length_m", "encoding_rank", "prioritized", "weight", "r_min_bps", "srop_bps",
    "rate_bps", "normalized_pct", "line_power_w", "lambda", "n_max"};

struct UserRows {
  CsvWriter per_user;
  CsvWriter per_tone;
  CsvWriter summary;

  explicit UserRows(const Run& run)
      : per_user(run.path("per_user.csv"), kPerUserHeader),
        per_tone(run.path("per_tone.csv"),
                 {"kind", "tone", "frequency_hz", "line", "active", "power_w", "rate_bits"}),
        summary(run.path("summary.csv"),
                {"kind", "solver", "sum_rate_bps", "prioritized_normalized_pct", "dual_gap", "converged", "sweeps",
                 "wsr_solves", "iterations", "phases", "disabled_pairs", "max_relative_violation",
                 "slackness_residual", "lines_below_r_min"}) {}

  void close(Run& run) {
    per_user.close();
    per_tone.close();
    summary.close();
    run.add("per_user.csv");
    run.add("per_tone.csv");
    run.add("summary.csv");
  }
};

void write_tones(CsvWriter& csv, const ChannelTensor& tensor, const PrecoderSolution& sol) {
  const auto kind = to_string(sol.kind);
  for (std::size_t n = 0; n < tensor.num_tones(); ++n) {
    for (std::size_t l = 0; l < tensor.num_lines(); ++l) {
      const auto r = static_cast<Eigen::Index>(n);
      const auto c = static_cast<Eigen::Index>(l);
      csv << kind << static_cast<std::uint64_t>(n) << tensor.band().tone_frequency_hz(n) << static_cast<std::uint64_t>(l)
          << !sol.disabled.contains(n, l) << sol.power(r, c) << sol.rates(r, c);
      csv.end_row();
    }
  }
}

void write_users(CsvWriter& csv, const std::string& solver, const std::vector<double>& lengths,
                 const PrecoderSolution& sol, const PrecoderSolution& srop, const SolveReport* report) {
  const auto ranks = sol.order.ranks();
  for (std::size_t l = 0; l < lengths.size(); ++l) {
    const auto i = static_cast<Eigen::Index>(l);
    const bool prio = report ? report->partition.is_prioritized(l) : true;
    const double rmin = report && !prio ? report->partition.min_rate_bps[l] : 0.0;
    const double ref = srop.user_rate(i);
    std::uint64_t n_max = sol.disabled.num_tones();
    if (report && !report->n_max.empty()) n_max = report->n_max[l];
    csv << to_string(sol.kind) << solver << static_cast<std::uint64_t>(l) << lengths[l]
        << static_cast<std::uint64_t>(ranks[l]) << prio << sol.weights(i) << rmin << ref << sol.user_rate(i)
        << (ref > 0.0 ? 100.0 * sol.user_rate(i) / ref : 0.0) << sol.line_power(i)
        << (report && i < report->lambda.size() ? report->lambda(i) : 0.0) << n_max;
    csv.end_row();
  }
}

void write_summary(CsvWriter& csv, const std::string& solver, const PrecoderSolution& sol, const SolveReport* report,
                   int iterations_fallback) {
  csv << to_string(sol.kind) << solver << sol.sum_rate_bps()
      << (report ? 100.0 * report->prioritized_normalized_rate() : 100.0) << sol.dual_gap
      << (report ? report->converged : sol.converged) << sol.sweeps
      << (report ? report->wsr_solves : sol.wsr_solves) << (report ? report->iterations : iterations_fallback)
      << (report ? report->phases : 0) << static_cast<std::uint64_t>(sol.disabled.size())
      << (report ? report->max_relative_violation() : 0.0) << (report ? report->slackness_residual : 0.0)
      << static_cast<std::uint64_t>(report ? report->below_min_rate.size() : 0);
  csv.end_row();
}

void run_single(Run& run, const std::string& command) {
  const auto& s = run.scenario();
  const auto lengths = realization_lengths(s, run.seed());
  const auto tensor = build_channel(s, run.seed(), lengths);
  save_channel(tensor, run.path("channel.bin"));
  run.add("channel.bin");
  const auto constraints = build_constraints(s, tensor.band());
  const auto gap = scenario_gap(s);
  UserRows rows(run);
  std::unique_ptr<CsvWriter> trajectory;
  if (command == "minrate") {
    trajectory = std::make_unique<CsvWriter>(
        run.path("lambda_trajectory.csv"),
        std::vector<std::string>{"kind", "phase", "iteration", "line", "lambda_before", "step_per_bps", "r_min_bps",
                                 "rate_bps", "lambda_after"});
  }
  for (auto kind : s.kinds) {
    if (command == "srop") {
      const auto order = make_order(lengths, PriorityPartition::all(lengths.size()));
      const auto sol = solve_srop(tensor, kind, constraints, gap, order, s.settings.spectrum);
      for (const auto& w : sol.warnings) run.warn(to_string(kind) + ": " + w);
      write_users(rows.per_user, "srop", lengths, sol, sol, nullptr);
      write_tones(rows.per_tone, tensor, sol);
      write_summary(rows.summary, "srop", sol, nullptr, 0);
      continue;
    }
    const auto partition = build_partition(s);
    const auto order = make_order(lengths, partition);
    const auto report = command == "minrate"
                            ? solve_alternating(tensor, kind, constraints, gap, partition, order, s.settings)
                            : solve_heuristic(tensor, kind, constraints, gap, partition, order, s.settings);
    for (const auto& w : report.warnings) run.warn(to_string(kind) + ": " + w);
    write_users(rows.per_user, report.solver, lengths, report.solution, report.srop, &report);
    write_tones(rows.per_tone, tensor, report.solution);
    write_summary(rows.summary, report.solver, report.solution, &report, report.iterations);
    if (trajectory) {
      for (const auto& t : report.trajectory) {
        *trajectory << to_string(kind) << t.phase << t.iteration << static_cast<std::uint64_t>(t.line)
                    << t.lambda_before << t.step << t.r_min << t.rate << t.lambda_after;
        trajectory->end_row();
      }
    }
  }
  rows.close(run);
  if (trajectory) {
    trajectory->close();
    run.add("lambda_trajectory.csv");
  }
}

void run_region(Run& run) {
  const auto& s = run.scenario();
  RegionSweepSpec spec;
  spec.partition = build_partition(s);
  if (spec.partition.prioritized_lines().empty() || spec.partition.constrained_lines().empty())
    throw ValidationError("partition.prioritized_lines", "a region sweep needs two non-empty groups");
  spec.ratios = s.region_ratios;
  spec.kinds = s.kinds;

  CsvWriter points(run.path("region_points.csv"), {"realization", "seed", "kind", "ratio", "group1_pct", "group2_pct",
                                                   "group1_bps", "group2_bps", "pareto", "error"});
  // Average of normalized coordinates at a fixed ratio, over realizations.
  std::map<std::pair<int, double>, std::vector<RegionPoint>> by_ratio;
  for (std::size_t r = 0; r < s.realizations; ++r) {
    const auto seed = run.seed() + r;
    const auto lengths = realization_lengths(s, seed);
    const auto tensor = build_channel(s, seed, lengths);
    const auto constraints = build_constraints(s, tensor.band());
    const auto pts = sweep_region(tensor, lengths, spec, constraints, scenario_gap(s), s.settings.spectrum,
                                  run.workers());
    for (const auto& p : pts) {
      points << static_cast<std::uint64_t>(r) << seed << to_string(p.kind) << p.ratio << p.group1_pct << p.group2_pct
             << p.group1_bps << p.group2_bps << p.pareto << p.error;
      points.end_row();
      if (!p.error.empty()) run.warn("realization " + std::to_string(r) + ", ratio " + format_number(p.ratio) + ": " + p.error);
      by_ratio[{static_cast<int>(p.kind), p.ratio}].push_back(p);
    }
  }
  points.close();
  run.add("region_points.csv");

  std::vector<RegionPoint> mean;
  std::vector<std::size_t> counts;
  for (const auto& [key, list] : by_ratio) {
    RegionPoint m;
    m.kind = static_cast<PrecoderKind>(key.first);
    m.ratio = key.second;
    std::size_t ok = 0;
    for (const auto& p : list) {
      if (!p.error.empty()) continue;
      ++ok;
      m.group1_pct += p.group1_pct;
      m.group2_pct += p.group2_pct;
      m.group1_bps += p.group1_bps;
      m.group2_bps += p.group2_bps;
    }
    if (ok == 0) {
      m.error = "every realization failed";
    } else {
      const double k = static_cast<double>(ok);
      m.group1_pct /= k;
      m.group2_pct /= k;
      m.group1_bps /= k;
      m.group2_bps /= k;
    }
    mean.push_back(m);
    counts.push_back(ok);
  }
  mark_pareto(mean);
  CsvWriter avg(run.path("region.csv"), {"kind", "ratio", "group1_pct", "group2_pct", "group1_bps", "group2_bps",
                                         "pareto", "realizations"});
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const auto& m = mean[i];
    avg << to_string(m.kind) << m.ratio << m.group1_pct << m.group2_pct << m.group1_bps << m.group2_bps << m.pareto
        << static_cast<std::uint64_t>(counts[i]);
    avg.end_row();
  }
  avg.close();
  run.add("region.csv");
  run.note("region_averaging", "normalized coordinates averaged over realizations at each fixed weight ratio");
  run.note("region_pareto", "dominated points are kept and flagged with pareto=0");
}

void run_round_robin(Run& run) {
  const auto& s = run.scenario();
  CsvWriter gains(run.path("gains.csv"), {"realization", "seed", "window", "line", "kind", "mode", "role",
                                          "line_length_m", "srop_bps", "achieved_bps", "gain_pct", "wsr_solves"});
  std::vector<GainRecord> all;
  for (std::size_t r = 0; r < s.realizations; ++r) {
    const auto seed = run.seed() + r;
    const auto lengths = realization_lengths(s, seed);
    const auto tensor = build_channel(s, seed, lengths);
    const auto constraints = build_constraints(s, tensor.band());
    for (auto kind : s.kinds) {
      RoundRobinSpec spec;
      spec.group_size = s.rr_group_size;
      spec.kind = kind;
      spec.mode = s.rr_mode;
      spec.min_rate_bps = s.rr_min_rate_bps;
      spec.solver = s.rr_solver;
      const auto records = round_robin_study(tensor, lengths, spec, constraints, scenario_gap(s), s.settings, r,
                                             run.workers());
      for (const auto& g : records) {
        gains << g.realization << seed << static_cast<std::uint64_t>(g.window) << static_cast<std::uint64_t>(g.line)
              << to_string(g.kind) << to_string(g.mode) << g.role << g.line_length_m << g.srop_bps << g.achieved_bps
              << g.gain_pct << g.wsr_solves;
        gains.end_row();
      }
      all.insert(all.end(), records.begin(), records.end());
    }
  }
  gains.close();
  run.add("gains.csv");

  CsvWriter summary(run.path("gain_summary.csv"),
                    {"kind", "mode", "role", "count", "mean_gain_pct", "mean_normalized_pct", "p10_normalized_pct",
                     "p50_normalized_pct", "p90_normalized_pct", "spearman_gain_vs_srop_rate",
                     "spearman_gain_vs_length"});
  for (const auto& g : aggregate(all)) {
    std::vector<double> gain, rate, length;
    for (const auto& r : all) {
      if (r.kind != g.kind || r.mode != g.mode || r.role != g.role) continue;
      gain.push_back(r.gain_pct);
      rate.push_back(r.srop_bps);
      length.push_back(r.line_length_m);
    }
    summary << to_string(g.kind) << to_string(g.mode) << g.role << static_cast<std::uint64_t>(g.count)
            << g.mean_gain_pct << g.mean_normalized_pct << g.p10_normalized_pct << g.p50_normalized_pct
            << g.p90_normalized_pct << (gain.size() > 1 ? spearman(gain, rate) : 0.0)
            << (gain.size() > 1 ? spearman(gain, length) : 0.0);
    summary.end_row();
  }
  summary.close();
  run.add("gain_summary.csv");
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

RunResult run_experiment(const std::string& command, const std::filesystem::path& scenario_path,
                         const RunOptions& options) {
  if (command != "srop" && command != "minrate" && command != "heuristic" && command != "region" &&
      command != "roundrobin")
    throw ValidationError("command", "unknown experiment '" + command + "'");
  Run run(command, scenario_path, options);
  run.prepare();
  if (command == "region")
    run_region(run);
  else if (command == "roundrobin")
    run_round_robin(run);
  else
    run_single(run, command);
  return run.finish();
}

std::filesystem::path export_plotdata(const std::filesystem::path& run_dir, const std::string& figure) {
  if (figure == "region") {
    const auto t = read_csv(run_dir / "region.csv");
    const auto out = run_dir / "plot_region.csv";
    CsvWriter csv(out, {"ratio", "group1_pct", "group2_pct", "kind", "pareto"});
    const auto ratio = t.column("ratio"), g1 = t.column("group1_pct"), g2 = t.column("group2_pct"),
               kind = t.column("kind"), pareto = t.column("pareto");
    for (const auto& r : t.rows) {
      csv << parse_number(r[ratio], t.source) << parse_number(r[g1], t.source) << parse_number(r[g2], t.source)
          << r[kind] << r[pareto];
      csv.end_row();
    }
    csv.close();
    return out;
  }
  if (figure == "gains_vs_rate" || figure == "gains_vs_length") {
    const auto t = read_csv(run_dir / "gains.csv");
    const bool by_rate = figure == "gains_vs_rate";
    const auto out = run_dir / ("plot_" + figure + ".csv");
    CsvWriter csv(out, {"kind", "mode", "realization", "line", by_rate ? "srop_rate_mbps" : "line_length_m",
                        "gain_pct"});
    const auto kind = t.column("kind"), mode = t.column("mode"), real = t.column("realization"),
               line = t.column("line"), x = t.column(by_rate ? "srop_bps" : "line_length_m"),
               gain = t.column("gain_pct");
    for (const auto& r : t.rows) {
      const double xv = parse_number(r[x], t.source);
      csv << r[kind] << r[mode] << r[real] << r[line] << (by_rate ? xv / 1e6 : xv) << parse_number(r[gain], t.source);
      csv.end_row();
    }
    csv.close();
    return out;
  }
  if (figure == "per_tone") {
    const auto t = read_csv(run_dir / "per_tone.csv");
    const auto out = run_dir / "plot_per_tone.csv";
    CsvWriter csv(out, {"kind", "tone", "frequency_hz", "mean_rate_bits", "active_lines", "disabled_lines"});
    const auto kind = t.column("kind"), tone = t.column("tone"), freq = t.column("frequency_hz"),
               active = t.column("active"), rate = t.column("rate_bits");
    std::size_t i = 0;
    while (i < t.rows.size()) {
      std::size_t j = i;
      double sum = 0.0;
      std::uint64_t on = 0;
      std::uint64_t off = 0;
      for (; j < t.rows.size() && t.rows[j][kind] == t.rows[i][kind] && t.rows[j][tone] == t.rows[i][tone]; ++j) {
        sum += parse_number(t.rows[j][rate], t.source);
        (t.rows[j][active] == "1" ? on : off) += 1;
      }
      csv << t.rows[i][kind] << t.rows[i][tone] << parse_number(t.rows[i][freq], t.source)
          << sum / static_cast<double>(j - i) << on << off;
      csv.end_row();
      i = j;
    }
    csv.close();
    return out;
  }
  throw ValidationError("figure", "unknown figure '" + figure + "' (region, gains_vs_rate, gains_vs_length, per_tone)");
}

bool RunAudit::ok(double tolerance) const {
  return streams_checked > 0 && max_rate_mismatch <= 1e-9 && max_mask_excess <= tolerance &&
         max_sum_excess <= tolerance && max_bits <= b_max + 1e-9;
}

RunAudit audit_run(const std::filesystem::path& run_dir) {
  const auto scenario = parse_scenario(read_file(run_dir / "scenario.json"), run_dir);
  const auto tensor = load_channel(run_dir / "channel.bin");
  const auto constraints = build_constraints(scenario, tensor.band());
  const auto gap = scenario_gap(scenario);
  const auto users = read_csv(run_dir / "per_user.csv");
  const auto tones = read_csv(run_dir / "per_tone.csv");
  const std::size_t N = tensor.num_tones();
  const std::size_t L = tensor.num_lines();

  RunAudit audit;
  audit.b_max = constraints.max_bits;
  std::vector<std::string> kinds;
  for (const auto& r : users.rows)
    if (std::find(kinds.begin(), kinds.end(), r[users.column("kind")]) == kinds.end())
      kinds.push_back(r[users.column("kind")]);

  for (const auto& name : kinds) {
    PrecoderSolution sol;
    sol.kind = parse_precoder_kind(name);
    sol.order.lines.assign(L, 0);
    std::vector<bool> placed(L, false);
    for (const auto& r : users.rows) {
      if (r[users.column("kind")] != name) continue;
      const auto line = static_cast<std::size_t>(parse_number(r[users.column("line")], users.source));
      const auto rank = static_cast<std::size_t>(parse_number(r[users.column("encoding_rank")], users.source));
      if (line >= L || rank >= L || placed[rank]) throw FormatError(users.source + ": bad encoding ranks for " + name);
      placed[rank] = true;
      sol.order.lines[rank] = line;
    }
    sol.order.validate(L);
    sol.disabled = DisabledSet(N, L);
    sol.power = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(L));
    sol.rates = sol.power;
    std::size_t seen = 0;
    for (const auto& r : tones.rows) {
      if (r[tones.column("kind")] != name) continue;
      const auto n = static_cast<std::size_t>(parse_number(r[tones.column("tone")], tones.source));
      const auto l = static_cast<std::size_t>(parse_number(r[tones.column("line")], tones.source));
      if (n >= N || l >= L) throw FormatError(tones.source + ": tone/line index out of range");
      if (r[tones.column("active")] == "0") sol.disabled.insert(n, l);
      sol.power(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l)) =
          parse_number(r[tones.column("power_w")], tones.source);
      sol.rates(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l)) =
          parse_number(r[tones.column("rate_bits")], tones.source);
      ++seen;
    }
    if (seen != N * L)
      throw FormatError(tones.source + ": expected " + std::to_string(N * L) + " rows for " + name + ", found " +
                        std::to_string(seen));
    sol.structure = build_precoder(sol.kind, tensor, sol.disabled, sol.order);
    const auto report = audit_solution(tensor, sol, constraints, gap);
    audit.max_rate_mismatch = std::max(audit.max_rate_mismatch, report.max_rate_mismatch);
    audit.max_mask_excess = std::max(audit.max_mask_excess, report.max_mask_excess);
    audit.max_sum_excess = std::max(audit.max_sum_excess, report.max_sum_excess);
    audit.max_bits = std::max(audit.max_bits, report.max_bits);
    audit.streams_checked += N * L - sol.disabled.size();
  }
  return audit;
}

}  // namespace gfast
