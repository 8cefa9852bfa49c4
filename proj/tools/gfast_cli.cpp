#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gfast/errors.hpp"
#include "gfast/experiment.hpp"

namespace {

using nlohmann::ordered_json;

enum Exit { kOk = 0, kValidation = 1, kSolver = 2 };

int fail(const std::string& category, const std::string& message, const std::string& field = {}) {
  ordered_json j{{"status", "error"}, {"category", category}};
  if (!field.empty()) j["field"] = field;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return category == "validation" ? kValidation : kSolver;
}

void print(const ordered_json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vectored G.fast downlink: spectrum optimization with user prioritization"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string run_dir;
  std::string figure = "all";

  const char* experiments[] = {"srop", "minrate", "heuristic", "region", "roundrobin"};
  const char* help[] = {"sum-rate optimal point for every configured precoder",
                        "minimum-rate constrained sum rate, alternating dual solver",
                        "minimum-rate constrained sum rate, one-step heuristic",
                        "rate-region sweep between the two priority groups",
                        "round-robin prioritization study"};
  std::vector<CLI::App*> runners;
  for (int i = 0; i < 5; ++i) {
    auto* sub = app.add_subcommand(experiments[i], help[i]);
    sub->add_option("--scenario", scenario, "scenario JSON file")->required();
    sub->add_option("--out", out, "output directory (default: the scenario's output_dir)");
    sub->add_option("--seed", seed, "channel seed (default: the scenario's seed)");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    runners.push_back(sub);
  }
  auto* validate = app.add_subcommand("validate", "check a scenario file without running it");
  validate->add_option("--scenario", scenario, "scenario JSON file")->required();
  auto* exporter = app.add_subcommand("export", "write figure data from a finished run");
  exporter->add_option("--run", run_dir, "run directory")->required();
  exporter->add_option("--figure", figure, "region, gains_vs_rate, gains_vs_length, per_tone or all");
  auto* audit = app.add_subcommand("audit", "recompute a run's per-tone rates from its artifacts");
  audit->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("validation", e.what());
  }

  try {
    for (auto* sub : runners) {
      if (!sub->parsed()) continue;
      gfast::RunOptions options;
      if (!out.empty()) options.out_dir = out;
      if (sub->count("--seed")) options.seed = seed;
      options.workers = workers;
      const auto result = gfast::run_experiment(sub->get_name(), scenario, options);
      ordered_json j{{"status", "ok"}, {"command", sub->get_name()}, {"directory", result.directory.string()}};
      j["artifacts"] = ordered_json::array();
      for (const auto& a : result.artifacts) j["artifacts"].push_back(a.string());
      j["warnings"] = result.warnings;
      print(j);
      return kOk;
    }
    if (validate->parsed()) {
      const auto s = gfast::load_scenario(scenario);
      const auto warnings = gfast::validate_scenario(s);
      print(ordered_json{{"status", "ok"},
                         {"scenario", scenario},
                         {"name", s.name},
                         {"lines", s.lines()},
                         {"tones", s.band.num_tones},
                         {"warnings", warnings}});
      return kOk;
    }
    if (exporter->parsed()) {
      ordered_json j{{"status", "ok"}, {"files", ordered_json::array()}};
      if (figure == "all") {
        // Only the figures whose source tables exist in this run.
        for (const char* f : {"region", "gains_vs_rate", "gains_vs_length", "per_tone"}) {
          try {
            j["files"].push_back(gfast::export_plotdata(run_dir, f).string());
          } catch (const gfast::FormatError&) {
          }
        }
        if (j["files"].empty()) return fail("validation", "no exportable artifacts in " + run_dir);
      } else {
        j["files"].push_back(gfast::export_plotdata(run_dir, figure).string());
      }
      print(j);
      return kOk;
    }
    if (audit->parsed()) {
      const auto a = gfast::audit_run(run_dir);
      const bool ok = a.ok();
      print(ordered_json{{"status", ok ? "ok" : "failed"},
                         {"streams_checked", a.streams_checked},
                         {"max_rate_mismatch_bits", a.max_rate_mismatch},
                         {"max_mask_excess_rel", a.max_mask_excess},
                         {"max_sum_power_excess_rel", a.max_sum_excess},
                         {"max_bits", a.max_bits},
                         {"b_max_bits", a.b_max}});
      return ok ? kOk : kSolver;
    }
  } catch (const gfast::ValidationError& e) {
    return fail("validation", e.what(), e.field());
  } catch (const gfast::FormatError& e) {
    return fail("validation", e.what());
  } catch (const gfast::Error& e) {
    return fail("solver", e.what());
  } catch (const std::exception& e) {
    return fail("solver", e.what());
  }
  return kOk;
}
