#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gfast/scenario.hpp"

namespace gfast {

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // overrides the scenario's output_dir
  std::optional<std::uint64_t> seed;             // overrides the scenario's seed
  unsigned workers = 1;
};

struct RunResult {
  std::filesystem::path directory;
  std::vector<std::filesystem::path> artifacts;  // relative to `directory`
  std::vector<std::string> warnings;
};

/// Hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Runs one experiment ("srop", "minrate", "heuristic", "region", "roundrobin") and writes its
/// CSV tables plus manifest.json into the output directory.
RunResult run_experiment(const std::string& command, const std::filesystem::path& scenario_path,
                         const RunOptions& options);

/// Figure data from a finished run: "region", "gains_vs_rate", "gains_vs_length", "per_tone".
/// Returns the written file.
std::filesystem::path export_plotdata(const std::filesystem::path& run_dir, const std::string& figure);

struct RunAudit {
  std::size_t streams_checked = 0;
  double max_rate_mismatch = 0.0;  // bits per tone
  double max_mask_excess = 0.0;    // relative
  double max_sum_excess = 0.0;     // relative
  double max_bits = 0.0;
  double b_max = 0.0;
  bool ok(double tolerance = 1e-6) const;
};

/// Recomputes every per-tone rate of a run from its channel file, power table and disabled set.
RunAudit audit_run(const std::filesystem::path& run_dir);

}  // namespace gfast
