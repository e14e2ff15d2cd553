#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sara/config.hpp"
#include "sara/metrics.hpp"

namespace sara {

/// Failure inside the training loop; the run directory holds a summary stub.
class RunError : public Error {
 public:
  RunError(const std::string& what, std::int64_t step, std::string layer)
      : Error(what), step_(step), layer_(std::move(layer)) {}

  std::int64_t step() const noexcept { return step_; }
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::int64_t step_;
  std::string layer_;
};

/// Runs the low-rank training loop described by `config`.
///
/// Writes into config.out_dir:
///   config.json        resolved configuration
///   metrics.csv        step,layer,metric,value
///   projectors.jsonl   one record per projector refresh (+ projectors/*.bin)
///   checkpoints/step_* per-layer weights, optimizer state, active projector
///   summary.json       RunSummary
///
/// Step t runs for t = 0 .. T-1; projectors refresh when t % tau == 0.
nlohmann::json run_experiment(const RunConfig& config);

/// Continue the run in `config` from one of its checkpoints, writing artifacts for
/// the remaining steps into `out_dir`.
nlohmann::json resume_experiment(const RunConfig& config, const std::filesystem::path& checkpoint,
                                 const std::filesystem::path& out_dir);

/// Rebuilds summary.json from config.json and metrics.csv of a finished run.
nlohmann::json summarize_run(const std::filesystem::path& run_dir);

struct Comparison {
  std::string csv;
  std::string table;
};

/// Side-by-side view of several run summaries. Throws if their objectives differ.
Comparison compare_runs(const std::vector<std::filesystem::path>& summaries);

/// Per-layer spectrum of the weight change between two checkpoints of a run; also
/// writes `spectrum_<from>_<to>.csv` into the run directory.
std::vector<SpectrumReport> checkpoint_diff(const std::filesystem::path& run_dir, std::int64_t from,
                                            std::int64_t to);

}  // namespace sara
