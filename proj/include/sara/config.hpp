#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sara/objectives.hpp"
#include "sara/optimizers.hpp"
#include "sara/subspace.hpp"

namespace sara {

/// Learning-rate multiplier: linear warmup then optional cosine decay to `min_ratio`.
struct LrSchedule {
  std::string kind = "constant";  // "constant" | "warmup_cosine"
  std::int64_t warmup_steps = 0;
  double min_ratio = 0.0;

  double multiplier(std::int64_t step, std::int64_t total_steps) const;
};

struct RunConfig {
  /// Objective description, e.g. {"kind": "quadratic", ...} or {"kind": "mlp", ...}.
  nlohmann::json objective;
  OptimizerKind optimizer = OptimizerKind::GaLoreAdam;
  SelectorSpec selector;
  HyperParams hyper;
  LrSchedule lr_schedule;
  std::int64_t total_steps = 0;
  std::int64_t metric_cadence = 200;
  /// Cadence of full-gradient norm rows; defaults to metric_cadence.
  std::optional<std::int64_t> grad_norm_cadence;
  std::optional<std::int64_t> anchor_step;
  std::vector<std::int64_t> checkpoint_steps;
  /// Replace beta1 / tau / eta with the convergence-theorem schedule (quadratic objectives).
  bool theory_schedule = false;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::filesystem::path out_dir = "run";

  void validate() const;
  /// Hash of everything except out_dir (hex FNV-1a 64 of the canonical JSON).
  std::string hash() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Builds the objective named by a RunConfig's objective block.
std::unique_ptr<Objective> make_objective(const nlohmann::json& spec);

}  // namespace sara
