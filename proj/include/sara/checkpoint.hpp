#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sara/optimizers.hpp"
#include "sara/subspace.hpp"

namespace sara {

struct LayerCheckpoint {
  std::string name;
  Matrix weight;
  OptimizerState state;
  std::optional<Projector> projector;
  /// Last gradient-dominant basis seen by the overlap diagnostic.
  std::optional<Matrix> gradient_basis;
  std::optional<Matrix> anchor_basis;
  double realized_delta = 1.0;
};

/// Everything needed to continue a run from `step` (weights x^(step), i.e. after
/// `step` updates).
struct Checkpoint {
  std::int64_t step = 0;
  OptimizerKind optimizer = OptimizerKind::GaLoreAdam;
  HyperParams hyper;
  std::vector<LayerCheckpoint> layers;
};

/// Directory of per-layer binary matrices plus `manifest.json`.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::filesystem::path checkpoint_dir(const std::filesystem::path& run_dir, std::int64_t step);

}  // namespace sara
