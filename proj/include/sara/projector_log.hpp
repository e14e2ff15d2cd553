#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sara/subspace.hpp"

namespace sara {

struct ProjectorLogEntry {
  std::int64_t step = 0;
  std::string layer;
  SelectorType selector = SelectorType::Sara;
  std::optional<std::vector<Index>> source_indices;
  /// Sidecar path relative to the run directory.
  std::string basis_path;
  Matrix basis;
};

/// JSON-lines projector log (`projectors.jsonl`) with one binary basis sidecar per
/// record under `projectors/`.
class ProjectorLogWriter {
 public:
  explicit ProjectorLogWriter(std::filesystem::path run_dir);

  void append(std::int64_t step, const std::string& layer, SelectorType selector, const Projector& p);

 private:
  std::filesystem::path run_dir_;
  std::filesystem::path log_path_;
};

std::vector<ProjectorLogEntry> read_projector_log(const std::filesystem::path& run_dir);

}  // namespace sara
