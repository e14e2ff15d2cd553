#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sara/matcore.hpp"
#include "sara/projector_log.hpp"

namespace sara {

/// Orthonormality tolerance for overlap inputs (looser than construction so that
/// serialized bases still qualify).
inline constexpr double kOverlapOrthoTol = 1e-8;

/// overlap(U, V) = ||U^T V||_F^2 / r for m x r orthonormal U, V. Lies in [0, 1];
/// depends only on the two column spans.
double subspace_overlap(const Matrix& u, const Matrix& v);

struct OverlapPoint {
  std::int64_t step = 0;
  std::string layer;
  double value = 0.0;
};
using OverlapSeries = std::vector<OverlapPoint>;

/// Overlap between consecutive logged projectors of each layer (by step order).
OverlapSeries adjacent_overlap(const std::vector<ProjectorLogEntry>& log);

/// Overlap of every projector at step >= anchor_step with the anchor projector, per layer.
OverlapSeries anchor_overlap(const std::vector<ProjectorLogEntry>& log, std::int64_t anchor_step);

struct SpectrumReport {
  std::string layer;
  /// Singular values of the difference divided by the largest (all zero for a zero diff).
  std::vector<double> normalized;
  /// ||D||_F^2 / sigma_max(D)^2, or 0 for a zero diff.
  double stable_rank = 0.0;
};

SpectrumReport update_spectrum(const std::string& layer, const Matrix& before, const Matrix& after);

double stable_rank(const Matrix& m);

/// Writer for the `step,layer,metric,value` CSV format.
class MetricsCsv {
 public:
  explicit MetricsCsv(const std::filesystem::path& path);

  void row(std::int64_t step, const std::string& layer, const std::string& metric, double value);

 private:
  std::ofstream out_;
};

struct MetricRow {
  std::int64_t step = 0;
  std::string layer;
  std::string metric;
  double value = 0.0;
};

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace sara
