#pragma once

#include <cstdint>

#include "json.hpp"
#include "sara/subspace.hpp"

namespace sara {

/// Constants of the low-rank MSGD convergence guarantee.
struct TheoryParams {
  double L = 1.0;         // smoothness
  double Delta = 1.0;     // f(x0) - inf f
  double sigma_sq = 0.0;  // sum of per-layer noise bounds squared
  double delta = 1.0;     // min inclusion probability, in (0, 1]
  std::int64_t T = 1;

  void validate() const;
};

struct Schedule {
  double beta1 = 1.0;
  std::int64_t tau = 1;
  double eta = 0.0;
};

/// 2 + 128/(3 delta) + (128 sigma)^2 / (9 sqrt(delta) L Delta)
double horizon_threshold(const TheoryParams& p);
bool admissible_horizon(const TheoryParams& p);

/// beta1 = 1 / (1 + sqrt(delta^1.5 sigma^2 T / (L Delta)))
/// tau   = ceil(64 / (3 delta beta1))
/// eta   = 1 / (4L + sqrt(80L^2/(3 delta beta1^2) + 80 tau^2 L^2/(3 delta)) + sqrt(16 tau L^2/(3 beta1)))
Schedule schedule_from_theorem(const TheoryParams& p);

/// The four step-size caps the schedule must respect, and their minimum.
struct StepSizeCaps {
  double smooth;    // 1 / (4L)
  double momentum;  // sqrt(3 delta beta1^2 / (80 L^2))
  double period;    // sqrt(3 delta / (80 tau^2 L^2))
  double mixed;     // sqrt(3 beta1 / (16 tau L^2))

  double min() const;
};

StepSizeCaps step_size_caps(double L, double delta, double beta1, std::int64_t tau);

struct ProjectionBoundReport {
  double lhs_mean = 0.0;    // mean of ||(I - P P^T) G||_F^2 over draws of P
  double lhs_stderr = 0.0;
  double rhs = 0.0;         // (1 - delta) ||G||_F^2
  double delta = 0.0;
  std::int64_t trials = 0;
  bool pass = false;
};

inline constexpr std::int64_t kMinProjectionTrials = 10000;

/// Monte-Carlo check of E||(I - P P^T) G||^2 <= (1 - delta) ||G||^2 at a fixed G.
/// SARA uses delta from the exact (or, above 12 singular values, estimated) inclusion
/// probabilities of G's singular weights; random orthonormal bases use delta = r/m.
ProjectionBoundReport verify_projection_bound(const SelectorSpec& selector, const Matrix& g,
                                              std::int64_t trials, RngStream& rng);

struct DeltaComparison {
  double delta_sara = 0.0;
  double delta_uniform = 0.0;  // r / m
  double gap = 0.0;            // delta_uniform - delta_sara
};

DeltaComparison compare_delta(const SelectionWeights& w, Index r,
                              const InclusionMethod& method = ExactInclusion{});

nlohmann::json to_json(const TheoryParams& p);
nlohmann::json to_json(const Schedule& s);
nlohmann::json to_json(const ProjectionBoundReport& r);

}  // namespace sara
