#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sara/matcore.hpp"

namespace sara {

/// Orthonormal m x r basis plus where it came from.
struct Projector {
  Matrix basis;
  /// Sorted singular-vector indices the basis was built from (absent for random bases).
  std::optional<std::vector<Index>> source_indices;
  std::int64_t created_at_step = 0;

  Index rows() const noexcept { return basis.rows(); }
  Index rank() const noexcept { return basis.cols(); }
};

/// Probability weights over candidate directions; each in [0, 1], summing to 1.
class SelectionWeights {
 public:
  explicit SelectionWeights(std::vector<double> weights);

  std::span<const double> values() const noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const noexcept { return weights_[i]; }
  bool is_uniform() const noexcept;

 private:
  std::vector<double> weights_;
};

enum class SelectorType { Dominant, Sara, RandomOrthonormal };

std::string_view to_string(SelectorType t);
SelectorType selector_from_string(std::string_view name);

struct SelectorSpec {
  SelectorType type = SelectorType::Sara;
  Index rank = 1;
  std::int64_t refresh_period = 200;  // tau
};

/// w_i = S_i / sum(S); uniform when the singular values are all zero.
SelectionWeights singular_weights(std::span<const double> singular_values);
SelectionWeights singular_weights(const Vector& singular_values);

/// r distinct indices drawn by successive weighted sampling without replacement,
/// returned in ascending order. Zero-weight indices are only used once the positive
/// ones are exhausted, and then uniformly.
std::vector<Index> sample_without_replacement(const SelectionWeights& w, Index r, RngStream& rng);

Projector select_sara(const Matrix& gradient, Index r, RngStream& rng, std::int64_t step);
Projector select_dominant(const Matrix& gradient, Index r, std::int64_t step);
Projector select_random(Index m, Index r, RngStream& rng, std::int64_t step);

/// Fresh selection when step % tau == 0, otherwise `prev` passed through unchanged.
Projector refresh_projector(const SelectorSpec& spec, const Matrix& gradient,
                            const std::optional<Projector>& prev, std::int64_t step, RngStream& rng);

struct ExactInclusion {};
struct MonteCarloInclusion {
  std::int64_t trials;
  RngStream* rng;
};
/// Numerical integral of the exponential-clock form; any m, O(m^2 r) per node.
struct QuadratureInclusion {
  double step = 0.05;  // spacing in log-time
};
using InclusionMethod = std::variant<ExactInclusion, MonteCarloInclusion, QuadratureInclusion>;

struct InclusionEstimate {
  std::vector<double> probability;
  /// Per-index standard error; all zero for the exact method.
  std::vector<double> std_error;
};

/// Largest m accepted by the exact method.
inline constexpr std::size_t kMaxExactInclusionSize = 12;

/// P(i in sample) for every index under the successive-sampling law.
InclusionEstimate inclusion_probabilities(const SelectionWeights& w, Index r,
                                          const InclusionMethod& method);

/// delta = min_i P(i in sample).
double min_inclusion_probability(const SelectionWeights& w, Index r, const InclusionMethod& method);

}  // namespace sara
