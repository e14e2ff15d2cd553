#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sara/matcore.hpp"
#include "sara/subspace.hpp"

namespace sara {

/// Step hyperparameters. Moments carry no bias correction.
struct HyperParams {
  double eta = 0.01;    // learning rate
  double alpha = 1.0;   // low-rank update scale (Adam family only)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double xi = 1e-8;     // added to sqrt(V)
  Index rank = 1;
  std::int64_t refresh_period = 200;

  void validate() const;
};

struct AdamState {
  Matrix M;
  Matrix V;
  std::int64_t step_count = 0;

  static AdamState zeros(Index rows, Index cols);
};

/// Adafactor-style rank-1 second moment: V_hat_ij = row_i * col_j / sum(row).
struct FactoredSecondMoment {
  Vector row_acc;
  Vector col_acc;
  std::int64_t step_count = 0;

  Matrix reconstruct() const;
};

struct AdafactorState {
  Matrix M;
  FactoredSecondMoment V;

  static AdafactorState zeros(Index rows, Index cols);
};

/// Adam-mini style: one second-moment scalar per row of the projected gradient.
struct BlockSecondMoment {
  Vector v;
  std::int64_t step_count = 0;
};

struct AdamMiniState {
  Matrix M;
  BlockSecondMoment V;

  static AdamMiniState zeros(Index rows, Index cols);
};

inline constexpr Index kQuantBlockSize = 256;

/// Blockwise symmetric absmax int8 storage; dequantized value = code / 127 * scale.
struct Quantized8State {
  std::vector<std::int8_t> codes;  // row-major
  std::vector<double> scales;      // one per kQuantBlockSize elements
  Index rows = 0;
  Index cols = 0;
};

Quantized8State quantize_state(const Matrix& m);
Matrix dequantize_state(const Quantized8State& q);

/// V holds the element-wise square root of the second moment; linear codes of V itself
/// round small entries to zero and blow up M / (sqrt(V) + xi).
struct Adam8bitState {
  Quantized8State M;
  Quantized8State V;
  std::int64_t step_count = 0;

  static Adam8bitState zeros(Index rows, Index cols);
};

/// Momentum in low-rank coordinates; the full-space momentum is P * m_lr.
struct MomentumState {
  Matrix m_lr;
  std::int64_t step_count = 0;

  static MomentumState zeros(Index rows, Index cols);
};

// Each step returns the new weights and mutates only `state`.

Matrix full_adam_step(const Matrix& x, const Matrix& grad, AdamState& state, const HyperParams& hp);
Matrix galore_adam_step(const Matrix& x, const Matrix& grad, const Projector& p, AdamState& state,
                        const HyperParams& hp);

/// GaLore-Adam plus the scaled residual (I - P P^T) G. The residual is scaled by
/// ||N||_F / (||M / (sqrt(V) + xi)||_F + xi).
Matrix fira_adam_step(const Matrix& x, const Matrix& grad, const Projector& p, AdamState& state,
                      const HyperParams& hp);
Matrix galore_adafactor_step(const Matrix& x, const Matrix& grad, const Projector& p,
                             AdafactorState& state, const HyperParams& hp);
Matrix galore_adam_mini_step(const Matrix& x, const Matrix& grad, const Projector& p,
                             AdamMiniState& state, const HyperParams& hp);

/// Momentum SGD in the projected space. On a refresh the stored momentum is first
/// mapped into the new coordinates: m <- P_new^T (P_prev m).
Matrix msgd_sara_step(const Matrix& x, const Matrix& grad, const Projector& p, const Projector* prev,
                      MomentumState& state, double eta, double beta1, bool refreshed);

enum class OptimizerKind {
  FullAdam,
  GaLoreAdam,
  FiraAdam,
  GaLoreAdafactor,
  GaLoreAdamMini,
  GaLoreAdam8bit,
  FiraAdam8bit,
  Msgd,
};

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);
/// Whether the optimizer consumes a projector (everything except FullAdam).
bool uses_projector(OptimizerKind k);

using OptimizerState = std::variant<AdamState, AdafactorState, AdamMiniState, Adam8bitState, MomentumState>;

/// Zero state for one layer of shape m x n at rank r.
OptimizerState make_state(OptimizerKind kind, Index m, Index n, Index r);

struct LayerStep {
  const Matrix& x;
  const Matrix& grad;
  const Projector* projector = nullptr;
  const Projector* prev_projector = nullptr;
  bool refreshed = false;
};

Matrix step_dispatch(OptimizerKind kind, const LayerStep& in, OptimizerState& state, const HyperParams& hp);

}  // namespace sara
