#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sara/matcore.hpp"

namespace sara {

/// One matrix per layer; layer l has shape m_l x n_l with m_l <= n_l.
using LayeredParams = std::vector<Matrix>;

struct GradientSample {
  std::vector<Matrix> grads;
  double loss = 0.0;
  /// ||G_l - grad_l f||_F per layer (zero when the noise is not explicitly constructed).
  std::vector<double> noise_norms;
};

/// Per-layer almost-sure Frobenius bound on gradient noise.
struct NoiseSpec {
  std::vector<double> sigma;

  double sigma_sq() const;
};

/// A differentiable objective over layered matrix parameters.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string kind() const = 0;
  virtual std::vector<std::string> layer_names() const = 0;
  virtual LayeredParams initial_params(RngStream& rng) const = 0;
  /// Full (deterministic) objective value.
  virtual double loss(const LayeredParams& x) const = 0;
  /// Exact gradient of `loss`.
  virtual std::vector<Matrix> gradient(const LayeredParams& x) const = 0;
  /// Stochastic gradient for optimizer step `step`.
  virtual GradientSample sample_gradient(const LayeredParams& x, std::int64_t step, RngStream& rng) const = 0;
};

/// f(x) = 1/2 sum_l ||A_l x_l - B_l||_F^2 with bounded, centered gradient noise.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::vector<Matrix> a, std::vector<Matrix> b, NoiseSpec noise = {});

  std::string kind() const override { return "quadratic"; }
  std::vector<std::string> layer_names() const override;
  LayeredParams initial_params(RngStream& rng) const override;
  double loss(const LayeredParams& x) const override;
  std::vector<Matrix> gradient(const LayeredParams& x) const override;
  GradientSample sample_gradient(const LayeredParams& x, std::int64_t step, RngStream& rng) const override;

  /// L = max_l sigma_max(A_l^T A_l).
  double smoothness() const;
  /// inf_x f(x), from the least-squares solution of each layer.
  double infimum() const;
  const NoiseSpec& noise() const noexcept { return noise_; }
  const std::vector<Matrix>& a() const noexcept { return a_; }
  const std::vector<Matrix>& b() const noexcept { return b_; }

 private:
  std::vector<Matrix> a_;
  std::vector<Matrix> b_;
  NoiseSpec noise_;
};

/// Quadratic with A_l square (m_l x m_l), singular values uniform in
/// [min_singular, max_singular], random B_l.
QuadraticObjective random_quadratic(const std::vector<std::pair<Index, Index>>& shapes,
                                    double min_singular, double max_singular, NoiseSpec noise,
                                    RngStream& rng);

/// G_l = grad_l f(x) + E_l with E_l = min(|z| sigma_l / 3, sigma_l) * D / ||D||_F,
/// z ~ N(0, 1) and D a standard Gaussian matrix.
GradientSample noisy_grad(const Objective& objective, const LayeredParams& x, const NoiseSpec& spec,
                          RngStream& rng);

/// Central differences of `objective.loss`, coordinate by coordinate.
std::vector<Matrix> finite_difference_grad(const Objective& objective, const LayeredParams& x, double h);

struct Dataset {
  Matrix features;          // samples x input_dim
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;
};

/// Gaussian blobs: class centres ~ N(0, separation^2 I), points = centre + N(0, I).
/// Feature k (centre and noise) is then scaled by feature_decay^k, and class c keeps
/// max(1, round(samples_per_class * class_decay^c)) points.
Dataset make_blobs(Index input_dim, int num_classes, Index samples_per_class, double separation,
                   std::uint64_t seed, double feature_decay = 1.0, double class_decay = 1.0);
void save_dataset_csv(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset_csv(const std::filesystem::path& path);

struct MlpShape {
  Index input = 32;
  Index hidden = 64;
  Index classes = 32;
};

/// Two-layer perceptron, linear -> ReLU -> linear -> softmax cross-entropy, no biases.
///
/// Layer weights are stored in whichever orientation has rows <= cols (W or W^T),
/// so every stored layer satisfies m <= n.
class MlpObjective final : public Objective {
 public:
  MlpObjective(Dataset data, Index hidden, Index batch_size, std::uint64_t dataset_seed);

  std::string kind() const override { return "mlp"; }
  std::vector<std::string> layer_names() const override { return {"fc1", "fc2"}; }
  LayeredParams initial_params(RngStream& rng) const override;
  double loss(const LayeredParams& x) const override;
  std::vector<Matrix> gradient(const LayeredParams& x) const override;
  GradientSample sample_gradient(const LayeredParams& x, std::int64_t step, RngStream& rng) const override;

  /// Mini-batch rows used at `step`; a pure function of (dataset seed, step).
  std::vector<Index> batch_indices(std::int64_t step) const;
  double batch_loss(const LayeredParams& x, const std::vector<Index>& rows) const;
  std::vector<Matrix> batch_gradient(const LayeredParams& x, const std::vector<Index>& rows,
                                     double* loss_out = nullptr) const;

  const Dataset& data() const noexcept { return data_; }
  MlpShape shape() const noexcept { return shape_; }
  bool transposed(std::size_t layer) const noexcept { return transposed_[layer]; }

 private:
  double forward_backward(const LayeredParams& x, const std::vector<Index>& rows,
                          std::vector<Matrix>* grads) const;
  Matrix weight(const LayeredParams& x, std::size_t layer) const;

  Dataset data_;
  MlpShape shape_;
  Index batch_size_;
  std::uint64_t dataset_seed_;
  bool transposed_[2];
};

}  // namespace sara
