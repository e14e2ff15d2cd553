#include "sara/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace sara {

double NoiseSpec::sigma_sq() const {
  double s = 0.0;
  for (double v : sigma) s += v * v;
  return s;
}

namespace {

void check_layers(const LayeredParams& x, std::size_t expected, const char* op) {
  if (x.size() != expected) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(expected) + " layers, got " +
                     std::to_string(x.size()));
  }
}

}  // namespace

QuadraticObjective::QuadraticObjective(std::vector<Matrix> a, std::vector<Matrix> b, NoiseSpec noise)
    : a_(std::move(a)), b_(std::move(b)), noise_(std::move(noise)) {
  if (a_.empty() || a_.size() != b_.size()) {
    throw ShapeError("QuadraticObjective: need matching, non-empty A and B lists");
  }
  if (noise_.sigma.empty()) noise_.sigma.assign(a_.size(), 0.0);
  if (noise_.sigma.size() != a_.size()) {
    throw InvalidArgument("QuadraticObjective: noise spec has " + std::to_string(noise_.sigma.size()) +
                          " entries for " + std::to_string(a_.size()) + " layers");
  }
  for (std::size_t l = 0; l < a_.size(); ++l) {
    if (a_[l].rows() != b_[l].rows()) {
      throw ShapeError("QuadraticObjective: layer " + std::to_string(l) + " A " + shape_str(a_[l]) +
                       " incompatible with B " + shape_str(b_[l]));
    }
    if (!(noise_.sigma[l] >= 0.0) || !std::isfinite(noise_.sigma[l])) {
      throw InvalidArgument("QuadraticObjective: sigma must be finite and >= 0");
    }
  }
}

std::vector<std::string> QuadraticObjective::layer_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < a_.size(); ++l) names.push_back("layer" + std::to_string(l));
  return names;
}

LayeredParams QuadraticObjective::initial_params(RngStream& rng) const {
  LayeredParams x;
  for (std::size_t l = 0; l < a_.size(); ++l) x.push_back(gaussian_matrix(rng, a_[l].cols(), b_[l].cols()));
  return x;
}

double QuadraticObjective::loss(const LayeredParams& x) const {
  check_layers(x, a_.size(), "QuadraticObjective::loss");
  double f = 0.0;
  for (std::size_t l = 0; l < a_.size(); ++l) {
    const Matrix r = matmul(a_[l], x[l]) - b_[l];
    f += 0.5 * r.squaredNorm();
  }
  return f;
}

std::vector<Matrix> QuadraticObjective::gradient(const LayeredParams& x) const {
  check_layers(x, a_.size(), "QuadraticObjective::gradient");
  std::vector<Matrix> g;
  for (std::size_t l = 0; l < a_.size(); ++l) {
    require_same_shape(x[l], Matrix(a_[l].cols(), b_[l].cols()), "QuadraticObjective::gradient");
    g.push_back(a_[l].transpose() * (a_[l] * x[l] - b_[l]));
  }
  return g;
}

GradientSample QuadraticObjective::sample_gradient(const LayeredParams& x, std::int64_t, RngStream& rng) const {
  return noisy_grad(*this, x, noise_, rng);
}

double QuadraticObjective::smoothness() const {
  double l_max = 0.0;
  for (const auto& a : a_) l_max = std::max(l_max, spectral_norm(Matrix(a.transpose() * a)));
  return l_max;
}

double QuadraticObjective::infimum() const {
  double f = 0.0;
  for (std::size_t l = 0; l < a_.size(); ++l) {
    const Matrix xs = a_[l].completeOrthogonalDecomposition().solve(b_[l]);
    f += 0.5 * (a_[l] * xs - b_[l]).squaredNorm();
  }
  return f;
}

QuadraticObjective random_quadratic(const std::vector<std::pair<Index, Index>>& shapes, double min_singular,
                                    double max_singular, NoiseSpec noise, RngStream& rng) {
  if (!(min_singular > 0.0 && max_singular >= min_singular)) {
    throw InvalidArgument("random_quadratic: need 0 < min_singular <= max_singular");
  }
  std::vector<Matrix> a, b;
  for (auto [m, n] : shapes) {
    const Matrix q1 = qr_orthonormal(gaussian_matrix(rng, m, m));
    const Matrix q2 = qr_orthonormal(gaussian_matrix(rng, m, m));
    Vector s(m);
    for (Index i = 0; i < m; ++i) s(i) = min_singular + (max_singular - min_singular) * rng.uniform();
    a.push_back(q1 * s.asDiagonal() * q2.transpose());
    b.push_back(gaussian_matrix(rng, m, n));
  }
  return QuadraticObjective(std::move(a), std::move(b), std::move(noise));
}

GradientSample noisy_grad(const Objective& objective, const LayeredParams& x, const NoiseSpec& spec,
                          RngStream& rng) {
  GradientSample out;
  out.grads = objective.gradient(x);
  out.loss = objective.loss(x);
  if (spec.sigma.size() != out.grads.size()) {
    throw InvalidArgument("noisy_grad: noise spec has " + std::to_string(spec.sigma.size()) +
                          " entries for " + std::to_string(out.grads.size()) + " layers");
  }
  out.noise_norms.assign(out.grads.size(), 0.0);
  for (std::size_t l = 0; l < out.grads.size(); ++l) {
    const double sigma = spec.sigma[l];
    if (!std::isfinite(sigma) || sigma < 0.0) throw InvalidArgument("noisy_grad: sigma must be finite and >= 0");
    if (sigma == 0.0) continue;
    const Matrix d = gaussian_matrix(rng, out.grads[l].rows(), out.grads[l].cols());
    const double radius = std::min(std::abs(rng.normal()) * sigma / 3.0, sigma);
    const double dn = frobenius_norm(d);
    if (dn == 0.0) continue;
    const Matrix e = (radius / dn) * d;
    out.grads[l] += e;
    out.noise_norms[l] = frobenius_norm(e);
  }
  return out;
}

std::vector<Matrix> finite_difference_grad(const Objective& objective, const LayeredParams& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_difference_grad: h must be > 0");
  std::vector<Matrix> g;
  LayeredParams probe = x;
  for (std::size_t l = 0; l < x.size(); ++l) {
    Matrix gl(x[l].rows(), x[l].cols());
    for (Index i = 0; i < x[l].rows(); ++i) {
      for (Index j = 0; j < x[l].cols(); ++j) {
        const double orig = x[l](i, j);
        probe[l](i, j) = orig + h;
        const double fp = objective.loss(probe);
        probe[l](i, j) = orig - h;
        const double fm = objective.loss(probe);
        probe[l](i, j) = orig;
        gl(i, j) = (fp - fm) / (2.0 * h);
      }
    }
    g.push_back(std::move(gl));
  }
  return g;
}

Dataset make_blobs(Index input_dim, int num_classes, Index samples_per_class, double separation,
                   std::uint64_t seed, double feature_decay, double class_decay) {
  if (num_classes < 2) throw InvalidArgument("make_blobs: need at least two classes");
  if (input_dim < 1 || samples_per_class < 1) throw InvalidArgument("make_blobs: empty dataset");
  if (!(feature_decay > 0.0 && feature_decay <= 1.0)) throw InvalidArgument("make_blobs: feature_decay must be in (0, 1]");
  if (!(class_decay > 0.0 && class_decay <= 1.0)) throw InvalidArgument("make_blobs: class_decay must be in (0, 1]");
  RngStream centre_rng(seed, stream_tag(0x626c6f62, 1));
  RngStream point_rng(seed, stream_tag(0x626c6f62, 2));
  const Matrix centres = separation * gaussian_matrix(centre_rng, num_classes, input_dim);
  std::vector<Index> count(static_cast<std::size_t>(num_classes));
  Vector scale(input_dim);
  for (int c = 0; c < num_classes; ++c) {
    const double share = std::round(static_cast<double>(samples_per_class) * std::pow(class_decay, c));
    count[static_cast<std::size_t>(c)] = std::max<Index>(1, static_cast<Index>(share));
  }
  for (Index k = 0; k < input_dim; ++k) scale(k) = std::pow(feature_decay, static_cast<double>(k));
  Dataset d;
  d.num_classes = num_classes;
  std::vector<Vector> rows;
  for (Index s = 0; s < samples_per_class; ++s) {
    for (int c = 0; c < num_classes; ++c) {
      if (s >= count[static_cast<std::size_t>(c)]) continue;
      Vector x(input_dim);
      for (Index k = 0; k < input_dim; ++k) x(k) = scale(k) * (centres(c, k) + point_rng.normal());
      rows.push_back(std::move(x));
      d.labels.push_back(c);
    }
  }
  d.features.resize(static_cast<Index>(rows.size()), input_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) d.features.row(static_cast<Index>(i)) = rows[i].transpose();
  return d;
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (Index i = 0; i < d.features.rows(); ++i) {
    for (Index k = 0; k < d.features.cols(); ++k) out << d.features(i, k) << ',';
    out << d.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2) throw IoError(path.string() + ": row with no features");
    labels.push_back(static_cast<int>(vals.back()));
    vals.pop_back();
    if (!rows.empty() && vals.size() != rows.front().size()) throw IoError(path.string() + ": ragged row");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw IoError(path.string() + ": empty dataset");
  Dataset d;
  d.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) d.features(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  d.labels = std::move(labels);
  d.num_classes = 1 + *std::max_element(d.labels.begin(), d.labels.end());
  return d;
}

MlpObjective::MlpObjective(Dataset data, Index hidden, Index batch_size, std::uint64_t dataset_seed)
    : data_(std::move(data)), batch_size_(batch_size), dataset_seed_(dataset_seed) {
  if (data_.features.rows() == 0 || static_cast<std::size_t>(data_.features.rows()) != data_.labels.size()) {
    throw InvalidArgument("MlpObjective: features and labels disagree in length");
  }
  const std::set<int> distinct(data_.labels.begin(), data_.labels.end());
  if (distinct.size() < 2) throw InvalidArgument("MlpObjective: dataset has a single class");
  if (*distinct.begin() < 0 || *distinct.rbegin() >= data_.num_classes) {
    throw InvalidArgument("MlpObjective: label outside [0, num_classes)");
  }
  if (hidden < 1) throw InvalidArgument("MlpObjective: hidden width must be >= 1");
  if (batch_size_ < 1 || batch_size_ > data_.features.rows()) {
    throw InvalidArgument("MlpObjective: batch size must be in [1, samples]");
  }
  shape_ = MlpShape{data_.features.cols(), hidden, data_.num_classes};
  // W1 is hidden x input, W2 is classes x hidden.
  transposed_[0] = shape_.hidden > shape_.input;
  transposed_[1] = shape_.classes > shape_.hidden;
}

Matrix MlpObjective::weight(const LayeredParams& x, std::size_t layer) const {
  return transposed_[layer] ? Matrix(x[layer].transpose()) : x[layer];
}

LayeredParams MlpObjective::initial_params(RngStream& rng) const {
  const Index rows[2] = {shape_.hidden, shape_.classes};
  const Index cols[2] = {shape_.input, shape_.hidden};
  LayeredParams x;
  for (std::size_t l = 0; l < 2; ++l) {
    Matrix w = gaussian_matrix(rng, rows[l], cols[l]) / std::sqrt(static_cast<double>(cols[l]));
    x.push_back(transposed_[l] ? Matrix(w.transpose()) : w);
  }
  return x;
}

double MlpObjective::forward_backward(const LayeredParams& x, const std::vector<Index>& rows,
                                      std::vector<Matrix>* grads) const {
  check_layers(x, 2, "MlpObjective");
  const Matrix w1 = weight(x, 0);
  const Matrix w2 = weight(x, 1);
  if (w1.rows() != shape_.hidden || w1.cols() != shape_.input || w2.rows() != shape_.classes ||
      w2.cols() != shape_.hidden) {
    throw ShapeError("MlpObjective: parameter shapes do not match the network");
  }
  const auto batch = static_cast<Index>(rows.size());
  Matrix xb(batch, shape_.input);
  for (Index i = 0; i < batch; ++i) xb.row(i) = data_.features.row(rows[static_cast<std::size_t>(i)]);

  const Matrix pre = xb * w1.transpose();
  const Matrix act = pre.cwiseMax(0.0);
  Matrix logits = act * w2.transpose();

  double total = 0.0;
  Matrix dlogits(batch, shape_.classes);
  for (Index i = 0; i < batch; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    const int y = data_.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
    total += std::log(z) - (logits(i, y) - mx);
    dlogits.row(i) = e / z;
    dlogits(i, y) -= 1.0;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  if (grads) {
    dlogits *= inv_batch;
    const Matrix gw2 = dlogits.transpose() * act;
    const Matrix dpre = (dlogits * w2).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    const Matrix gw1 = dpre.transpose() * xb;
    grads->clear();
    grads->push_back(transposed_[0] ? Matrix(gw1.transpose()) : gw1);
    grads->push_back(transposed_[1] ? Matrix(gw2.transpose()) : gw2);
  }
  return total * inv_batch;
}

std::vector<Index> MlpObjective::batch_indices(std::int64_t step) const {
  const Index n = data_.features.rows();
  RngStream rng(dataset_seed_, stream_tag(0x6261746368, static_cast<std::uint64_t>(step)));
  // Partial Fisher-Yates: a uniform batch without replacement.
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = 0; i < batch_size_; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  perm.resize(static_cast<std::size_t>(batch_size_));
  return perm;
}

double MlpObjective::batch_loss(const LayeredParams& x, const std::vector<Index>& rows) const {
  return forward_backward(x, rows, nullptr);
}

std::vector<Matrix> MlpObjective::batch_gradient(const LayeredParams& x, const std::vector<Index>& rows,
                                                 double* loss_out) const {
  std::vector<Matrix> g;
  const double f = forward_backward(x, rows, &g);
  if (loss_out) *loss_out = f;
  return g;
}

namespace {
std::vector<Index> all_rows(Index n) {
  std::vector<Index> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), Index{0});
  return r;
}
}  // namespace

double MlpObjective::loss(const LayeredParams& x) const {
  return forward_backward(x, all_rows(data_.features.rows()), nullptr);
}

std::vector<Matrix> MlpObjective::gradient(const LayeredParams& x) const {
  return batch_gradient(x, all_rows(data_.features.rows()));
}

GradientSample MlpObjective::sample_gradient(const LayeredParams& x, std::int64_t step, RngStream&) const {
  GradientSample s;
  s.grads = batch_gradient(x, batch_indices(step), &s.loss);
  s.noise_norms.assign(s.grads.size(), 0.0);
  return s;
}

}  // namespace sara
