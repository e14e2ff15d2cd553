#include "sara/optimizers.hpp"

#include <algorithm>
#include <cmath>

namespace sara {

void HyperParams::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("HyperParams: " + what); };
  if (!(eta > 0.0)) fail("eta must be > 0");
  if (!(alpha > 0.0)) fail("alpha must be > 0");
  if (!(beta1 >= 0.0 && beta1 <= 1.0)) fail("beta1 must be in [0, 1]");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(xi > 0.0)) fail("xi must be > 0");
  if (rank < 1) fail("rank must be >= 1");
  if (refresh_period < 1) fail("refresh_period must be >= 1");
}

AdamState AdamState::zeros(Index rows, Index cols) {
  return AdamState{Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), 0};
}

Matrix FactoredSecondMoment::reconstruct() const {
  const double total = row_acc.sum();
  if (total == 0.0) return Matrix::Zero(row_acc.size(), col_acc.size());
  return (row_acc * col_acc.transpose()) / total;
}

AdafactorState AdafactorState::zeros(Index rows, Index cols) {
  return AdafactorState{Matrix::Zero(rows, cols),
                        FactoredSecondMoment{Vector::Zero(rows), Vector::Zero(cols), 0}};
}

AdamMiniState AdamMiniState::zeros(Index rows, Index cols) {
  return AdamMiniState{Matrix::Zero(rows, cols), BlockSecondMoment{Vector::Zero(rows), 0}};
}

Adam8bitState Adam8bitState::zeros(Index rows, Index cols) {
  return Adam8bitState{quantize_state(Matrix::Zero(rows, cols)), quantize_state(Matrix::Zero(rows, cols)), 0};
}

MomentumState MomentumState::zeros(Index rows, Index cols) {
  return MomentumState{Matrix::Zero(rows, cols), 0};
}

namespace {

void check_step_shapes(const Matrix& x, const Matrix& grad, const Matrix* basis, const Matrix& moment,
                       const char* op) {
  require_same_shape(x, grad, op);
  const Index want_rows = basis ? basis->cols() : x.rows();
  if (basis && basis->rows() != x.rows()) {
    throw ShapeError(std::string(op) + ": projector " + shape_str(*basis) + " incompatible with weight " +
                     shape_str(x));
  }
  if (moment.rows() != want_rows || moment.cols() != x.cols()) {
    throw ShapeError(std::string(op) + ": optimizer state " + shape_str(moment) + " does not match " +
                     shape_str(want_rows, x.cols()) + " (stale state after a rank change?)");
  }
}

// M <- b1 M + (1 - b1) R ; V <- b2 V + (1 - b2) R o R ; returns M / (sqrt(V) + xi)
Matrix adam_moments(const Matrix& r, AdamState& s, const HyperParams& hp) {
  s.M = hp.beta1 * s.M + (1.0 - hp.beta1) * r;
  s.V = hp.beta2 * s.V + (1.0 - hp.beta2) * r.cwiseProduct(r);
  ++s.step_count;
  return s.M.array() / (s.V.array().sqrt() + hp.xi);
}

}  // namespace

Matrix full_adam_step(const Matrix& x, const Matrix& grad, AdamState& state, const HyperParams& hp) {
  check_step_shapes(x, grad, nullptr, state.M, "full_adam_step");
  const Matrix normalized = adam_moments(grad, state, hp);
  const Matrix n = hp.alpha * normalized;
  return x - hp.eta * n;
}

Matrix galore_adam_step(const Matrix& x, const Matrix& grad, const Projector& p, AdamState& state,
                        const HyperParams& hp) {
  check_step_shapes(x, grad, &p.basis, state.M, "galore_adam_step");
  const Matrix r = p.basis.transpose() * grad;
  const Matrix normalized = adam_moments(r, state, hp);
  const Matrix n = hp.alpha * (p.basis * normalized);
  return x - hp.eta * n;
}

Matrix fira_adam_step(const Matrix& x, const Matrix& grad, const Projector& p, AdamState& state,
                      const HyperParams& hp) {
  check_step_shapes(x, grad, &p.basis, state.M, "fira_adam_step");
  const Matrix r = p.basis.transpose() * grad;
  const Matrix normalized = adam_moments(r, state, hp);
  const Matrix n = hp.alpha * (p.basis * normalized);
  const Matrix residual = grad - p.basis * r;
  const double ratio = frobenius_norm(n) / (frobenius_norm(normalized) + hp.xi);
  return x - hp.eta * n - hp.eta * (ratio * residual);
}

Matrix galore_adafactor_step(const Matrix& x, const Matrix& grad, const Projector& p,
                             AdafactorState& state, const HyperParams& hp) {
  check_step_shapes(x, grad, &p.basis, state.M, "galore_adafactor_step");
  if (state.V.row_acc.size() != state.M.rows() || state.V.col_acc.size() != state.M.cols()) {
    throw ShapeError("galore_adafactor_step: factored moment does not match " + shape_str(state.M));
  }
  const Matrix r = p.basis.transpose() * grad;
  const Matrix sq = r.cwiseProduct(r);
  state.M = hp.beta1 * state.M + (1.0 - hp.beta1) * r;
  state.V.row_acc = hp.beta2 * state.V.row_acc + (1.0 - hp.beta2) * sq.rowwise().sum();
  state.V.col_acc = hp.beta2 * state.V.col_acc + (1.0 - hp.beta2) * sq.colwise().sum().transpose();
  ++state.V.step_count;
  const Matrix v_hat = state.V.reconstruct();
  const Matrix normalized = state.M.array() / (v_hat.array().sqrt() + hp.xi);
  const Matrix n = hp.alpha * (p.basis * normalized);
  return x - hp.eta * n;
}

Matrix galore_adam_mini_step(const Matrix& x, const Matrix& grad, const Projector& p,
                             AdamMiniState& state, const HyperParams& hp) {
  check_step_shapes(x, grad, &p.basis, state.M, "galore_adam_mini_step");
  if (state.V.v.size() != state.M.rows()) {
    throw ShapeError("galore_adam_mini_step: block moment does not match " + shape_str(state.M));
  }
  const Matrix r = p.basis.transpose() * grad;
  state.M = hp.beta1 * state.M + (1.0 - hp.beta1) * r;
  const Vector row_mean = r.cwiseProduct(r).rowwise().mean();
  state.V.v = hp.beta2 * state.V.v + (1.0 - hp.beta2) * row_mean;
  ++state.V.step_count;
  Matrix normalized = state.M;
  for (Index i = 0; i < normalized.rows(); ++i) {
    normalized.row(i) /= (std::sqrt(state.V.v(i)) + hp.xi);
  }
  const Matrix n = hp.alpha * (p.basis * normalized);
  return x - hp.eta * n;
}

Matrix msgd_sara_step(const Matrix& x, const Matrix& grad, const Projector& p, const Projector* prev,
                      MomentumState& state, double eta, double beta1, bool refreshed) {
  if (refreshed) {
    if (prev == nullptr) throw InvalidArgument("msgd_sara_step: refresh without a previous projector");
    if (prev->basis.cols() != state.m_lr.rows() || prev->basis.rows() != p.basis.rows()) {
      throw ShapeError("msgd_sara_step: previous projector " + shape_str(prev->basis) +
                       " incompatible with momentum " + shape_str(state.m_lr));
    }
    state.m_lr = p.basis.transpose() * (prev->basis * state.m_lr);
  }
  check_step_shapes(x, grad, &p.basis, state.m_lr, "msgd_sara_step");
  state.m_lr = (1.0 - beta1) * state.m_lr + beta1 * (p.basis.transpose() * grad);
  ++state.step_count;
  return x - eta * (p.basis * state.m_lr);
}

Quantized8State quantize_state(const Matrix& m) {
  require_finite(m, "quantize_state");
  Quantized8State q;
  q.rows = m.rows();
  q.cols = m.cols();
  const Index total = m.size();
  q.codes.resize(static_cast<std::size_t>(total));
  q.scales.resize(static_cast<std::size_t>((total + kQuantBlockSize - 1) / kQuantBlockSize));
  auto at = [&](Index k) { return m(k / m.cols(), k % m.cols()); };
  for (std::size_t b = 0; b < q.scales.size(); ++b) {
    const Index lo = static_cast<Index>(b) * kQuantBlockSize;
    const Index hi = std::min(total, lo + kQuantBlockSize);
    double absmax = 0.0;
    for (Index k = lo; k < hi; ++k) absmax = std::max(absmax, std::abs(at(k)));
    q.scales[b] = absmax;
    for (Index k = lo; k < hi; ++k) {
      // std::round rounds halves away from zero.
      const double c = absmax == 0.0 ? 0.0 : std::round(at(k) / absmax * 127.0);
      q.codes[static_cast<std::size_t>(k)] = static_cast<std::int8_t>(std::clamp(c, -127.0, 127.0));
    }
  }
  return q;
}

Matrix dequantize_state(const Quantized8State& q) {
  Matrix m(q.rows, q.cols);
  for (Index k = 0; k < q.rows * q.cols; ++k) {
    const double scale = q.scales[static_cast<std::size_t>(k / kQuantBlockSize)];
    m(k / q.cols, k % q.cols) = static_cast<double>(q.codes[static_cast<std::size_t>(k)]) / 127.0 * scale;
  }
  return m;
}

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::FullAdam: return "full_adam";
    case OptimizerKind::GaLoreAdam: return "galore_adam";
    case OptimizerKind::FiraAdam: return "fira_adam";
    case OptimizerKind::GaLoreAdafactor: return "galore_adafactor";
    case OptimizerKind::GaLoreAdamMini: return "galore_adam_mini";
    case OptimizerKind::GaLoreAdam8bit: return "galore_adam_8bit";
    case OptimizerKind::FiraAdam8bit: return "fira_adam_8bit";
    case OptimizerKind::Msgd: return "msgd";
  }
  return "?";
}

OptimizerKind optimizer_from_string(std::string_view name) {
  for (auto k : {OptimizerKind::FullAdam, OptimizerKind::GaLoreAdam, OptimizerKind::FiraAdam,
                 OptimizerKind::GaLoreAdafactor, OptimizerKind::GaLoreAdamMini,
                 OptimizerKind::GaLoreAdam8bit, OptimizerKind::FiraAdam8bit, OptimizerKind::Msgd}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown optimizer kind '" + std::string(name) + "'");
}

bool uses_projector(OptimizerKind k) { return k != OptimizerKind::FullAdam; }

OptimizerState make_state(OptimizerKind kind, Index m, Index n, Index r) {
  switch (kind) {
    case OptimizerKind::FullAdam: return AdamState::zeros(m, n);
    case OptimizerKind::GaLoreAdam:
    case OptimizerKind::FiraAdam: return AdamState::zeros(r, n);
    case OptimizerKind::GaLoreAdafactor: return AdafactorState::zeros(r, n);
    case OptimizerKind::GaLoreAdamMini: return AdamMiniState::zeros(r, n);
    case OptimizerKind::GaLoreAdam8bit:
    case OptimizerKind::FiraAdam8bit: return Adam8bitState::zeros(r, n);
    case OptimizerKind::Msgd: return MomentumState::zeros(r, n);
  }
  throw InvalidArgument("make_state: unknown optimizer kind");
}

namespace {

template <typename T>
T& state_as(OptimizerState& s, OptimizerKind kind) {
  if (auto* p = std::get_if<T>(&s)) return *p;
  throw InvalidArgument("step_dispatch: state does not match optimizer kind " + std::string(to_string(kind)));
}

const Projector& need_projector(const LayerStep& in, OptimizerKind kind) {
  if (in.projector == nullptr) {
    throw InvalidArgument("step_dispatch: " + std::string(to_string(kind)) + " requires a projector");
  }
  return *in.projector;
}

}  // namespace

Matrix step_dispatch(OptimizerKind kind, const LayerStep& in, OptimizerState& state, const HyperParams& hp) {
  switch (kind) {
    case OptimizerKind::FullAdam:
      return full_adam_step(in.x, in.grad, state_as<AdamState>(state, kind), hp);
    case OptimizerKind::GaLoreAdam:
      return galore_adam_step(in.x, in.grad, need_projector(in, kind), state_as<AdamState>(state, kind), hp);
    case OptimizerKind::FiraAdam:
      return fira_adam_step(in.x, in.grad, need_projector(in, kind), state_as<AdamState>(state, kind), hp);
    case OptimizerKind::GaLoreAdafactor:
      return galore_adafactor_step(in.x, in.grad, need_projector(in, kind),
                                   state_as<AdafactorState>(state, kind), hp);
    case OptimizerKind::GaLoreAdamMini:
      return galore_adam_mini_step(in.x, in.grad, need_projector(in, kind),
                                   state_as<AdamMiniState>(state, kind), hp);
    case OptimizerKind::GaLoreAdam8bit:
    case OptimizerKind::FiraAdam8bit: {
      auto& q = state_as<Adam8bitState>(state, kind);
      AdamState exact{dequantize_state(q.M), dequantize_state(q.V).array().square().matrix(), q.step_count};
      const Projector& p = need_projector(in, kind);
      Matrix out = kind == OptimizerKind::GaLoreAdam8bit ? galore_adam_step(in.x, in.grad, p, exact, hp)
                                                         : fira_adam_step(in.x, in.grad, p, exact, hp);
      q.M = quantize_state(exact.M);
      q.V = quantize_state(exact.V.array().sqrt().matrix());
      q.step_count = exact.step_count;
      return out;
    }
    case OptimizerKind::Msgd:
      return msgd_sara_step(in.x, in.grad, need_projector(in, kind), in.prev_projector,
                            state_as<MomentumState>(state, kind), hp.eta, hp.beta1, in.refreshed);
  }
  throw InvalidArgument("step_dispatch: unknown optimizer kind");
}

}  // namespace sara
