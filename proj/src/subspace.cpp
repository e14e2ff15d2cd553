#include "sara/subspace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <tuple>

namespace sara {

SelectionWeights::SelectionWeights(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw InvalidArgument("SelectionWeights: empty weight vector");
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const double w = weights_[i];
    if (!(w >= 0.0 && w <= 1.0)) {
      throw InvalidArgument("SelectionWeights: weight " + std::to_string(i) + " = " +
                            std::to_string(w) + " outside [0, 1]");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidArgument("SelectionWeights: weights sum to " + std::to_string(total));
  }
}

bool SelectionWeights::is_uniform() const noexcept {
  return std::all_of(weights_.begin(), weights_.end(),
                     [&](double w) { return w == weights_.front(); });
}

std::string_view to_string(SelectorType t) {
  switch (t) {
    case SelectorType::Dominant: return "dominant";
    case SelectorType::Sara: return "sara";
    case SelectorType::RandomOrthonormal: return "random";
  }
  return "?";
}

SelectorType selector_from_string(std::string_view name) {
  if (name == "dominant") return SelectorType::Dominant;
  if (name == "sara") return SelectorType::Sara;
  if (name == "random" || name == "golore") return SelectorType::RandomOrthonormal;
  throw InvalidArgument("unknown selector '" + std::string(name) + "'");
}

SelectionWeights singular_weights(std::span<const double> s) {
  if (s.empty()) throw InvalidArgument("singular_weights: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i] >= 0.0) || !std::isfinite(s[i])) {
      throw InvalidArgument("singular_weights: entry " + std::to_string(i) + " = " +
                            std::to_string(s[i]) + " is not a nonnegative finite value");
    }
    total += s[i];
  }
  std::vector<double> w(s.size());
  if (total == 0.0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(s.size()));
  } else {
    for (std::size_t i = 0; i < s.size(); ++i) w[i] = s[i] / total;
  }
  return SelectionWeights(std::move(w));
}

SelectionWeights singular_weights(const Vector& s) {
  return singular_weights(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

std::vector<Index> sample_without_replacement(const SelectionWeights& w, Index r, RngStream& rng) {
  const auto m = static_cast<Index>(w.size());
  if (r < 0 || r > m) {
    throw InvalidArgument("sample_without_replacement: r = " + std::to_string(r) +
                          " exceeds population m = " + std::to_string(m));
  }
  // Exponential keys E_i / w_i: ordering by key reproduces successive sampling.
  // Zero weights go to a second tier ordered by uniform keys.
  std::vector<std::tuple<int, double, Index>> keys;
  keys.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const double u = rng.uniform();
    const double wi = w[static_cast<std::size_t>(i)];
    if (wi > 0.0) {
      keys.emplace_back(0, -std::log(u) / wi, i);
    } else {
      keys.emplace_back(1, u, i);
    }
  }
  std::partial_sort(keys.begin(), keys.begin() + r, keys.end());
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(r));
  for (Index k = 0; k < r; ++k) out.push_back(std::get<2>(keys[static_cast<std::size_t>(k)]));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void check_rank(const Matrix& g, Index r, const char* op) {
  const Index k = std::min(g.rows(), g.cols());
  if (r < 1 || r > k) {
    throw InvalidArgument(std::string(op) + ": rank " + std::to_string(r) + " not in [1, " +
                          std::to_string(k) + "] for gradient " + shape_str(g));
  }
}

Matrix gather_columns(const Matrix& u, const std::vector<Index>& idx) {
  Matrix out(u.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = u.col(idx[k]);
  return out;
}

}  // namespace

Projector select_sara(const Matrix& gradient, Index r, RngStream& rng, std::int64_t step) {
  check_rank(gradient, r, "select_sara");
  const auto f = svd(gradient);
  auto idx = sample_without_replacement(singular_weights(f.S), r, rng);
  Matrix basis = gather_columns(f.U, idx);
  return Projector{std::move(basis), std::move(idx), step};
}

Projector select_dominant(const Matrix& gradient, Index r, std::int64_t step) {
  check_rank(gradient, r, "select_dominant");
  const auto f = svd(gradient);
  std::vector<Index> idx(static_cast<std::size_t>(r));
  std::iota(idx.begin(), idx.end(), Index{0});
  return Projector{f.U.leftCols(r), std::move(idx), step};
}

Projector select_random(Index m, Index r, RngStream& rng, std::int64_t step) {
  if (r < 1 || r > m) {
    throw InvalidArgument("select_random: rank " + std::to_string(r) + " not in [1, " +
                          std::to_string(m) + "]");
  }
  return Projector{qr_orthonormal(gaussian_matrix(rng, m, r)), std::nullopt, step};
}

Projector refresh_projector(const SelectorSpec& spec, const Matrix& gradient,
                            const std::optional<Projector>& prev, std::int64_t step, RngStream& rng) {
  if (spec.refresh_period < 1) throw InvalidArgument("refresh_projector: tau must be >= 1");
  if (step % spec.refresh_period != 0) {
    if (!prev) {
      throw InvalidArgument("refresh_projector: no previous projector at non-refresh step " +
                            std::to_string(step));
    }
    return *prev;
  }
  switch (spec.type) {
    case SelectorType::Dominant: return select_dominant(gradient, spec.rank, step);
    case SelectorType::Sara: return select_sara(gradient, spec.rank, rng, step);
    case SelectorType::RandomOrthonormal: return select_random(gradient.rows(), spec.rank, rng, step);
  }
  throw InvalidArgument("refresh_projector: unknown selector");
}

namespace {

InclusionEstimate exact_inclusion(const SelectionWeights& w, Index r) {
  const std::size_t m = w.size();
  if (m > kMaxExactInclusionSize) {
    throw InvalidArgument("inclusion_probabilities: exact method limited to m <= " +
                          std::to_string(kMaxExactInclusionSize) + " (got m = " +
                          std::to_string(m) + "); use the Monte Carlo method");
  }
  // Probability of each drawn set, built one draw at a time. Adding an element only
  // increases the mask, so ascending order visits every predecessor first.
  const std::size_t full = std::size_t{1} << m;
  std::vector<double> reach(full, 0.0);
  reach[0] = 1.0;
  InclusionEstimate est{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t mask = 0; mask < full; ++mask) {
    const double pm = reach[mask];
    if (pm == 0.0) continue;
    const auto drawn = static_cast<Index>(std::popcount(mask));
    if (drawn == r) {
      for (std::size_t i = 0; i < m; ++i)
        if (mask & (std::size_t{1} << i)) est.probability[i] += pm;
      continue;
    }
    double rest = 0.0;
    std::size_t rest_count = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!(mask & (std::size_t{1} << i))) {
        rest += w[i];
        ++rest_count;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (std::size_t{1} << i)) continue;
      const double step = rest > 0.0 ? w[i] / rest : 1.0 / static_cast<double>(rest_count);
      if (step > 0.0) reach[mask | (std::size_t{1} << i)] += pm * step;
    }
  }
  return est;
}

InclusionEstimate monte_carlo_inclusion(const SelectionWeights& w, Index r, const MonteCarloInclusion& mc) {
  if (mc.trials < 1 || mc.rng == nullptr) {
    throw InvalidArgument("inclusion_probabilities: Monte Carlo needs trials >= 1 and a stream");
  }
  const std::size_t m = w.size();
  std::vector<std::int64_t> hits(m, 0);
  for (std::int64_t t = 0; t < mc.trials; ++t) {
    for (Index i : sample_without_replacement(w, r, *mc.rng)) ++hits[static_cast<std::size_t>(i)];
  }
  InclusionEstimate est{std::vector<double>(m), std::vector<double>(m)};
  const auto n = static_cast<double>(mc.trials);
  for (std::size_t i = 0; i < m; ++i) {
    const double p = static_cast<double>(hits[i]) / n;
    est.probability[i] = p;
    est.std_error[i] = std::sqrt(p * (1.0 - p) / n);
  }
  return est;
}

// P(i in sample) = int_0^inf w_i e^{-w_i t} P(#{j != i : T_j < t} < r) dt with T_j ~ Exp(w_j).
// Substituting t = e^y makes the integrand smooth and rapidly decaying at both ends.
InclusionEstimate quadrature_inclusion(const SelectionWeights& w, Index r, const QuadratureInclusion& q) {
  if (!(q.step > 0.0)) throw InvalidArgument("inclusion_probabilities: quadrature step must be positive");
  const std::size_t m = w.size();
  const auto rr = static_cast<std::size_t>(r);
  InclusionEstimate est{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  std::vector<std::size_t> pos, zero;
  for (std::size_t i = 0; i < m; ++i) (w[i] > 0.0 ? pos : zero).push_back(i);
  if (pos.size() <= rr) {
    for (auto i : pos) est.probability[i] = 1.0;
    for (auto i : zero) est.probability[i] = static_cast<double>(rr - pos.size()) / static_cast<double>(zero.size());
    return est;
  }
  double w_max = 0.0;
  for (auto i : pos) w_max = std::max(w_max, w[i]);
  std::vector<double> dp(rr);
  for (auto i : pos) {
    const double wi = w[i];
    const double t0 = 1e-10 / w_max;
    const double y_hi = std::log(60.0 / wi);
    // Below t0 nothing has rung, so the integrand is the clock density alone.
    double p = -std::expm1(-wi * t0);
    for (double y = std::log(t0); y <= y_hi; y += q.step) {
      const double t = std::exp(y);
      std::fill(dp.begin(), dp.end(), 0.0);
      dp[0] = 1.0;
      for (auto j : pos) {
        if (j == i) continue;
        const double rang = -std::expm1(-w[j] * t);
        for (std::size_t k = rr - 1; k > 0; --k) dp[k] = dp[k] * (1.0 - rang) + dp[k - 1] * rang;
        dp[0] *= 1.0 - rang;
      }
      double below = 0.0;
      for (double v : dp) below += v;
      p += q.step * wi * t * std::exp(-wi * t) * below;
    }
    est.probability[i] = std::min(1.0, p);
  }
  return est;
}

}  // namespace

InclusionEstimate inclusion_probabilities(const SelectionWeights& w, Index r, const InclusionMethod& method) {
  if (r < 1 || r > static_cast<Index>(w.size())) {
    throw InvalidArgument("inclusion_probabilities: r = " + std::to_string(r) +
                          " outside [1, " + std::to_string(w.size()) + "]");
  }
  if (std::holds_alternative<ExactInclusion>(method)) return exact_inclusion(w, r);
  if (const auto* q = std::get_if<QuadratureInclusion>(&method)) return quadrature_inclusion(w, r, *q);
  return monte_carlo_inclusion(w, r, std::get<MonteCarloInclusion>(method));
}

double min_inclusion_probability(const SelectionWeights& w, Index r, const InclusionMethod& method) {
  const auto est = inclusion_probabilities(w, r, method);
  return *std::min_element(est.probability.begin(), est.probability.end());
}

}  // namespace sara
