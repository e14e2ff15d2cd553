#include "sara/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sara {

void TheoryParams::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("TheoryParams: " + what); };
  if (!(L > 0.0) || !std::isfinite(L)) fail("L must be finite and > 0");
  if (!(Delta >= 0.0) || !std::isfinite(Delta)) fail("Delta must be finite and >= 0");
  if (!(sigma_sq >= 0.0) || !std::isfinite(sigma_sq)) fail("sigma_sq must be finite and >= 0");
  if (!(delta > 0.0 && delta <= 1.0)) fail("delta must lie in (0, 1]");
  if (T < 1) fail("T must be >= 1");
}

double horizon_threshold(const TheoryParams& p) {
  p.validate();
  double noise_term = 0.0;
  if (p.sigma_sq > 0.0) {
    if (p.Delta == 0.0) {
      throw InvalidArgument("admissible_horizon: Delta = 0 with sigma_sq > 0 divides by zero");
    }
    noise_term = 128.0 * 128.0 * p.sigma_sq / (9.0 * std::sqrt(p.delta) * p.L * p.Delta);
  }
  return 2.0 + 128.0 / (3.0 * p.delta) + noise_term;
}

bool admissible_horizon(const TheoryParams& p) {
  return static_cast<double>(p.T) >= horizon_threshold(p);
}

Schedule schedule_from_theorem(const TheoryParams& p) {
  const double threshold = horizon_threshold(p);
  if (static_cast<double>(p.T) < threshold) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "schedule_from_theorem: horizon T = " << p.T << " is below the admissibility threshold "
        << threshold;
    throw InvalidArgument(msg.str());
  }
  Schedule s;
  const double noise = p.sigma_sq == 0.0 ? 0.0
                                         : std::pow(p.delta, 1.5) * p.sigma_sq * static_cast<double>(p.T) /
                                               (p.L * p.Delta);
  s.beta1 = 1.0 / (1.0 + std::sqrt(noise));
  s.tau = static_cast<std::int64_t>(std::ceil(64.0 / (3.0 * p.delta * s.beta1)));
  const double L2 = p.L * p.L;
  const auto tau = static_cast<double>(s.tau);
  s.eta = 1.0 / (4.0 * p.L +
                 std::sqrt(80.0 * L2 / (3.0 * p.delta * s.beta1 * s.beta1) + 80.0 * tau * tau * L2 / (3.0 * p.delta)) +
                 std::sqrt(16.0 * tau * L2 / (3.0 * s.beta1)));
  return s;
}

double StepSizeCaps::min() const { return std::min({smooth, momentum, period, mixed}); }

StepSizeCaps step_size_caps(double L, double delta, double beta1, std::int64_t tau) {
  const double L2 = L * L;
  const auto t = static_cast<double>(tau);
  return StepSizeCaps{1.0 / (4.0 * L), std::sqrt(3.0 * delta * beta1 * beta1 / (80.0 * L2)),
                      std::sqrt(3.0 * delta / (80.0 * t * t * L2)), std::sqrt(3.0 * beta1 / (16.0 * t * L2))};
}

ProjectionBoundReport verify_projection_bound(const SelectorSpec& selector, const Matrix& g,
                                              std::int64_t trials, RngStream& rng) {
  if (selector.type == SelectorType::Dominant) {
    throw InvalidArgument("verify_projection_bound: the dominant selector has no sampling distribution");
  }
  if (trials < kMinProjectionTrials) {
    throw InvalidArgument("verify_projection_bound: need at least " + std::to_string(kMinProjectionTrials) +
                          " trials, got " + std::to_string(trials));
  }
  const Index m = g.rows();
  const Index r = selector.rank;
  ProjectionBoundReport rep;
  rep.trials = trials;
  if (selector.type == SelectorType::Sara) {
    const auto weights = singular_weights(svd(g).S);
    if (weights.size() <= kMaxExactInclusionSize) {
      rep.delta = min_inclusion_probability(weights, r, ExactInclusion{});
    } else {
      RngStream est_rng = rng.split(0x64656c7461);
      rep.delta = min_inclusion_probability(weights, r, MonteCarloInclusion{100000, &est_rng});
    }
  } else {
    rep.delta = static_cast<double>(r) / static_cast<double>(m);
  }
  const double g_sq = g.squaredNorm();
  rep.rhs = (1.0 - rep.delta) * g_sq;

  // Welford running mean / variance in trial order.
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const Projector p = selector.type == SelectorType::Sara ? select_sara(g, r, rng, 0) : select_random(m, r, rng, 0);
    const double residual = (g - p.basis * (p.basis.transpose() * g)).squaredNorm();
    const double d = residual - mean;
    mean += d / static_cast<double>(t + 1);
    m2 += d * (residual - mean);
  }
  rep.lhs_mean = mean;
  rep.lhs_stderr = trials > 1 ? std::sqrt(m2 / static_cast<double>(trials - 1) / static_cast<double>(trials)) : 0.0;
  // Rounding allowance for cases where every draw lands exactly on the bound.
  const double rounding = 1e-12 * g_sq;
  rep.pass = rep.lhs_mean <= rep.rhs + 3.0 * rep.lhs_stderr + rounding;
  return rep;
}

DeltaComparison compare_delta(const SelectionWeights& w, Index r, const InclusionMethod& method) {
  DeltaComparison c;
  c.delta_sara = min_inclusion_probability(w, r, method);
  c.delta_uniform = static_cast<double>(r) / static_cast<double>(w.size());
  c.gap = c.delta_uniform - c.delta_sara;
  return c;
}

nlohmann::json to_json(const TheoryParams& p) {
  return {{"L", p.L}, {"Delta", p.Delta}, {"sigma_sq", p.sigma_sq}, {"delta", p.delta}, {"T", p.T}};
}

nlohmann::json to_json(const Schedule& s) {
  return {{"beta1", s.beta1}, {"tau", s.tau}, {"eta", s.eta}};
}

nlohmann::json to_json(const ProjectionBoundReport& r) {
  return {{"lhs_mean", r.lhs_mean}, {"lhs_stderr", r.lhs_stderr}, {"rhs", r.rhs},
          {"delta", r.delta},       {"trials", r.trials},         {"pass", r.pass}};
}

}  // namespace sara
