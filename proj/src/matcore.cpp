#include "sara/matcore.hpp"

#include <atomic>

namespace sara {

namespace {
std::atomic<bool> g_deterministic{false};
}

void set_deterministic(bool on) {
  g_deterministic.store(on);
  if (on) Eigen::setNbThreads(1);
}

bool deterministic() { return g_deterministic.load(); }

Matrix gaussian_matrix(RngStream& rng, Index m, Index n) {
  if (m < 1 || n < 1) throw ShapeError("gaussian_matrix: empty shape " + shape_str(m, n));
  Matrix out(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) out(i, j) = rng.normal();
  return out;
}

}  // namespace sara
