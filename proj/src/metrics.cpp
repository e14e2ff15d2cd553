#include "sara/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace sara {

namespace {

void require_orthonormal(const Matrix& a, const char* which) {
  const double err = orthonormality_error(a);
  if (!(err <= kOverlapOrthoTol)) {
    std::ostringstream msg;
    msg << "subspace_overlap: " << which << " is not orthonormal (max |A^T A - I| = " << err << ")";
    throw InvalidArgument(msg.str());
  }
}

}  // namespace

double subspace_overlap(const Matrix& u, const Matrix& v) {
  require_same_shape(u, v, "subspace_overlap");
  require_orthonormal(u, "U");
  require_orthonormal(v, "V");
  const double value = (u.transpose() * v).squaredNorm() / static_cast<double>(u.cols());
  return std::clamp(value, 0.0, 1.0);
}

namespace {

std::map<std::string, std::vector<const ProjectorLogEntry*>> by_layer(const std::vector<ProjectorLogEntry>& log) {
  std::map<std::string, std::vector<const ProjectorLogEntry*>> groups;
  for (const auto& e : log) groups[e.layer].push_back(&e);
  for (auto& [_, v] : groups) {
    std::stable_sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->step < b->step; });
  }
  return groups;
}

}  // namespace

OverlapSeries adjacent_overlap(const std::vector<ProjectorLogEntry>& log) {
  OverlapSeries out;
  for (const auto& [layer, entries] : by_layer(log)) {
    for (std::size_t k = 1; k < entries.size(); ++k) {
      out.push_back({entries[k]->step, layer, subspace_overlap(entries[k - 1]->basis, entries[k]->basis)});
    }
  }
  return out;
}

OverlapSeries anchor_overlap(const std::vector<ProjectorLogEntry>& log, std::int64_t anchor_step) {
  OverlapSeries out;
  for (const auto& [layer, entries] : by_layer(log)) {
    auto anchor = std::find_if(entries.begin(), entries.end(), [&](auto* e) { return e->step == anchor_step; });
    if (anchor == entries.end()) {
      throw InvalidArgument("anchor_overlap: no projector at step " + std::to_string(anchor_step) +
                            " for layer " + layer);
    }
    for (auto it = anchor; it != entries.end(); ++it) {
      out.push_back({(*it)->step, layer, subspace_overlap((*anchor)->basis, (*it)->basis)});
    }
  }
  return out;
}

double stable_rank(const Matrix& m) {
  const double top = spectral_norm(m);
  if (top == 0.0) return 0.0;
  return m.squaredNorm() / (top * top);
}

SpectrumReport update_spectrum(const std::string& layer, const Matrix& before, const Matrix& after) {
  require_same_shape(before, after, "update_spectrum");
  const Matrix diff = after - before;
  SpectrumReport rep;
  rep.layer = layer;
  Eigen::JacobiSVD<Matrix> svd(diff);
  const Vector s = svd.singularValues();
  rep.normalized.assign(static_cast<std::size_t>(s.size()), 0.0);
  if (s.size() > 0 && s(0) > 0.0) {
    for (Index i = 0; i < s.size(); ++i) rep.normalized[static_cast<std::size_t>(i)] = s(i) / s(0);
    rep.stable_rank = diff.squaredNorm() / (s(0) * s(0));
  }
  return rep;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

MetricsCsv::MetricsCsv(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  out_ << "step,layer,metric,value\n";
}

void MetricsCsv::row(std::int64_t step, const std::string& layer, const std::string& metric, double value) {
  out_ << step << ',' << layer << ',' << metric << ',' << format_double(value) << '\n';
  if (!out_) throw IoError("metrics CSV write failed");
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string step, layer, metric, value;
    std::getline(ss, step, ',');
    std::getline(ss, layer, ',');
    std::getline(ss, metric, ',');
    std::getline(ss, value, ',');
    MetricRow r;
    r.step = std::stoll(step);
    r.layer = layer;
    r.metric = metric;
    std::from_chars(value.data(), value.data() + value.size(), r.value);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sara
