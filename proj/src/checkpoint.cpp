#include "sara/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "sara/matrix_io.hpp"

namespace sara {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

Matrix column(const Vector& v) { return v; }

Matrix codes_matrix(const Quantized8State& q) {
  Matrix m(q.rows, q.cols);
  for (Index k = 0; k < q.rows * q.cols; ++k) m(k / q.cols, k % q.cols) = q.codes[static_cast<std::size_t>(k)];
  return m;
}

Quantized8State quantized_from(const Matrix& codes, const Matrix& scales) {
  Quantized8State q;
  q.rows = codes.rows();
  q.cols = codes.cols();
  for (Index i = 0; i < codes.rows(); ++i)
    for (Index j = 0; j < codes.cols(); ++j) q.codes.push_back(static_cast<std::int8_t>(codes(i, j)));
  for (Index k = 0; k < scales.rows(); ++k) q.scales.push_back(scales(k, 0));
  return q;
}

Matrix scales_matrix(const Quantized8State& q) {
  Matrix m(static_cast<Index>(q.scales.size()), 1);
  for (std::size_t k = 0; k < q.scales.size(); ++k) m(static_cast<Index>(k), 0) = q.scales[k];
  return m;
}

}  // namespace

fs::path checkpoint_dir(const fs::path& run_dir, std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%08lld", static_cast<long long>(step));
  return run_dir / "checkpoints" / name;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  fs::create_directories(dir);
  json manifest;
  manifest["step"] = ck.step;
  manifest["optimizer"] = std::string(to_string(ck.optimizer));
  manifest["hyper"] = {{"eta", ck.hyper.eta},     {"alpha", ck.hyper.alpha}, {"beta1", ck.hyper.beta1},
                       {"beta2", ck.hyper.beta2}, {"xi", ck.hyper.xi},       {"rank", ck.hyper.rank},
                       {"refresh_period", ck.hyper.refresh_period}};
  json layers = json::array();
  for (const auto& l : ck.layers) {
    json entry;
    entry["name"] = l.name;
    entry["realized_delta"] = l.realized_delta;
    auto put = [&](const std::string& key, const Matrix& m) {
      const std::string file = l.name + "." + key + ".bin";
      save_matrix(dir / file, m);
      entry["files"][key] = file;
    };
    put("weight", l.weight);
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, AdamState>) {
            put("M", s.M);
            put("V", s.V);
            entry["step_count"] = s.step_count;
          } else if constexpr (std::is_same_v<T, AdafactorState>) {
            put("M", s.M);
            put("row_acc", column(s.V.row_acc));
            put("col_acc", column(s.V.col_acc));
            entry["step_count"] = s.V.step_count;
          } else if constexpr (std::is_same_v<T, AdamMiniState>) {
            put("M", s.M);
            put("v", column(s.V.v));
            entry["step_count"] = s.V.step_count;
          } else if constexpr (std::is_same_v<T, Adam8bitState>) {
            put("M_codes", codes_matrix(s.M));
            put("M_scales", scales_matrix(s.M));
            put("V_codes", codes_matrix(s.V));
            put("V_scales", scales_matrix(s.V));
            entry["step_count"] = s.step_count;
          } else {
            put("m_lr", s.m_lr);
            entry["step_count"] = s.step_count;
          }
        },
        l.state);
    if (l.projector) {
      put("projector", l.projector->basis);
      entry["projector"] = {{"created_at_step", l.projector->created_at_step},
                            {"source_indices", l.projector->source_indices ? json(*l.projector->source_indices)
                                                                           : json(nullptr)}};
    }
    if (l.gradient_basis) put("gradient_basis", *l.gradient_basis);
    if (l.anchor_basis) put("anchor_basis", *l.anchor_basis);
    layers.push_back(std::move(entry));
  }
  manifest["layers"] = std::move(layers);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("missing checkpoint: " + (dir / "manifest.json").string());
  const json manifest = json::parse(in);
  Checkpoint ck;
  ck.step = manifest.at("step").get<std::int64_t>();
  ck.optimizer = optimizer_from_string(manifest.at("optimizer").get<std::string>());
  const auto& h = manifest.at("hyper");
  ck.hyper.eta = h.at("eta");
  ck.hyper.alpha = h.at("alpha");
  ck.hyper.beta1 = h.at("beta1");
  ck.hyper.beta2 = h.at("beta2");
  ck.hyper.xi = h.at("xi");
  ck.hyper.rank = h.at("rank");
  ck.hyper.refresh_period = h.at("refresh_period");
  for (const auto& entry : manifest.at("layers")) {
    LayerCheckpoint l;
    l.name = entry.at("name").get<std::string>();
    l.realized_delta = entry.value("realized_delta", 1.0);
    const auto& files = entry.at("files");
    auto get = [&](const std::string& key) { return load_matrix(dir / files.at(key).get<std::string>()); };
    l.weight = get("weight");
    const auto steps = entry.value("step_count", std::int64_t{0});
    switch (ck.optimizer) {
      case OptimizerKind::FullAdam:
      case OptimizerKind::GaLoreAdam:
      case OptimizerKind::FiraAdam: l.state = AdamState{get("M"), get("V"), steps}; break;
      case OptimizerKind::GaLoreAdafactor:
        l.state = AdafactorState{get("M"), FactoredSecondMoment{get("row_acc").col(0), get("col_acc").col(0), steps}};
        break;
      case OptimizerKind::GaLoreAdamMini:
        l.state = AdamMiniState{get("M"), BlockSecondMoment{get("v").col(0), steps}};
        break;
      case OptimizerKind::GaLoreAdam8bit:
      case OptimizerKind::FiraAdam8bit:
        l.state = Adam8bitState{quantized_from(get("M_codes"), get("M_scales")),
                                quantized_from(get("V_codes"), get("V_scales")), steps};
        break;
      case OptimizerKind::Msgd: l.state = MomentumState{get("m_lr"), steps}; break;
    }
    if (entry.contains("projector")) {
      Projector p;
      p.basis = get("projector");
      p.created_at_step = entry["projector"].at("created_at_step").get<std::int64_t>();
      if (!entry["projector"].at("source_indices").is_null()) {
        p.source_indices = entry["projector"]["source_indices"].get<std::vector<Index>>();
      }
      l.projector = std::move(p);
    }
    if (files.contains("gradient_basis")) l.gradient_basis = get("gradient_basis");
    if (files.contains("anchor_basis")) l.anchor_basis = get("anchor_basis");
    ck.layers.push_back(std::move(l));
  }
  return ck;
}

}  // namespace sara
