#include "sara/projector_log.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "sara/matrix_io.hpp"

namespace sara {

ProjectorLogWriter::ProjectorLogWriter(std::filesystem::path run_dir)
    : run_dir_(std::move(run_dir)), log_path_(run_dir_ / "projectors.jsonl") {
  std::filesystem::create_directories(run_dir_ / "projectors");
  std::ofstream truncate(log_path_, std::ios::trunc);
  if (!truncate) throw IoError("cannot create " + log_path_.string());
}

void ProjectorLogWriter::append(std::int64_t step, const std::string& layer, SelectorType selector,
                                const Projector& p) {
  char name[64];
  std::snprintf(name, sizeof name, "_%08lld.bin", static_cast<long long>(step));
  const std::string rel = "projectors/" + layer + name;
  save_matrix(run_dir_ / rel, p.basis);

  nlohmann::json rec;
  rec["step"] = step;
  rec["layer"] = layer;
  rec["selector"] = std::string(to_string(selector));
  if (p.source_indices) {
    rec["source_indices"] = *p.source_indices;
  } else {
    rec["source_indices"] = nullptr;
  }
  rec["basis"] = rel;
  std::ofstream out(log_path_, std::ios::app);
  if (!out) throw IoError("cannot append to " + log_path_.string());
  out << rec.dump() << '\n';
}

std::vector<ProjectorLogEntry> read_projector_log(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "projectors.jsonl";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ProjectorLogEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    ProjectorLogEntry e;
    e.step = rec.at("step").get<std::int64_t>();
    e.layer = rec.at("layer").get<std::string>();
    e.selector = selector_from_string(rec.at("selector").get<std::string>());
    if (!rec.at("source_indices").is_null()) e.source_indices = rec["source_indices"].get<std::vector<Index>>();
    e.basis_path = rec.at("basis").get<std::string>();
    e.basis = load_matrix(run_dir / e.basis_path);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace sara
