#include "sara/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace sara {

double LrSchedule::multiplier(std::int64_t step, std::int64_t total_steps) const {
  if (kind == "constant") return 1.0;
  if (kind != "warmup_cosine") throw InvalidArgument("unknown lr schedule '" + kind + "'");
  if (step < warmup_steps) return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const auto span = static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return min_ratio + (1.0 - min_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("RunConfig: " + what); };
  hyper.validate();
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (metric_cadence < 1) fail("metric_cadence must be >= 1");
  if (grad_norm_cadence && *grad_norm_cadence < 1) fail("grad_norm_cadence must be >= 1");
  if (selector.rank < 1) fail("rank must be >= 1");
  if (selector.refresh_period < 1) fail("refresh_period must be >= 1");
  for (auto s : checkpoint_steps) {
    if (s < 0 || s > total_steps) fail("checkpoint step " + std::to_string(s) + " outside [0, total_steps]");
  }
  if (anchor_step && (*anchor_step < 0 || *anchor_step % selector.refresh_period != 0)) {
    fail("anchor_step must be a refresh step");
  }
  if (!objective.is_object() || !objective.contains("kind")) fail("objective needs a 'kind'");
  if (theory_schedule && optimizer != OptimizerKind::Msgd) fail("theory_schedule applies to the msgd optimizer");
  if (lr_schedule.kind != "constant" && lr_schedule.kind != "warmup_cosine") fail("unknown lr schedule");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["objective"] = c.objective;
  j["optimizer"] = std::string(to_string(c.optimizer));
  j["selector"] = {{"type", std::string(to_string(c.selector.type))},
                   {"rank", c.selector.rank},
                   {"refresh_period", c.selector.refresh_period}};
  j["hyper"] = {{"eta", c.hyper.eta},
                {"alpha", c.hyper.alpha},
                {"beta1", c.hyper.beta1},
                {"beta2", c.hyper.beta2},
                {"xi", c.hyper.xi}};
  j["lr_schedule"] = {{"kind", c.lr_schedule.kind},
                      {"warmup_steps", c.lr_schedule.warmup_steps},
                      {"min_ratio", c.lr_schedule.min_ratio}};
  j["total_steps"] = c.total_steps;
  j["metric_cadence"] = c.metric_cadence;
  j["grad_norm_cadence"] = c.grad_norm_cadence ? nlohmann::json(*c.grad_norm_cadence) : nlohmann::json(nullptr);
  j["anchor_step"] = c.anchor_step ? nlohmann::json(*c.anchor_step) : nlohmann::json(nullptr);
  j["checkpoint_steps"] = c.checkpoint_steps;
  j["theory_schedule"] = c.theory_schedule;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["out_dir"] = c.out_dir.string();
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.objective = j.at("objective");
  c.optimizer = optimizer_from_string(j.value("optimizer", std::string("galore_adam")));
  if (j.contains("selector")) {
    const auto& s = j["selector"];
    c.selector.type = selector_from_string(s.value("type", std::string("sara")));
    c.selector.rank = s.value("rank", Index{1});
    c.selector.refresh_period = s.value("refresh_period", std::int64_t{200});
  }
  if (j.contains("hyper")) {
    const auto& h = j["hyper"];
    c.hyper.eta = h.value("eta", c.hyper.eta);
    c.hyper.alpha = h.value("alpha", c.hyper.alpha);
    c.hyper.beta1 = h.value("beta1", c.hyper.beta1);
    c.hyper.beta2 = h.value("beta2", c.hyper.beta2);
    c.hyper.xi = h.value("xi", c.hyper.xi);
  }
  c.hyper.rank = c.selector.rank;
  c.hyper.refresh_period = c.selector.refresh_period;
  if (j.contains("lr_schedule")) {
    const auto& s = j["lr_schedule"];
    c.lr_schedule.kind = s.value("kind", std::string("constant"));
    c.lr_schedule.warmup_steps = s.value("warmup_steps", std::int64_t{0});
    c.lr_schedule.min_ratio = s.value("min_ratio", 0.0);
  }
  c.total_steps = j.value("total_steps", std::int64_t{0});
  c.metric_cadence = j.value("metric_cadence", std::int64_t{200});
  if (j.contains("grad_norm_cadence") && !j["grad_norm_cadence"].is_null()) {
    c.grad_norm_cadence = j["grad_norm_cadence"].get<std::int64_t>();
  }
  if (j.contains("anchor_step") && !j["anchor_step"].is_null()) c.anchor_step = j["anchor_step"].get<std::int64_t>();
  c.checkpoint_steps = j.value("checkpoint_steps", std::vector<std::int64_t>{});
  c.theory_schedule = j.value("theory_schedule", false);
  c.seed = j.value("seed", std::uint64_t{0});
  c.deterministic = j.value("deterministic", true);
  c.out_dir = j.value("out_dir", std::string("run"));
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string RunConfig::hash() const {
  auto j = to_json(*this);
  j.erase("out_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::unique_ptr<Objective> make_objective(const nlohmann::json& spec) {
  const auto kind = spec.at("kind").get<std::string>();
  const auto seed = spec.value("seed", std::uint64_t{0});
  if (kind == "quadratic") {
    std::vector<std::pair<Index, Index>> shapes;
    for (const auto& s : spec.at("shapes")) shapes.emplace_back(s.at(0).get<Index>(), s.at(1).get<Index>());
    NoiseSpec noise;
    if (spec.contains("sigma")) {
      noise.sigma = spec["sigma"].get<std::vector<double>>();
    } else {
      noise.sigma.assign(shapes.size(), 0.0);
    }
    for (auto [m, n] : shapes) {
      if (m > n) throw InvalidArgument("quadratic objective: layer " + shape_str(m, n) + " violates m <= n");
    }
    RngStream rng(seed, stream_tag(0x71756164, 0));
    return std::make_unique<QuadraticObjective>(random_quadratic(
        shapes, spec.value("min_singular", 1.0), spec.value("max_singular", 1.0), noise, rng));
  }
  if (kind == "mlp") {
    Dataset data = spec.contains("dataset_csv")
                       ? load_dataset_csv(spec["dataset_csv"].get<std::string>())
                       : make_blobs(spec.value("input", Index{32}), spec.value("classes", 32),
                                    spec.value("samples_per_class", Index{64}), spec.value("separation", 1.0), seed,
                                    spec.value("feature_decay", 1.0), spec.value("class_decay", 1.0));
    return std::make_unique<MlpObjective>(std::move(data), spec.value("hidden", Index{64}),
                                          spec.value("batch_size", Index{64}), seed);
  }
  throw InvalidArgument("unknown objective kind '" + kind + "'");
}

}  // namespace sara
