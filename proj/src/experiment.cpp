#include "sara/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "sara/checkpoint.hpp"
#include "sara/projector_log.hpp"
#include "sara/theory.hpp"

namespace sara {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream purposes; each draw stream is keyed by (master seed, purpose, layer, step).
enum Purpose : std::uint64_t { kInit = 1, kGradient = 2, kSelect = 3 };

const std::string kAll = "all";

struct LayerRun {
  std::string name;
  Matrix x;
  OptimizerState state;
  std::optional<Projector> projector;
  std::optional<Matrix> gradient_basis;
  std::optional<Matrix> anchor_basis;
  double realized_delta = 1.0;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return json::parse(in);
}

double grad_norm_sq(const std::vector<Matrix>& g) {
  double s = 0.0;
  for (const auto& m : g) s += m.squaredNorm();
  return s;
}

/// delta of one SARA refresh: min inclusion probability of G's singular weights.
double refresh_delta(const Matrix& g, Index r) {
  const auto w = singular_weights(svd(g).S);
  if (w.size() <= kMaxExactInclusionSize) return min_inclusion_probability(w, r, ExactInclusion{});
  return min_inclusion_probability(w, r, QuadratureInclusion{});
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json nullable_mean(const std::vector<double>& v) { return v.empty() ? json(nullptr) : json(mean_of(v)); }

json build_summary(const json& config_json, const std::vector<MetricRow>& rows) {
  const RunConfig cfg = config_from_json(config_json);
  json s;
  s["status"] = "ok";
  s["config_hash"] = cfg.hash();
  s["objective"] = cfg.objective;
  s["optimizer"] = std::string(to_string(cfg.optimizer));
  s["selector"] = std::string(to_string(cfg.selector.type));
  s["rank"] = cfg.selector.rank;
  s["seed"] = cfg.seed;
  s["total_steps"] = cfg.total_steps;

  std::vector<std::pair<std::int64_t, double>> losses;
  std::vector<double> gnorms, deltas;
  std::map<std::string, std::vector<double>> adjacent, anchor, gradient_overlap;
  std::map<std::string, std::int64_t> refreshes;
  json stable = json::array();
  json theory = json::object();
  json delta_estimate = nullptr;
  for (const auto& r : rows) {
    if (r.metric == "loss") {
      losses.emplace_back(r.step, r.value);
    } else if (r.metric == "grad_norm_sq") {
      gnorms.push_back(r.value);
    } else if (r.metric == "delta") {
      deltas.push_back(r.value);
    } else if (r.metric == "refresh") {
      ++refreshes[r.layer];
    } else if (r.metric == "projector_overlap") {
      adjacent[r.layer].push_back(r.value);
    } else if (r.metric == "anchor_overlap") {
      if (cfg.anchor_step && r.step > *cfg.anchor_step) anchor[r.layer].push_back(r.value);
    } else if (r.metric == "gradient_dominant_overlap") {
      gradient_overlap[r.layer].push_back(r.value);
    } else if (r.metric.rfind("stable_rank_from_", 0) == 0) {
      stable.push_back({{"from", std::stoll(r.metric.substr(17))}, {"to", r.step}, {"layer", r.layer}, {"value", r.value}});
    } else if (r.metric == "delta_estimate") {
      delta_estimate = r.value;
    } else if (r.metric.rfind("theory_", 0) == 0) {
      theory[r.metric.substr(7)] = r.value;
    }
  }
  std::stable_sort(losses.begin(), losses.end(), [](auto& a, auto& b) { return a.first < b.first; });
  s["initial_loss"] = losses.empty() ? json(nullptr) : json(losses.front().second);
  s["final_loss"] = losses.empty() ? json(nullptr) : json(losses.back().second);
  s["min_grad_norm_sq"] = gnorms.empty() ? json(nullptr) : json(*std::min_element(gnorms.begin(), gnorms.end()));
  s["mean_grad_norm_sq"] = nullable_mean(gnorms);
  s["delta_estimate"] = delta_estimate;
  s["realized_delta"] = deltas.empty() ? json(nullptr) : json(*std::min_element(deltas.begin(), deltas.end()));
  json layers = json::object();
  std::set<std::string> names;
  for (auto& [k, _] : refreshes) names.insert(k);
  for (auto& [k, _] : gradient_overlap) names.insert(k);
  for (const auto& name : names) {
    layers[name] = {{"refreshes", refreshes.count(name) ? refreshes[name] : 0},
                    {"mean_adjacent_overlap", nullable_mean(adjacent[name])},
                    {"mean_anchor_overlap", nullable_mean(anchor[name])},
                    {"mean_gradient_dominant_overlap", nullable_mean(gradient_overlap[name])}};
  }
  s["layers"] = std::move(layers);
  s["stable_ranks"] = std::move(stable);
  if (!theory.empty()) s["theory_schedule"] = std::move(theory);
  return s;
}

class Trainer {
 public:
  Trainer(const RunConfig& cfg, fs::path out_dir)
      : cfg_(cfg), out_(std::move(out_dir)), objective_(make_objective(cfg.objective)), hp_(cfg.hyper),
        spec_(cfg.selector) {
    hp_.rank = spec_.rank;
    hp_.refresh_period = spec_.refresh_period;
  }

  json fresh() {
    prepare_dirs();
    RngStream init_rng(cfg_.seed, stream_tag(kInit, 0));
    LayeredParams x = objective_->initial_params(init_rng);
    const auto names = objective_->layer_names();
    for (std::size_t l = 0; l < x.size(); ++l) {
      const Index m = x[l].rows(), n = x[l].cols();
      if (m > n) throw InvalidArgument("layer " + names[l] + " is " + shape_str(m, n) + "; layers need m <= n");
      if (uses_projector(cfg_.optimizer) && spec_.rank > m) {
        throw InvalidArgument("rank " + std::to_string(spec_.rank) + " exceeds m = " + std::to_string(m) +
                              " of layer " + names[l]);
      }
      layers_.push_back(LayerRun{names[l], x[l], make_state(cfg_.optimizer, m, n, spec_.rank), {}, {}, {}, 1.0});
    }
    if (cfg_.theory_schedule) apply_theory_schedule();
    return loop(0);
  }

  json resume(const Checkpoint& ck) {
    prepare_dirs();
    if (ck.optimizer != cfg_.optimizer) throw InvalidArgument("checkpoint optimizer differs from the config");
    hp_ = ck.hyper;
    spec_.refresh_period = ck.hyper.refresh_period;
    const auto names = objective_->layer_names();
    if (ck.layers.size() != names.size()) throw InvalidArgument("checkpoint layer count differs from the objective");
    for (const auto& l : ck.layers) {
      layers_.push_back(LayerRun{l.name, l.weight, l.state, l.projector, l.gradient_basis, l.anchor_basis, l.realized_delta});
    }
    return loop(ck.step);
  }

 private:
  void prepare_dirs() {
    fs::create_directories(out_);
    write_json(out_ / "config.json", to_json(cfg_));
    csv_.emplace(out_ / "metrics.csv");
    log_.emplace(out_);
  }

  void emit(std::int64_t step, const std::string& layer, const std::string& metric, double value) {
    csv_->row(step, layer, metric, value);
    rows_.push_back(MetricRow{step, layer, metric, value});
  }

  LayeredParams params() const {
    LayeredParams x;
    for (const auto& l : layers_) x.push_back(l.x);
    return x;
  }

  RngStream gradient_stream(std::int64_t t) const {
    return RngStream(cfg_.seed, stream_tag(kGradient, static_cast<std::uint64_t>(t)));
  }

  void apply_theory_schedule() {
    const auto* quad = dynamic_cast<const QuadraticObjective*>(objective_.get());
    if (quad == nullptr) throw InvalidArgument("theory_schedule needs an objective with known L, Delta and sigma");
    const LayeredParams x = params();
    RngStream g_rng = gradient_stream(0);
    const auto sample = objective_->sample_gradient(x, 0, g_rng);
    double delta = 1.0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      delta = std::min(delta, spec_.type == SelectorType::Sara
                                  ? refresh_delta(sample.grads[l], spec_.rank)
                                  : static_cast<double>(spec_.rank) / static_cast<double>(layers_[l].x.rows()));
    }
    TheoryParams p;
    p.L = quad->smoothness();
    p.Delta = objective_->loss(x) - quad->infimum();
    p.sigma_sq = quad->noise().sigma_sq();
    p.delta = delta;
    p.T = cfg_.total_steps;
    const Schedule s = schedule_from_theorem(p);
    hp_.beta1 = s.beta1;
    hp_.eta = s.eta;
    hp_.refresh_period = s.tau;
    spec_.refresh_period = s.tau;
    emit(0, kAll, "delta_estimate", delta);
    emit(0, kAll, "theory_L", p.L);
    emit(0, kAll, "theory_Delta", p.Delta);
    emit(0, kAll, "theory_sigma_sq", p.sigma_sq);
    emit(0, kAll, "theory_beta1", s.beta1);
    emit(0, kAll, "theory_tau", static_cast<double>(s.tau));
    emit(0, kAll, "theory_eta", s.eta);
  }

  void measure(std::int64_t step, bool force_loss) {
    const LayeredParams x = params();
    if (force_loss || step % cfg_.metric_cadence == 0) emit(step, kAll, "loss", objective_->loss(x));
    const std::int64_t gcad = cfg_.grad_norm_cadence.value_or(cfg_.metric_cadence);
    if (step % gcad == 0) emit(step, kAll, "grad_norm_sq", grad_norm_sq(objective_->gradient(x)));
    if (!cfg_.deterministic && step % cfg_.metric_cadence == 0) {
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - started_;
      emit(step, kAll, "wall_time", dt.count());
    }
  }

  void checkpoint(std::int64_t step) {
    Checkpoint ck;
    ck.step = step;
    ck.optimizer = cfg_.optimizer;
    ck.hyper = hp_;
    for (const auto& l : layers_) {
      ck.layers.push_back(LayerCheckpoint{l.name, l.x, l.state, l.projector, l.gradient_basis, l.anchor_basis,
                                          l.realized_delta});
    }
    save_checkpoint(checkpoint_dir(out_, step), ck);
    if (!saved_.empty()) {
      const auto& [from, weights] = *saved_.rbegin();
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        emit(step, layers_[l].name, "stable_rank_from_" + std::to_string(from), stable_rank(layers_[l].x - weights[l]));
      }
    }
    saved_[step] = params();
  }

  void refresh(LayerRun& layer, std::size_t l, const Matrix& g, std::int64_t t) {
    std::optional<Projector> prev = layer.projector;
    RngStream rng(cfg_.seed, stream_tag(kSelect, l, static_cast<std::uint64_t>(t)));
    layer.projector = refresh_projector(spec_, g, prev, t, rng);
    log_->append(t, layer.name, spec_.type, *layer.projector);
    emit(t, layer.name, "refresh", 1.0);
    if (prev) emit(t, layer.name, "projector_overlap", subspace_overlap(prev->basis, layer.projector->basis));
    if (cfg_.anchor_step) {
      if (t == *cfg_.anchor_step) layer.anchor_basis = layer.projector->basis;
      if (layer.anchor_basis && t >= *cfg_.anchor_step) {
        emit(t, layer.name, "anchor_overlap", subspace_overlap(*layer.anchor_basis, layer.projector->basis));
      }
    }
    double delta = std::numeric_limits<double>::quiet_NaN();
    if (spec_.type == SelectorType::Sara) {
      delta = refresh_delta(g, spec_.rank);
    } else if (spec_.type == SelectorType::RandomOrthonormal) {
      delta = static_cast<double>(spec_.rank) / static_cast<double>(g.rows());
    }
    if (!std::isnan(delta)) {
      layer.realized_delta = std::min(layer.realized_delta, delta);
      emit(t, layer.name, "delta", delta);
    }
  }

  json loop(std::int64_t start) {
    started_ = std::chrono::steady_clock::now();
    const std::int64_t T = cfg_.total_steps;
    std::set<std::int64_t> ck_steps(cfg_.checkpoint_steps.begin(), cfg_.checkpoint_steps.end());
    if (start > 0 && ck_steps.count(start)) saved_[start] = params();
    measure(start, true);
    if (start == 0 && ck_steps.count(0)) checkpoint(0);

    const bool low_rank = uses_projector(cfg_.optimizer);
    for (std::int64_t t = start; t < T; ++t) {
      std::string current = kAll;
      try {
        RngStream g_rng = gradient_stream(t);
        const LayeredParams x = params();
        const GradientSample sample = objective_->sample_gradient(x, t, g_rng);
        HyperParams hp_t = hp_;
        hp_t.eta *= cfg_.lr_schedule.multiplier(t, T);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
          LayerRun& layer = layers_[l];
          current = layer.name;
          const Matrix& g = sample.grads[l];
          if (t % cfg_.metric_cadence == 0 && spec_.rank <= std::min(g.rows(), g.cols())) {
            Matrix basis = select_dominant(g, spec_.rank, t).basis;
            if (layer.gradient_basis) {
              emit(t, layer.name, "gradient_dominant_overlap", subspace_overlap(*layer.gradient_basis, basis));
            }
            layer.gradient_basis = std::move(basis);
          }
          std::optional<Projector> prev;
          bool refreshed = false;
          if (low_rank) {
            prev = layer.projector;
            refreshed = t % spec_.refresh_period == 0;
            if (refreshed) refresh(layer, l, g, t);
          }
          LayerStep in{layer.x, g, low_rank ? &*layer.projector : nullptr, prev ? &*prev : nullptr,
                       refreshed && prev.has_value()};
          Matrix next = step_dispatch(cfg_.optimizer, in, layer.state, hp_t);
          if (!next.allFinite()) throw Error("weights diverged (non-finite entries)");
          layer.x = std::move(next);
        }
      } catch (const Error& e) {
        json stub = {{"status", "failed"}, {"error", e.what()}, {"step", t}, {"layer", current}};
        write_json(out_ / "summary.json", stub);
        throw RunError(std::string("step ") + std::to_string(t) + ", layer " + current + ": " + e.what(), t, current);
      }
      const std::int64_t s = t + 1;
      measure(s, s == T);
      if (ck_steps.count(s)) checkpoint(s);
    }
    json summary = build_summary(to_json(cfg_), rows_);
    write_json(out_ / "summary.json", summary);
    return summary;
  }

  RunConfig cfg_;
  fs::path out_;
  std::unique_ptr<Objective> objective_;
  HyperParams hp_;
  SelectorSpec spec_;
  std::vector<LayerRun> layers_;
  std::optional<MetricsCsv> csv_;
  std::optional<ProjectorLogWriter> log_;
  std::vector<MetricRow> rows_;
  std::map<std::int64_t, LayeredParams> saved_;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace

json run_experiment(const RunConfig& config) {
  config.validate();
  set_deterministic(config.deterministic);
  Trainer trainer(config, config.out_dir);
  return trainer.fresh();
}

json resume_experiment(const RunConfig& config, const fs::path& checkpoint, const fs::path& out_dir) {
  config.validate();
  set_deterministic(config.deterministic);
  const Checkpoint ck = load_checkpoint(checkpoint);
  Trainer trainer(config, out_dir);
  return trainer.resume(ck);
}

json summarize_run(const fs::path& run_dir) {
  return build_summary(read_json(run_dir / "config.json"), read_metrics_csv(run_dir / "metrics.csv"));
}

namespace {

double layer_mean(const json& summary, const char* key) {
  std::vector<double> vals;
  for (const auto& [_, layer] : summary.at("layers").items()) {
    if (!layer.at(key).is_null()) vals.push_back(layer[key].get<double>());
  }
  return vals.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(vals);
}

double mean_stable_rank(const json& summary) {
  std::vector<double> vals;
  for (const auto& e : summary.at("stable_ranks")) vals.push_back(e.at("value").get<double>());
  return vals.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(vals);
}

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

Comparison compare_runs(const std::vector<fs::path>& summaries) {
  if (summaries.size() < 2) throw InvalidArgument("compare_runs: need at least two summaries");
  std::vector<json> runs;
  for (const auto& p : summaries) {
    if (!fs::exists(p)) throw IoError("compare_runs: no such file: " + p.string());
    runs.push_back(read_json(p));
    if (runs.back().value("status", std::string()) != "ok") {
      throw InvalidArgument("compare_runs: " + p.string() + " is not a completed run summary");
    }
  }
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (runs[k].at("objective") != runs[0].at("objective")) {
      throw InvalidArgument("compare_runs: objective of " + summaries[k].string() + " differs from " +
                            summaries[0].string() + "; refusing to compare");
    }
  }
  const char* cols[] = {"run",        "config_hash", "optimizer",  "selector",          "rank",
                        "seed",       "final_loss",  "delta_final_loss", "mean_adjacent_overlap",
                        "mean_anchor_overlap",       "mean_stable_rank", "realized_delta"};
  std::vector<std::vector<std::string>> table;
  table.emplace_back(std::begin(cols), std::end(cols));
  const double base_loss = number_or_nan(runs[0].at("final_loss"));
  std::string seeds;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& r = runs[k];
    const double loss = number_or_nan(r.at("final_loss"));
    table.push_back({summaries[k].parent_path().filename().string().empty() ? summaries[k].string()
                                                                            : summaries[k].parent_path().filename().string(),
                     r.at("config_hash").get<std::string>(), r.at("optimizer").get<std::string>(),
                     r.at("selector").get<std::string>(), std::to_string(r.at("rank").get<Index>()),
                     std::to_string(r.at("seed").get<std::uint64_t>()), format_double(loss),
                     format_double(loss - base_loss), format_double(layer_mean(r, "mean_adjacent_overlap")),
                     format_double(layer_mean(r, "mean_anchor_overlap")), format_double(mean_stable_rank(r)),
                     format_double(number_or_nan(r.at("realized_delta")))});
    seeds += (k ? "," : "") + std::to_string(r.at("seed").get<std::uint64_t>());
  }
  Comparison c;
  std::ostringstream csv, text;
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << '\n';
  }
  std::vector<std::size_t> width(table[0].size(), 0);
  for (const auto& row : table)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) text << std::left << std::setw(static_cast<int>(width[i] + 2)) << row[i];
    text << '\n';
  }
  text << "seeds: " << seeds << '\n';
  c.csv = csv.str();
  c.table = text.str();
  return c;
}

std::vector<SpectrumReport> checkpoint_diff(const fs::path& run_dir, std::int64_t from, std::int64_t to) {
  const Checkpoint a = load_checkpoint(checkpoint_dir(run_dir, from));
  const Checkpoint b = load_checkpoint(checkpoint_dir(run_dir, to));
  if (a.layers.size() != b.layers.size()) throw ShapeError("checkpoint_diff: layer counts differ");
  std::vector<SpectrumReport> reports;
  MetricsCsv csv(run_dir / ("spectrum_" + std::to_string(from) + "_" + std::to_string(to) + ".csv"));
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    auto rep = update_spectrum(a.layers[l].name, a.layers[l].weight, b.layers[l].weight);
    for (std::size_t i = 0; i < rep.normalized.size(); ++i) csv.row(to, rep.layer, "sv_" + std::to_string(i), rep.normalized[i]);
    csv.row(to, rep.layer, "stable_rank", rep.stable_rank);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace sara
