// Command-line front end: run, compare, diff, verify-lemma, schedule.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sara/experiment.hpp"
#include "sara/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int fail(const std::string& kind, const std::string& message, const json& extra = json::object()) {
  json err = {{"status", "failed"}, {"error", kind}, {"message", message}};
  err.update(extra);
  std::cerr << err.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank optimizer experiments with importance-sampled subspaces"};
  app.require_subcommand(1);

  bool deterministic = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  app.add_flag("--deterministic", deterministic, "single-threaded, bitwise reproducible run");
  app.add_option("--seed", seed, "override the master seed");
  app.add_option("--out", out, "output directory or file");

  auto* run = app.add_subcommand("run", "train from a JSON config");
  std::string config_path;
  std::optional<std::string> resume_from;
  run->add_option("--config", config_path, "run config (JSON)")->required();
  run->add_option("--resume", resume_from, "checkpoint directory to continue from");

  auto* compare = app.add_subcommand("compare", "tabulate several summary.json files");
  std::vector<std::string> summaries;
  compare->add_option("summaries", summaries, "summary.json paths")->required()->expected(2, -1);

  auto* diff = app.add_subcommand("diff", "spectrum of the update between two checkpoints");
  std::string run_dir;
  std::int64_t from = 0, to = 0;
  diff->add_option("--run", run_dir, "run directory")->required();
  diff->add_option("--from", from, "earlier checkpoint step")->required();
  diff->add_option("--to", to, "later checkpoint step")->required();

  auto* lemma = app.add_subcommand("verify-lemma", "Monte-Carlo check of the projection bound");
  sara::Index m = 8, n = 16, r = 2;
  std::int64_t trials = sara::kMinProjectionTrials;
  std::string selector = "sara";
  lemma->add_option("--m", m)->check(CLI::PositiveNumber);
  lemma->add_option("--n", n)->check(CLI::PositiveNumber);
  lemma->add_option("--r", r)->check(CLI::PositiveNumber);
  lemma->add_option("--trials", trials)->check(CLI::PositiveNumber);
  lemma->add_option("--selector", selector, "sara | random");

  auto* sched = app.add_subcommand("schedule", "step-size schedule from the convergence guarantee");
  sara::TheoryParams tp;
  sched->add_option("--L", tp.L)->required();
  sched->add_option("--delta", tp.delta)->required();
  sched->add_option("--sigma-sq", tp.sigma_sq)->required();
  sched->add_option("--Delta", tp.Delta)->required();
  sched->add_option("--T", tp.T)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      sara::RunConfig cfg = sara::load_config(config_path);
      if (seed) cfg.seed = *seed;
      if (deterministic) cfg.deterministic = true;
      if (out) cfg.out_dir = *out;
      const json summary = resume_from ? sara::resume_experiment(cfg, *resume_from, cfg.out_dir)
                                       : sara::run_experiment(cfg);
      std::cout << summary.dump(2) << '\n';
    } else if (*compare) {
      std::vector<fs::path> paths(summaries.begin(), summaries.end());
      const auto c = sara::compare_runs(paths);
      if (out) {
        std::ofstream f(*out);
        if (!f) return fail("io", "cannot write " + *out);
        f << c.csv;
      }
      std::cout << c.table;
    } else if (*diff) {
      const auto reports = sara::checkpoint_diff(run_dir, from, to);
      json j = json::array();
      for (const auto& rep : reports) {
        j.push_back({{"layer", rep.layer}, {"stable_rank", rep.stable_rank}, {"normalized", rep.normalized}});
      }
      std::cout << j.dump(2) << '\n';
    } else if (*lemma) {
      sara::set_deterministic(deterministic);
      sara::RngStream rng(seed.value_or(0), sara::stream_tag(0x6c656d6d61, 0));
      const sara::Matrix g = sara::gaussian_matrix(rng, m, n);
      sara::SelectorSpec spec{sara::selector_from_string(selector), r, 1};
      const auto rep = sara::verify_projection_bound(spec, g, trials, rng);
      std::cout << sara::to_json(rep).dump(2) << '\n';
      return rep.pass ? 0 : 2;
    } else if (*sched) {
      const sara::Schedule s = sara::schedule_from_theorem(tp);
      const auto caps = sara::step_size_caps(tp.L, tp.delta, s.beta1, s.tau);
      json j = sara::to_json(s);
      j["threshold"] = sara::horizon_threshold(tp);
      j["eta_cap"] = caps.min();
      std::cout << j.dump(2) << '\n';
    }
  } catch (const sara::RunError& e) {
    return fail("run", e.what(), {{"step", e.step()}, {"layer", e.layer()}});
  } catch (const sara::IoError& e) {
    return fail("io", e.what());
  } catch (const sara::InvalidArgument& e) {
    return fail("invalid_argument", e.what());
  } catch (const sara::ShapeError& e) {
    return fail("shape", e.what());
  } catch (const sara::SvdError& e) {
    return fail("svd", e.what());
  } catch (const sara::Error& e) {
    return fail("sara", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
