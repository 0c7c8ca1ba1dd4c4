#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pase/bench.hpp"
#include "pase/errors.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;  // -1 = keep config value
  bool fresh = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path,
                  "experiment config JSON (defaults apply when omitted)");
  cmd->add_option("-o,--out", opts.out_dir,
                  "output directory (overrides config and PASE_OUT_DIR)");
  cmd->add_option("-s,--seed", opts.seed,
                  "master seed offset applied to every stage seed");
  cmd->add_flag("--fresh", opts.fresh, "ignore cached stage artifacts");
}

pase::ExperimentConfig resolve_config(const CommonOpts& opts) {
  pase::ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = pase::load_config(opts.config_path);
  if (!opts.out_dir.empty()) {
    cfg.out_dir = opts.out_dir;
  } else if (const char* env = std::getenv("PASE_OUT_DIR");
             env && *env && opts.out_dir.empty() && cfg.out_dir == "out") {
    cfg.out_dir = env;
  }
  if (opts.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(opts.seed);
  if (opts.fresh) cfg.use_cache = false;
  return cfg;
}

void print_paths(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::cout << p << '\n';
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const pase::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const pase::StageError& e) {
    std::cerr << "error " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "pase: switching-ensemble privacy defense benchmark\n"
      "Trains baseline / PASE / PATE models, runs a shadow-model membership\n"
      "attack against each, and reports the utility, leakage, and timing\n"
      "tradeoffs."};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string format = "markdown";
  std::string report_in;

  auto* gen = app.add_subcommand("gen-data", "generate/load the dataset and splits");
  add_common(gen, opts);

  auto* base = app.add_subcommand("train-baseline", "train the undefended model");
  add_common(base, opts);

  auto* pase_cmd = app.add_subcommand("train-pase", "train the switching ensemble");
  add_common(pase_cmd, opts);

  auto* pate_cmd = app.add_subcommand("train-pate", "train teachers and student");
  add_common(pate_cmd, opts);

  auto* attack = app.add_subcommand(
      "attack", "train shadow/attack models and evaluate every defense");
  add_common(attack, opts);
  attack->add_option("-f,--format", format, "report format: json|markdown|csv");

  auto* run = app.add_subcommand("run", "full pipeline with timings");
  add_common(run, opts);
  run->add_option("-f,--format", format, "report format: json|markdown|csv");

  auto* report = app.add_subcommand("report", "re-render a persisted report");
  report->add_option("-i,--in", report_in, "report.json produced by run/attack");
  add_common(report, opts);
  report->add_option("-f,--format", format, "report format: json|markdown|csv");

  auto* show = app.add_subcommand("show-config", "print the effective config JSON");
  add_common(show, opts);

  CLI11_PARSE(app, argc, argv);

  return run_guarded([&]() -> int {
    if (gen->parsed()) {
      print_paths(pase::stage_gen_data(resolve_config(opts)));
      return 0;
    }
    if (base->parsed()) {
      print_paths(pase::stage_train_baseline(resolve_config(opts)));
      return 0;
    }
    if (pase_cmd->parsed()) {
      print_paths(pase::stage_train_pase(resolve_config(opts)));
      return 0;
    }
    if (pate_cmd->parsed()) {
      print_paths(pase::stage_train_pate(resolve_config(opts)));
      return 0;
    }
    if (attack->parsed() || run->parsed()) {
      const pase::ExperimentConfig cfg = resolve_config(opts);
      const pase::ExperimentReport rep = pase::run_experiment(cfg);
      std::cout << pase::render_report(rep, format);
      std::cerr << "report written to "
                << (fs::path(cfg.out_dir) / rep.config_hash_hex / "report.json")
                       .string()
                << '\n';
      return 0;
    }
    if (report->parsed()) {
      std::string path = report_in;
      if (path.empty()) {
        const pase::ExperimentConfig cfg = resolve_config(opts);
        path = (fs::path(cfg.out_dir) / pase::config_hash(cfg) / "report.json")
                   .string();
      }
      std::ifstream in(path);
      if (!in) throw pase::UsageError("cannot open report: " + path);
      std::ostringstream ss;
      ss << in.rdbuf();
      std::cout << pase::render_report(pase::report_from_json_text(ss.str()),
                                       format);
      return 0;
    }
    if (show->parsed()) {
      std::cout << pase::config_to_json(resolve_config(opts)) << '\n';
      return 0;
    }
    return 2;
  });
}
