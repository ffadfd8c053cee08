// sgmlab: run continual-learning experiments, joint baselines and reports.
//
//   sgmlab run --config cfg.json [--seed N] [--out DIR] [--joint-refs FILE] [--dry-run]
//   sgmlab joint --config cfg.json [--seed N] [--out DIR]
//   sgmlab report RUN_DIR... [--joint-refs FILE] [--out DIR]
//   sgmlab validate --config cfg.json [--seed N]
//
// Exit codes: 0 ok, 1 runtime failure, 2 invalid configuration or arguments.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgmlab/config.hpp"
#include "sgmlab/experiment.hpp"
#include "sgmlab/log.hpp"
#include "sgmlab/report.hpp"

namespace fs = std::filesystem;
using namespace sgmlab;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string joint_refs;
  bool dry_run = false;
  std::vector<std::string> run_dirs;
};

ExperimentConfig resolve(const Options& o) {
  auto cfg = load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    if (cfg.dataset.synthetic_seed_from_experiment) cfg.dataset.synthetic.seed = cfg.seed;
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

int cmd_validate(const Options& o) {
  const auto cfg = resolve(o);
  const auto stream = prepare_stream(cfg);
  std::cout << describe_schedule(cfg, stream);
  std::cout << "config ok\n";
  return 0;
}

int cmd_run(const Options& o) {
  if (o.dry_run) return cmd_validate(o);
  const auto cfg = resolve(o);
  RunOptions ro;
  ro.out_dir = fs::path(cfg.output_dir);
  if (!o.joint_refs.empty()) {
    ro.joints = joint_refs_from_json(nlohmann::json::parse(read_text(o.joint_refs)));
  }
  const auto result = run_experiment(cfg, ro);
  for (const auto& run : result.runs) {
    std::cout << run.method.name << ": S_delta " << stability_gap(run.ledger).value
              << ", P_delta " << plasticity_gap(run.ledger).value << ", CK_delta "
              << continual_knowledge_gap(run.ledger).value << ", updates " << run.total_updates
              << "\n";
  }
  std::cout << "wrote " << cfg.output_dir << "\n";
  return 0;
}

int cmd_joint(const Options& o) {
  const auto cfg = resolve(o);
  const auto stream = prepare_stream(cfg);
  const auto refs = compute_joint_refs(cfg, stream);
  const auto path = fs::path(cfg.output_dir) / "joint_refs.json";
  write_text(path, joint_refs_text(refs));
  std::cout << "wrote " << path.string() << " (" << refs.sets.size() << " reference set"
            << (refs.sets.size() == 1 ? "" : "s") << ")\n";
  return 0;
}

int cmd_report(const Options& o) {
  std::vector<RunRecord> runs;
  for (const auto& d : o.run_dirs) runs.push_back(load_run(d));
  std::optional<std::string> refs;
  if (!o.joint_refs.empty()) refs = read_text(o.joint_refs);
  const auto rep = build_report(runs, refs);
  const fs::path out = o.out.empty() ? fs::path("report") : fs::path(o.out);
  write_text(out / "report.txt", rep.text);
  write_text(out / "report.json", rep.json.dump(2) + "\n");
  for (const auto& [name, text] : rep.files) write_text(out / name, text);
  std::cout << rep.text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability-gap lab: continual-learning experiments and gap metrics"};
  app.require_subcommand(1);
  Options o;
  bool quiet = false;
  bool verbose = false;
  app.add_flag("-q,--quiet", quiet, "Only print errors");
  app.add_flag("-v,--verbose", verbose, "Print progress");

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", o.seed, "Override the config seed");
  };
  auto* run = app.add_subcommand("run", "Pretrain, run every configured method, write artifacts");
  add_config(run);
  run->add_option("--out", o.out, "Output directory (overrides output_dir)");
  run->add_option("--joint-refs", o.joint_refs, "Reuse joint references from a file");
  run->add_flag("--dry-run", o.dry_run, "Validate and print the schedule without training");

  auto* joint = app.add_subcommand("joint", "Train joint upper-bound models, write joint_refs.json");
  add_config(joint);
  joint->add_option("--out", o.out, "Output directory (overrides output_dir)");

  auto* report = app.add_subcommand("report", "Compare run directories");
  report->add_option("run_dirs", o.run_dirs, "Method run directories")->required();
  report->add_option("--joint-refs", o.joint_refs, "Joint reference file the runs must match");
  report->add_option("--out", o.out, "Report directory (default ./report)");

  auto* validate = app.add_subcommand("validate", "Validate a config and print the schedule");
  add_config(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  log::set_level(quiet ? log::Level::quiet : verbose ? log::Level::info : log::Level::warn);

  try {
    if (*run) return cmd_run(o);
    if (*joint) return cmd_joint(o);
    if (*report) return cmd_report(o);
    if (*validate) return cmd_validate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
