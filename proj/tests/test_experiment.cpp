#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "sgmlab/config.hpp"
#include "sgmlab/experiment.hpp"
#include "sgmlab/report.hpp"
#include "support.hpp"

using namespace sgmlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "seed": 4,
    "dataset": {"source": "synthetic",
                "synthetic": {"classes": 8, "dims": 6, "n_per_class": 30, "class_separation": 5.0},
                "test_fraction": 0.25},
    "schedule": {"ordering": "cil", "pretrain_classes": 4, "sessions": 2, "classes_per_session": 2},
    "model": {"hidden": [12, 12]},
    "pretrain": {"iterations": 100, "batch_size": 16, "optimizer": {"lr": 0.01}},
    "budget": {"iterations": 40, "batch_size": 16},
    "eval_every": 10,
    "joint": {"iterations": 100, "batch_size": 16, "optimizer": {"lr": 0.01}},
    "methods": [{"name": "vanilla", "optimizer": {"lr": 0.01}},
                {"name": "sgm", "mechanisms": "sgm", "lora_rank": 2,
                 "optimizer": {"lr": 0.005, "schedule": "one_cycle"}}]
  })");
}

std::string field_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SGMLAB_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  auto j = small_config();
  CHECK(field_of(j).empty());
  SUBCASE("unknown key") {
    j["methods"][0]["learning_rate"] = 0.1;
    CHECK(field_of(j) == "methods[0].learning_rate");
  }
  SUBCASE("bounded buffer without capacity") {
    j["methods"][0]["buffer"] = {{"policy", "reservoir"}};
    CHECK(field_of(j) == "methods[0].buffer.capacity");
  }
  SUBCASE("rank too large") {
    j["methods"][1]["lora_rank"] = 5;
    CHECK(field_of(j) == "methods[1].lora_rank");
  }
  SUBCASE("too many sessions") {
    j["schedule"]["sessions"] = 3;
    CHECK_FALSE(field_of(j).empty());
  }
  SUBCASE("duplicate method names") {
    j["methods"][1]["name"] = "vanilla";
    CHECK(field_of(j).rfind("methods[1]", 0) == 0);
  }
  SUBCASE("wrong type") {
    j["budget"]["iterations"] = "many";
    CHECK(field_of(j) == "budget.iterations");
  }
}

TEST_CASE("resolved config round trip") {
  const auto cfg = parse_config(small_config());
  const auto resolved = config_to_json(cfg);
  CHECK(config_to_json(parse_config(resolved)) == resolved);
  auto other = cfg;
  other.seed = 99;
  other.output_dir = "elsewhere";
  CHECK(config_group_key(other) == config_group_key(cfg));
  other.session.budget.iterations += 1;
  CHECK(config_group_key(other) != config_group_key(cfg));
}

TEST_CASE("identical seeds give byte-identical ledgers") {
  const auto cfg = parse_config(small_config());
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  for (const auto& name : {"vanilla", "sgm"}) {
    CHECK(a.run(name).ledger.to_csv() == b.run(name).ledger.to_csv());
  }
  auto other = cfg;
  other.seed = 5;
  other.dataset.synthetic.seed = 5;
  CHECK(run_experiment(other).run("vanilla").ledger.to_csv() != a.run("vanilla").ledger.to_csv());
}

TEST_CASE("joint reference sets") {
  auto cfg = parse_config(small_config());
  const auto stream = prepare_stream(cfg);
  const auto per = compute_joint_refs(cfg, stream);
  CHECK(per.sets.size() == 2);
  CHECK(per.for_session(2).acc_all >= 0.0);
  cfg.joint.mode = JointMode::final_only;
  const auto fin = compute_joint_refs(cfg, stream);
  REQUIRE(fin.sets.size() == 1);
  CHECK(fin.sets[0].evaluations.size() == 2);
  const auto back = joint_refs_from_json(json::parse(joint_refs_text(per)));
  CHECK(joint_refs_text(back) == joint_refs_text(per));
}

TEST_CASE("artifacts, reports and reference hashes") {
  const auto dir = testing::scratch_dir("experiment");
  std::vector<RunRecord> runs;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto cfg = parse_config(small_config());
    cfg.seed = seed;
    cfg.dataset.synthetic.seed = 4;  // one stream, five learner seeds
    cfg.methods.resize(1);
    RunOptions ro;
    ro.out_dir = dir / ("s" + std::to_string(seed));
    run_experiment(cfg, ro);
    for (const char* f : {"ledger.csv", "metrics.json", "summary.json", "joint_refs.json",
                          "config.json", "manifest.json", "curves/session_2.csv",
                          "checkpoints/session_2.json"}) {
      CHECK(fs::exists(*ro.out_dir / "vanilla" / f));
    }
    runs.push_back(load_run(*ro.out_dir / "vanilla"));
  }
  SUBCASE("single run gives one row") {
    const auto rep = build_report({runs[0]});
    CHECK(rep.json.at("runs").size() == 1);
    CHECK(rep.json.at("groups").at(0).at("runs") == 1);
  }
  SUBCASE("seed replicates collapse into one group with mean and std") {
    const auto rep = build_report(runs);
    CHECK(rep.json.at("runs").size() == 5);
    REQUIRE(rep.json.at("groups").size() == 1);
    const auto& g = rep.json.at("groups").at(0);
    double mean = 0.0;
    for (const auto& r : rep.json.at("runs")) mean += r.at("S_delta").get<double>() / 5.0;
    CHECK(g.at("S_delta").at("mean").get<double>() == doctest::Approx(mean).epsilon(1e-12));
    CHECK(g.at("S_delta").at("std").get<double>() >= 0.0);
    CHECK(rep.text.find("+/-") != std::string::npos);
    // Averaged curve: one row per within-session eval step (0, 10, ..., 40) plus a header.
    const auto& curve = rep.files.at("curves/group_vanilla.csv");
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 6);
  }
  SUBCASE("report is a pure function of its inputs") {
    CHECK(build_report(runs).json == build_report(runs).json);
  }
  SUBCASE("explicit reference file must match") {
    const auto text = read_text(dir / "s1" / "joint_refs.json");
    CHECK_NOTHROW(build_report({runs[0]}, text));
    CHECK_THROWS(build_report({runs[0]}, text + " "));
    CHECK_THROWS(build_report(runs, text));  // other seeds trained their own references
  }
  SUBCASE("tampered reference file is detected") {
    write_text(dir / "s2" / "vanilla" / "joint_refs.json", "{}\n");
    CHECK_THROWS(load_run(dir / "s2" / "vanilla"));
  }
}

TEST_CASE("cli exit codes") {
  const auto dir = testing::scratch_dir("cli");
  write_text(dir / "good.json", small_config().dump());
  auto bad = small_config();
  bad["budget"]["itrations"] = 3;
  write_text(dir / "bad.json", bad.dump());
  CHECK(run_cli("validate --config " + (dir / "good.json").string()) == 0);
  CHECK(run_cli("run --dry-run --config " + (dir / "good.json").string()) == 0);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(run_cli("validate --config " + (dir / "bad.json").string()) == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("validate --config " + (dir / "missing.json").string()) != 0);
  CHECK(run_cli("joint --config " + (dir / "good.json").string() + " --out " + (dir / "j").string()) == 0);
  CHECK(fs::exists(dir / "j" / "joint_refs.json"));
  CHECK(run_cli("report " + (dir / "nothing").string() + " --out " + (dir / "r").string()) == 1);
}

TEST_CASE("joint model dominates continual runs in most seeds") {
  std::size_t dominated = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto cfg = parse_config(small_config());
    cfg.seed = seed;
    cfg.dataset.synthetic.seed = seed;
    const auto r = run_experiment(cfg);
    const double joint = r.joints.for_session(3).acc_all;
    bool all = true;
    for (const auto& run : r.runs) all = all && joint >= run.ledger.rows().back().acc_all;
    if (all) ++dominated;
  }
  CHECK(dominated >= 4);
}
