// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. The benchmark criteria (5-9, 11) share one set of
// runs over seeds 1-5 of the bundled configs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "metric_cases.hpp"
#include "properties.hpp"
#include "sgmlab/experiment.hpp"
#include "sgmlab/log.hpp"
#include "sgmlab/metrics.hpp"

namespace fs = std::filesystem;
using namespace sgmlab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

int failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS " : "FAIL ") << id << " " << name << ": " << detail << std::endl;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};
const std::string kMechanisms[] = {"weight_init", "soft_targets", "oocf", "lora"};

ExperimentConfig config_for(const std::string& file, std::uint64_t seed, const fs::path& out) {
  auto cfg = load_config(fs::path(SGMLAB_SOURCE_DIR) / "configs" / file);
  cfg.seed = seed;
  if (cfg.dataset.synthetic_seed_from_experiment) cfg.dataset.synthetic.seed = seed;
  cfg.output_dir = out.string();
  cfg.save_checkpoints = false;
  return cfg;
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::map<std::string, MethodRun> runs;
  const MethodRun& at(const std::string& name) const { return runs.at(name); }
};

std::vector<SeedRun> run_seeds(const std::string& file, const fs::path& root, double& secs,
                               std::string& error) {
  std::vector<SeedRun> out;
  const auto t0 = Clock::now();
  try {
    for (auto seed : kSeeds) {
      const auto dir = root / ("seed" + std::to_string(seed));
      const auto cfg = config_for(file, seed, dir);
      RunOptions ro;
      ro.out_dir = dir;
      auto result = run_experiment(cfg, ro);
      SeedRun s;
      s.seed = seed;
      for (auto& r : result.runs) s.runs.emplace(r.method.name, std::move(r));
      out.push_back(std::move(s));
    }
  } catch (const std::exception& e) {
    error = e.what();
    out.clear();
  }
  secs = seconds_since(t0);
  return out;
}

double s_of(const MethodRun& r) { return stability_gap(r.ledger).value; }
double p_of(const MethodRun& r) { return plasticity_gap(r.ledger).value; }
double ck_of(const MethodRun& r) { return continual_knowledge_gap(r.ledger).value; }

double seed_mean(const std::vector<SeedRun>& seeds, const std::string& method,
                 double (*f)(const MethodRun&)) {
  double s = 0.0;
  for (const auto& r : seeds) s += f(r.at(method));
  return s / double(seeds.size());
}

std::size_t count_below(const std::vector<SeedRun>& seeds, const std::string& a,
                        const std::string& b, double (*f)(const MethodRun&)) {
  std::size_t n = 0;
  for (const auto& r : seeds) n += f(r.at(a)) < f(r.at(b));
  return n;
}

std::size_t recovered_sessions(const MethodRun& run, double fraction) {
  std::size_t n = 0;
  for (auto j : run.ledger.sessions()) {
    if (j < 2) continue;
    n += recovery_iterations(old_trace(run.ledger, j), run.ledger.joint(j).acc_old, fraction)
             .has_value();
  }
  return n;
}

double mean_updates_to_best(const std::vector<SeedRun>& seeds, const std::string& method) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : seeds) {
    const auto& ledger = s.at(method).ledger;
    for (auto j : ledger.sessions()) {
      if (j < 2) continue;
      sum += double(updates_to_fraction_best(new_trace(ledger, j), 0.99));
      ++n;
    }
  }
  return n ? sum / double(n) : 0.0;
}

double final_old_accuracy(const MethodRun& run) { return run.ledger.rows().back().acc_old; }

void table(const std::vector<SeedRun>& seeds, const std::vector<std::string>& methods) {
  std::cout << "  seed";
  for (const auto& m : methods) std::cout << "  " << m << "(S/P/CK)";
  std::cout << "\n";
  for (const auto& s : seeds) {
    std::cout << "  " << s.seed;
    for (const auto& m : methods) {
      const auto& r = s.at(m);
      std::cout << "  " << num(s_of(r), 3) << "/" << num(p_of(r), 3) << "/" << num(ck_of(r), 3);
    }
    std::cout << "\n";
  }
}

}  // namespace

int main() {
  log::set_level(log::Level::quiet);
  const fs::path root = fs::temp_directory_path() / "sgmlab_acceptance";
  fs::remove_all(root);

  {  // 1
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t entries = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
      const auto r = testing::random_network_gradcheck(i);
      worst = std::max(worst, r.max_rel_error);
      entries += r.entries;
    }
    const double t = seconds_since(t0);
    verdict(1, "gradient oracle", worst < 1e-4 && entries > 0 && t < 30.0,
            "20 networks, " + std::to_string(entries) + " entries, max rel error " + num(worst) +
                ", " + num(t, 3) + " s");
  }

  {  // 2
    const auto t0 = Clock::now();
    const auto r = testing::lora_property({1, 2, 4, 8}, 17);
    const double t = seconds_since(t0);
    verdict(2, "LoRA lifecycle",
            r.configurations > 0 && r.transparent && r.adapters_removed &&
                r.worst_fold_error <= 1e-9 && t < 10.0,
            std::to_string(r.configurations) + " configurations, transparent " +
                (r.transparent ? "yes" : "no") + ", worst fold error " + num(r.worst_fold_error) +
                ", " + num(t, 3) + " s");
  }

  {  // 3
    const auto cases = testing::metric_cases();
    double worst = 0.0;
    bool zero = false, negative_ck = false;
    std::map<std::string, double> s_by_name;
    for (const auto& c : cases) {
      const double s = stability_gap(c.ledger).value;
      const double p = plasticity_gap(c.ledger).value;
      const double ck = continual_knowledge_gap(c.ledger).value;
      worst = std::max({worst, std::abs(s - c.s_delta), std::abs(p - c.p_delta),
                        std::abs(ck - c.ck_delta)});
      zero = zero || (c.s_delta == 0.0 && c.p_delta == 0.0 && c.ck_delta == 0.0);
      negative_ck = negative_ck || c.ck_delta < 0.0;
      s_by_name[c.name] = s;
    }
    // Case 1: self-relative drop prefers model 1, the gap prefers model 2.
    // Case 2: equal self-relative drops, the gap separates them.
    const bool case1 =
        testing::self_relative_drop({0.6, 0.55, 0.6}) < testing::self_relative_drop({0.9, 0.8, 0.9}) &&
        s_by_name.at("case 1, model 2") < s_by_name.at("case 1, model 1");
    const bool case2 = std::abs(testing::self_relative_drop({0.7, 0.6, 0.7}) -
                                testing::self_relative_drop({0.9, 0.8, 0.9})) < 1e-12 &&
                       s_by_name.at("case 2, model 2") < s_by_name.at("case 2, model 1");
    verdict(3, "metric oracle",
            cases.size() >= 10 && worst <= 1e-12 && zero && negative_ck && case1 && case2,
            std::to_string(cases.size()) + " ledgers, max error " + num(worst) +
                ", zero case " + (zero ? "yes" : "no") + ", negative CK " +
                (negative_ck ? "yes" : "no") + ", case 1 " + (case1 ? "ok" : "wrong") +
                ", case 2 " + (case2 ? "ok" : "wrong"));
  }

  {  // 4
    const auto t0 = Clock::now();
    const auto r = testing::soft_target_property(1000, 23);
    const double t = seconds_since(t0);
    verdict(4, "soft-target algebra",
            r.worst_drift_ratio <= 1.0 && r.worst_target_sum <= 1e-9 && r.worst_u_sum <= 1e-9 &&
                r.nonnegative && r.count_mismatches == 0 && t < 10.0,
            "1000 sequences, drift/(1e-12 n) " + num(r.worst_drift_ratio) + ", target sum error " +
                num(r.worst_target_sum) + ", " + num(t, 3) + " s");
  }

  // Benchmark runs shared by criteria 5-9 and 11.
  double cil_secs = 0.0, iid_secs = 0.0;
  std::string cil_error, iid_error;
  const auto cil = run_seeds("cil_sgm_vs_vanilla.json", root / "cil", cil_secs, cil_error);
  const auto iid = run_seeds("iid_sgm_vs_vanilla.json", root / "iid", iid_secs, iid_error);
  if (!cil.empty()) {
    std::cout << "CIL benchmark (" << num(cil_secs, 3) << " s)\n";
    table(cil, {"naive", "vanilla", "sgm", "weight_init", "soft_targets", "oocf", "lora"});
  }
  if (!iid.empty()) {
    std::cout << "IID benchmark (" << num(iid_secs, 3) << " s)\n";
    table(iid, {"vanilla", "sgm"});
  }

  {  // 5
    std::size_t checked = 0, violations = 0, sessions = 0;
    bool frozen_entries_everywhere = true;
    for (const auto* group : {&cil, &iid}) {
      for (const auto& s : *group) {
        for (const auto& [name, run] : s.runs) {
          const bool freezes = name == "sgm" || name == "oocf" || name == "lora";
          for (const auto& rep : run.sessions) {
            ++sessions;
            checked += rep.audit.checked;
            violations += rep.audit.violations;
            if (freezes && rep.audit.checked == 0) frozen_entries_everywhere = false;
          }
        }
      }
    }
    const bool ran = !cil.empty() && !iid.empty();
    verdict(5, "freezing contracts", ran && violations == 0 && frozen_entries_everywhere,
            ran ? std::to_string(sessions) + " sessions, " + std::to_string(checked) +
                      " frozen entries audited, " + std::to_string(violations) + " changed"
                : "benchmark failed: " + cil_error + iid_error);
  }

  if (cil.empty()) {
    for (int id : {6, 7, 9, 11}) verdict(id, "benchmark", false, "run failed: " + cil_error);
  } else {
    {  // 6
      const auto a = count_below(cil, "sgm", "vanilla", s_of);
      const auto b = count_below(cil, "sgm", "vanilla", ck_of);
      std::size_t c = 0;
      for (const auto& s : cil) {
        const double naive = final_old_accuracy(s.at("naive"));
        bool worst = true;
        for (const auto& [name, run] : s.runs) {
          if (name != "naive" && final_old_accuracy(run) <= naive) worst = false;
        }
        c += worst;
      }
      const double u_sgm = mean_updates_to_best(cil, "sgm");
      const double u_van = mean_updates_to_best(cil, "vanilla");
      const bool ok = a >= 4 && b >= 4 && c == 5 && u_sgm <= u_van && cil_secs < 900.0;
      verdict(6, "stability-gap reproduction", ok,
              "(a) S(sgm)<S(vanilla) in " + std::to_string(a) + "/5, mean " +
                  num(seed_mean(cil, "sgm", s_of)) + " vs " + num(seed_mean(cil, "vanilla", s_of)) +
                  "; (b) CK in " + std::to_string(b) + "/5, mean " +
                  num(seed_mean(cil, "sgm", ck_of)) + " vs " +
                  num(seed_mean(cil, "vanilla", ck_of)) + "; (c) naive worst in " +
                  std::to_string(c) + "/5; (d) updates to 99% best " + num(u_sgm) + " vs " +
                  num(u_van) + "; runtime " + num(cil_secs, 3) + " s");
    }
    {  // 7
      const double s_van = seed_mean(cil, "vanilla", s_of);
      const double p_van = seed_mean(cil, "vanilla", p_of);
      bool all_below = true;
      std::string best_p;
      double best_reduction = -1e300;
      std::ostringstream detail;
      detail << "vanilla S " << num(s_van) << " P " << num(p_van);
      for (const auto& m : kMechanisms) {
        const double s = seed_mean(cil, m, s_of);
        const double p = seed_mean(cil, m, p_of);
        if (s > s_van) all_below = false;
        if (p_van - p > best_reduction) {
          best_reduction = p_van - p;
          best_p = m;
        }
        detail << "; " << m << " S " << num(s) << " P " << num(p);
      }
      detail << "; largest P reduction: " << best_p;
      verdict(7, "ablation direction", all_below && best_p == "weight_init", detail.str());
    }
  }

  if (iid.empty()) {
    verdict(8, "IID transfer direction", false, "run failed: " + iid_error);
  } else {
    const double mean = seed_mean(iid, "sgm", s_of);
    const auto below = count_below(iid, "sgm", "vanilla", s_of);
    verdict(8, "IID transfer direction", mean <= 0.01 && below >= 4,
            "sgm seed-mean S " + num(mean) + " (vanilla " + num(seed_mean(iid, "vanilla", s_of)) +
                "), below vanilla in " + std::to_string(below) + "/5");
  }

  if (!cil.empty()) {
    {  // 9
      const double J = 0.8;
      const auto zero = recovery_iterations({{0, 0.99 * J}, {10, 0.5}}, J, 0.97);
      const auto pos = recovery_iterations({{0, 0.96 * J}, {10, 0.98 * J}, {20, 1.00 * J}}, J, 1.0);
      const auto none = recovery_iterations({{0, 0.9 * J}, {10, 0.98 * J}, {20, 0.97 * J}}, J, 0.99);
      const bool traces = zero == 0u && pos == 20u && !none.has_value();
      std::size_t rs = 0, rv = 0;
      for (const auto& s : cil) {
        rs += recovered_sessions(s.at("sgm"), 0.97);
        rv += recovered_sessions(s.at("vanilla"), 0.97);
      }
      verdict(9, "recovery semantics", traces && rs > rv,
              std::string("constructed traces ") + (traces ? "ok" : "wrong") +
                  "; sessions recovering 0.97 of joint over 5 seeds: sgm " + std::to_string(rs) +
                  ", vanilla " + std::to_string(rv));
    }
  }

  {  // 10
    const auto r = testing::reservoir_property(10, 50, 10000, 3);
    const auto b = testing::class_balanced_property(10000, 5);
    const bool ok = r.z_first < 3.0 && r.z_middle < 3.0 && r.z_last < 3.0 &&
                    b.max_count_increases == 0 && b.over_capacity == 0 &&
                    b.bookkeeping_failures == 0 && b.inserts_when_full > 0;
    verdict(10, "buffer statistics", ok,
            "reservoir m/n " + num(r.expected) + ", z first/middle/last " + num(r.z_first, 3) + "/" +
                num(r.z_middle, 3) + "/" + num(r.z_last, 3) + "; balanced: " +
                std::to_string(b.inserts_when_full) + " full inserts, " +
                std::to_string(b.max_count_increases) + " max-count increases");
  }

  if (!cil.empty()) {  // 11
    bool same = true;
    std::string detail;
    try {
      const auto again = root / "cil_repeat";
      const auto cfg = config_for("cil_sgm_vs_vanilla.json", 1, again);
      RunOptions ro;
      ro.out_dir = again;
      run_experiment(cfg, ro);
      std::size_t files = 0;
      for (const auto& [name, run] : cil.front().runs) {
        const auto a = read_text(root / "cil" / "seed1" / name / "ledger.csv");
        const auto b = read_text(again / name / "ledger.csv");
        same = same && !a.empty() && a == b;
        ++files;
      }
      detail = std::to_string(files) + " ledger.csv files " +
               (same ? "byte-identical" : "differ") + " across two seed-1 runs";
    } catch (const std::exception& e) {
      same = false;
      detail = e.what();
    }
    verdict(11, "determinism", same, detail);
  }

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
