#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgmlab/config.hpp"
#include "sgmlab/experiment.hpp"
#include "sgmlab/metrics.hpp"

namespace sgmlab {

// One method's run directory as written by `run`.
struct RunRecord {
  std::filesystem::path dir;
  std::string method;
  std::uint64_t seed = 0;
  std::string group_key;  // resolved config modulo seed and output dir
  MetricLedger ledger;    // with joint and best references attached
  JointRefs joints;
  std::string joint_refs_hash;
  double sigma = 0.0;
};

RunRecord load_run(const std::filesystem::path& dir);

struct RunRow {
  std::string label;
  std::string method;
  std::uint64_t seed = 0;
  double s_delta = 0.0, p_delta = 0.0, ck_delta = 0.0;
  double sigma = 0.0;  // final accuracy on the pretraining classes
  double mu = 0.0;     // mean over sessions of the end-of-session accuracy on E_{1:j}
  double alpha = 0.0;  // end-of-stream accuracy on E_{1:N}
  bool self_best = false;
  JointMode joint_mode = JointMode::per_prefix;
};

// Per-run rows from a ledger; pure function of the recorded rows and references.
RunRow score_run(const RunRecord& run);

// Mean of acc_old over sessions at each within-session step. Empty when the
// sessions were evaluated at different steps.
std::vector<std::pair<std::size_t, double>> session_averaged_old(const MetricLedger& ledger);

struct Report {
  std::string text;
  nlohmann::json json;
  std::map<std::string, std::string> files;  // relative path -> contents (curve CSVs)
};

// joint_refs_text: contents of an explicit joint reference file; every run
// must have been normalized with exactly those bytes. Without it, runs on the
// same stream must agree on their references.
Report build_report(const std::vector<RunRecord>& runs,
                    const std::optional<std::string>& joint_refs_text = std::nullopt);

}  // namespace sgmlab
