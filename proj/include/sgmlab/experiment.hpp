#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgmlab/config.hpp"
#include "sgmlab/metrics.hpp"
#include "sgmlab/stream.hpp"
#include "sgmlab/trainer.hpp"

namespace sgmlab {

// Seed for one named purpose (data split, schedule, pretraining, ...), so that
// adding a consumer never shifts the random streams of the others.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a(std::string_view bytes);

// The dataset with labels renumbered in stream order (S_1 classes first, then
// each session's new classes), the held-out split and the session schedule.
struct PreparedStream {
  Dataset data;
  HoldoutSplit split;
  StreamSchedule schedule;
  std::vector<std::size_t> original_label;  // new label -> label in the source data
  std::vector<std::size_t> pretrain_test;    // held-out samples of S_1 classes

  // Per schedule index s (0 = S_1): held-out indices for E_{1:s-1}, E_s, E_{1:s}.
  struct EvalIndices {
    std::vector<std::size_t> old_idx, new_idx, all_idx;
    std::size_t classes_before = 0;
    std::size_t classes_after = 0;
  };
  std::vector<EvalIndices> eval;

  std::size_t num_sessions() const { return schedule.num_sessions(); }
  std::size_t classes_after(std::size_t s) const { return eval[s].classes_after; }
  std::uint64_t fingerprint() const { return data.fingerprint(); }
  std::string schedule_hash() const;
  nlohmann::json manifest() const;
};

PreparedStream prepare_stream(const ExperimentConfig& config);

template <class T>
SessionEval<T> session_eval(const PreparedStream& stream, std::size_t s);

struct JointRefSet {
  std::size_t trained_through = 0;  // ledger session number of the last included session
  std::map<std::size_t, JointRef> evaluations;  // ledger session -> accuracies
};

struct JointRefs {
  JointMode mode = JointMode::per_prefix;
  std::uint64_t seed = 0;
  std::string data_fingerprint;
  std::string schedule_hash;
  std::vector<JointRefSet> sets;

  // Reference for ledger session j (2..N).
  JointRef for_session(std::size_t j) const;
};

nlohmann::json joint_refs_to_json(const JointRefs& refs);
JointRefs joint_refs_from_json(const nlohmann::json& j);
std::string joint_refs_text(const JointRefs& refs);  // canonical file contents

JointRefs compute_joint_refs(const ExperimentConfig& config, const PreparedStream& stream);

// Throws std::runtime_error if the references were computed on another stream.
void check_joint_refs(const JointRefs& refs, const PreparedStream& stream);

struct MethodRun {
  MethodConfig method;
  MetricLedger ledger;
  std::vector<SessionReport> sessions;
  double sigma = 0.0;  // final accuracy on the pretraining classes
  std::size_t total_updates = 0;
  double seconds = 0.0;
};

struct ExperimentResult {
  PreparedStream stream;
  JointRefs joints;
  double pretrain_accuracy = 0.0;  // on the S_1 held-out split
  std::vector<MethodRun> runs;

  const MethodRun& run(const std::string& name) const;
};

struct RunOptions {
  std::optional<JointRefs> joints;              // computed when absent
  std::optional<std::filesystem::path> out_dir;  // artifacts written when set
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// summary.json payload for one method run.
nlohmann::json run_summary(const ExperimentConfig& config, const MethodRun& run,
                           const std::string& joint_refs_hash);

// Text of the resolved schedule, printed by validate / --dry-run.
std::string describe_schedule(const ExperimentConfig& config, const PreparedStream& stream);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace sgmlab
