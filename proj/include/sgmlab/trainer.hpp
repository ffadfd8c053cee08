#pragma once

#include <chrono>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgmlab/metrics.hpp"
#include "sgmlab/model.hpp"
#include "sgmlab/optimizer.hpp"
#include "sgmlab/rehearsal.hpp"
#include "sgmlab/sgm.hpp"
#include "sgmlab/stream.hpp"

namespace sgmlab {

// ---------------------------------------------------------------------------
// Learning-rate schedule

enum class ScheduleKind { constant, one_cycle };
ScheduleKind parse_schedule(const std::string& s);
std::string to_string(ScheduleKind k);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 1e-3;
  double layer_decay = 0.9;
  // one-cycle shape
  double warmup_fraction = 0.3;
  double start_divisor = 25.0;
  double final_divisor = 1e4;
};

// One-cycle: linear warmup from base/start_divisor to base over the first
// warmup_fraction of steps, then cosine annealing to base/final_divisor.
// The result is scaled by layer_decay^depth.
double lr_at(const LrSchedule& schedule, std::size_t step, std::size_t total_steps, int depth);

// ---------------------------------------------------------------------------
// Method configuration

enum class Strategy { naive_finetune, rehearsal, output_only, derpp, gdumb, lwf };
Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

struct MethodConfig {
  std::string name = "vanilla";
  Strategy strategy = Strategy::rehearsal;
  MethodBundle mechanisms;
  BufferPolicy buffer_policy = BufferPolicy::unlimited_cumulative;
  std::optional<std::size_t> buffer_capacity;
  double new_fraction = 0.5;
  bool balanced = false;
  double derpp_alpha = 0.1;
  double derpp_beta = 0.9;
  double lwf_temperature = 2.0;
  double lwf_lambda = 1.0;
  bool online = false;
  LrSchedule lr;
  AdamWConfig adamw;

  bool uses_buffer() const {
    return strategy != Strategy::naive_finetune && strategy != Strategy::lwf;
  }
};

struct SessionConfig {
  ComputeBudget budget;  // U and b; U is ignored by online sessions (one step per sample)
  std::size_t eval_every = 50;
  std::size_t freeze_first_layers = 0;
};

// ---------------------------------------------------------------------------
// Evaluation sets for one session, in model label space.

template <class T>
struct EvalSet {
  Tensor2<T> x;
  std::vector<std::size_t> y;
  std::size_t size() const { return y.size(); }
};

template <class T>
struct SessionEval {
  EvalSet<T> old_set;  // E_{1:j-1}
  EvalSet<T> new_set;  // E_j
  EvalSet<T> all_set;  // E_{1:j}
};

template <class T>
EvalSet<T> make_eval_set(const Dataset& data, const std::vector<std::size_t>& indices);

template <class T>
double accuracy(const Model<T>& model, const EvalSet<T>& set);

// ---------------------------------------------------------------------------
// Supervised fitting (pretraining and joint models)

struct FitConfig {
  ComputeBudget budget;
  LrSchedule lr;
  AdamWConfig adamw;
};

// Exactly budget.iterations AdamW steps on uniformly drawn minibatches with
// hard targets. Returns the number of sample presentations consumed.
template <class T>
std::size_t fit_supervised(Model<T>& model, const Dataset& data,
                           const std::vector<std::size_t>& samples, const FitConfig& config,
                           std::mt19937_64& rng);

// Pretraining on S_1. Requires model.output_dim() == |Y_1|.
template <class T>
std::size_t pretrain(Model<T>& model, const Dataset& data, const Session& first,
                     const FitConfig& config, std::mt19937_64& rng);

// Fresh model trained on the union of `samples` (all data up to some session),
// evaluated on that session's three evaluation sets.
template <class T>
JointRef joint_train(const ModelSpec& spec, const Dataset& data,
                     const std::vector<std::size_t>& samples, const FitConfig& config,
                     const SessionEval<T>& eval, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Continual learner

struct CurvePoint {
  std::size_t step = 0;
  double acc_old = 0.0;
  double acc_new = 0.0;
  double acc_all = 0.0;
  double loss = 0.0;  // mean training loss since the previous point
};

struct FreezeAudit {
  std::size_t checked = 0;     // frozen entries snapshotted at session start
  std::size_t violations = 0;  // of those, entries that changed
  std::size_t oocf_rows = 0;
  std::size_t prefix_layers = 0;
  std::size_t lora_hosts = 0;
};

struct SessionReport {
  std::size_t session = 0;
  std::size_t steps = 0;
  std::size_t presentations = 0;
  std::size_t new_classes = 0;
  std::size_t trainable_params = 0;
  std::vector<CurvePoint> curve;
  FreezeAudit audit;
  bool had_adapters_at_end = false;  // before fold
  bool adapters_after_fold = false;
  double fold_max_abs_diff = 0.0;    // logits before vs after fold
  double fold_logit_scale = 0.0;
  double seconds = 0.0;
};

// Owns the model, rehearsal buffer, soft-target table and RNG of one method
// as it walks through the stream. Datasets are borrowed and must outlive it.
template <class T>
class ContinualLearner {
 public:
  ContinualLearner(Model<T> model, const Dataset& data, MethodConfig method,
                   SessionConfig session, std::uint64_t seed);

  // Inserts S_1 into the buffer (when the method rehearses).
  void seed_buffer(const Session& first);

  // Offline or online, per method.online.
  SessionReport run_session(std::size_t j, const Session& session, const SessionEval<T>& eval,
                            MetricLedger& ledger);
  SessionReport run_offline_session(std::size_t j, const Session& session,
                                    const SessionEval<T>& eval, MetricLedger& ledger);
  SessionReport run_online_session(std::size_t j, const Session& session,
                                   const SessionEval<T>& eval, MetricLedger& ledger);

  const Model<T>& model() const { return model_; }
  Model<T>& model() { return model_; }
  const RehearsalBuffer& buffer() const { return buffer_; }
  const SoftTargetTable& soft_targets() const { return soft_; }
  const MethodConfig& method() const { return method_; }
  std::size_t total_updates() const { return total_updates_; }

 private:
  struct Snapshot {
    std::vector<std::pair<const Parameter<T>*, std::vector<T>>> frozen_values;
  };

  std::size_t prepare_session(const Session& session, SessionReport& report);
  void finish_session(const Session& session, SessionReport& report, const SessionEval<T>& eval);
  Snapshot snapshot_frozen();
  void audit_frozen(const Snapshot& snap, FreezeAudit& audit);
  void record(std::size_t j, std::size_t step, const SessionEval<T>& eval, MetricLedger& ledger,
              SessionReport& report, double loss);
  double train_step(const std::vector<std::size_t>& new_samples,
                    const std::vector<std::size_t>& replay_positions, double lr);
  Tensor2<T> make_targets(const Tensor2<T>& logits, const std::vector<std::size_t>& labels);
  void insert_into_buffer(std::size_t sample);

  Model<T> model_;
  const Dataset* data_;
  MethodConfig method_;
  SessionConfig session_;
  RehearsalBuffer buffer_;
  SoftTargetTable soft_;
  std::mt19937_64 rng_;
  std::optional<Model<T>> teacher_;
  OptimState<T> optim_;
  std::size_t total_updates_ = 0;
  std::uint64_t lora_seed_;
  bool warned_empty_buffer_ = false;
};

}  // namespace sgmlab
