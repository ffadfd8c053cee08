#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sgmlab {

struct LedgerRow {
  std::size_t session = 0;  // j; the pretraining batch is session 1
  std::size_t step = 0;     // iteration i within the session
  double acc_old = 0.0;     // A_i(E_{1:j-1})
  double acc_new = 0.0;     // A_i(E_j)
  double acc_all = 0.0;     // A_i(E_{1:j})
};

struct JointRef {
  double acc_old = 0.0;
  double acc_new = 0.0;
  double acc_all = 0.0;

  friend bool operator==(const JointRef&, const JointRef&) = default;
};

class LedgerError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Time-indexed accuracy traces plus the joint and best references used to
// normalize them.
class MetricLedger {
 public:
  // Rows must arrive strictly increasing in (session, step) with accuracies in [0,1].
  void record_eval(std::size_t session, std::size_t step, double acc_old, double acc_new,
                   double acc_all);

  const std::vector<LedgerRow>& rows() const { return rows_; }
  std::vector<std::size_t> sessions() const;  // ascending, distinct
  std::vector<LedgerRow> session_rows(std::size_t session) const;

  void set_joint(std::size_t session, const JointRef& ref);
  const std::map<std::size_t, JointRef>& joints() const { return joint_; }
  const JointRef& joint(std::size_t session) const;

  void set_best(std::size_t session, double best_new);
  const std::map<std::size_t, double>& bests() const { return best_; }
  double best(std::size_t session) const;

  // A_best(E_j) from this ledger's own maximum acc_new per session.
  void use_self_best();
  bool self_referenced_best() const { return self_best_; }

  std::string to_csv() const;
  static MetricLedger from_csv(const std::string& text);

 private:
  std::vector<LedgerRow> rows_;
  std::map<std::size_t, JointRef> joint_;
  std::map<std::size_t, double> best_;
  bool self_best_ = false;
};

struct GapResult {
  double value = 0.0;
  std::map<std::size_t, double> omegas;  // per session j >= 2
};

// 1 - mean_j Omega_j^old, Omega_j^old = mean_i A_i(E_{1:j-1}) / A_joint(E_{1:j-1}).
GapResult stability_gap(const MetricLedger& ledger);
// 1 - mean_j Omega_j^new, Omega_j^new = mean_i A_i(E_j) / A_best(E_j).
GapResult plasticity_gap(const MetricLedger& ledger);
// 1 - mean_j Omega_j^all, Omega_j^all = mean_i A_i(E_{1:j}) / A_joint(E_{1:j}).
GapResult continual_knowledge_gap(const MetricLedger& ledger);

struct TracePoint {
  std::size_t step = 0;
  double acc = 0.0;
};

std::vector<TracePoint> old_trace(const MetricLedger& ledger, std::size_t session);
std::vector<TracePoint> new_trace(const MetricLedger& ledger, std::size_t session);

// Smallest recorded step whose accuracy reaches fraction * joint_ref, or
// nullopt when the trace never gets there.
std::optional<std::size_t> recovery_iterations(const std::vector<TracePoint>& trace,
                                               double joint_ref, double fraction);

// Smallest recorded step reaching fraction * (max of the trace).
std::size_t updates_to_fraction_best(const std::vector<TracePoint>& trace,
                                     double fraction = 0.99);

// Sets A_best(E_j) on every ledger to the cohort maximum of acc_new in session j.
void assign_cohort_best(std::vector<MetricLedger*> ledgers);

struct RunScore {
  std::string name;
  double s_delta = 0.0;
  double p_delta = 0.0;
  double ck_delta = 0.0;
};

struct RankedMetric {
  std::string metric;
  std::vector<std::pair<std::string, double>> order;  // ascending
  std::vector<std::size_t> ranks;                     // 1-based, ties share a rank
};

struct ComparisonReport {
  std::vector<RunScore> scores;
  std::vector<RankedMetric> rankings;  // S_delta, P_delta, CK_delta
};

// Scores every ledger and ranks them per metric. All ledgers must carry
// identical joint references.
ComparisonReport compare_runs(const std::vector<std::pair<std::string, const MetricLedger*>>& runs);

// metrics.json payload for one ledger.
nlohmann::json metrics_json(const MetricLedger& ledger, const std::vector<double>& fractions,
                            double best_fraction = 0.99);

}  // namespace sgmlab
