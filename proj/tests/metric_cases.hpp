#pragma once

// Constructed ledgers with hand-computed gap values. Used by the unit tests
// and the acceptance gate.

#include <functional>
#include <string>
#include <vector>

#include "sgmlab/metrics.hpp"

namespace testing {

struct SessionTrace {
  std::size_t session;
  std::vector<double> old_acc, new_acc, all_acc;  // one entry per eval point
  sgmlab::JointRef joint;
  double best_new;
};

inline sgmlab::MetricLedger make_ledger(const std::vector<SessionTrace>& sessions,
                                        std::size_t step = 50) {
  sgmlab::MetricLedger l;
  for (const auto& s : sessions) {
    for (std::size_t i = 0; i < s.old_acc.size(); ++i) {
      l.record_eval(s.session, i * step, s.old_acc[i], s.new_acc[i], s.all_acc[i]);
    }
    l.set_joint(s.session, s.joint);
    l.set_best(s.session, s.best_new);
  }
  return l;
}

struct MetricCase {
  std::string name;
  sgmlab::MetricLedger ledger;
  double s_delta, p_delta, ck_delta;
};

inline std::vector<MetricCase> metric_cases() {
  std::vector<MetricCase> out;
  // Matches the joint model everywhere: every gap vanishes.
  out.push_back({"zero gaps",
                 make_ledger({{2, {0.8, 0.8}, {0.6, 0.6}, {0.7, 0.7}, {0.8, 0.6, 0.7}, 0.6}}),
                 0.0, 0.0, 0.0});
  // Old trace [0.5, 0.75] against a joint of 1: Omega = 0.625.
  out.push_back({"two-point averages",
                 make_ledger({{2, {0.5, 0.75}, {0.2, 0.4}, {0.5, 0.5}, {1.0, 0.8, 0.5}, 0.8}}),
                 0.375, 0.625, 0.0});
  // One eval point above the joint reference: negative gaps (transfer).
  out.push_back({"transfer",
                 make_ledger({{2, {0.9}, {0.5}, {0.9}, {0.72, 0.5, 0.72}, 0.5}}),
                 1.0 - 0.9 / 0.72, 0.0, -0.25});
  // Two sessions with Omega_all 0.9 and 0.8.
  out.push_back({"two sessions",
                 make_ledger({{2, {0.6, 0.3}, {0.1, 0.3}, {0.9, 0.9}, {0.6, 0.9, 1.0}, 0.4},
                              {3, {0.5}, {0.25}, {0.4}, {0.5, 0.5, 0.5}, 0.5}}),
                 1.0 - (0.75 + 1.0) / 2.0, 0.5, 0.15});
  // Trace above the joint at every point.
  out.push_back({"uniformly above joint",
                 make_ledger({{2, {0.9, 0.95}, {0.4, 0.4}, {0.8, 0.8}, {0.8, 0.4, 0.8}, 0.4}}),
                 1.0 - 0.925 / 0.8, 0.0, 0.0});
  // Sessions with different numbers of eval points weigh equally.
  out.push_back({"uneven sessions",
                 make_ledger({{2, {0.3, 0.6, 0.9}, {0.2, 0.2, 0.2}, {0.5, 0.5, 0.5}, {0.9, 0.4, 0.5}, 0.4},
                              {3, {0.45}, {0.3}, {0.5}, {0.9, 0.3, 1.0}, 0.3},
                              {4, {0.8, 0.8}, {0.1, 0.2}, {0.5, 0.5}, {0.8, 0.3, 0.5}, 0.3}}),
                 1.0 - (0.6 / 0.9 + 0.5 + 1.0) / 3.0,
                 1.0 - (0.5 + 1.0 + 0.15 / 0.3) / 3.0,
                 1.0 - (1.0 + 0.5 + 1.0) / 3.0});
  // Nothing learned on the new classes: the plasticity gap hits its bound.
  out.push_back({"no new-class accuracy",
                 make_ledger({{2, {0.7, 0.7}, {0.0, 0.0}, {0.35, 0.35}, {0.7, 0.6, 0.7}, 0.5}}),
                 0.0, 1.0, 0.5});
  // Appendix-style comparison, case 1: a low, flat model and a high model with
  // a larger self-relative drop, against a joint reference of 1.
  out.push_back({"case 1, model 1",
                 make_ledger({{2, {0.6, 0.55, 0.6}, {0.5, 0.5, 0.5}, {0.6, 0.6, 0.6}, {1.0, 0.5, 0.6}, 0.5}}),
                 1.0 - (0.6 + 0.55 + 0.6) / 3.0, 0.0, 0.0});
  out.push_back({"case 1, model 2",
                 make_ledger({{2, {0.9, 0.8, 0.9}, {0.5, 0.5, 0.5}, {0.6, 0.6, 0.6}, {1.0, 0.5, 0.6}, 0.5}}),
                 1.0 - (0.9 + 0.8 + 0.9) / 3.0, 0.0, 0.0});
  // Case 2: identical self-relative drops of 0.1 at different levels.
  out.push_back({"case 2, model 1",
                 make_ledger({{2, {0.7, 0.6, 0.7}, {0.5, 0.5, 0.5}, {0.6, 0.6, 0.6}, {1.0, 0.5, 0.6}, 0.5}}),
                 1.0 - (0.7 + 0.6 + 0.7) / 3.0, 0.0, 0.0});
  out.push_back({"case 2, model 2",
                 make_ledger({{2, {0.9, 0.8, 0.9}, {0.5, 0.5, 0.5}, {0.6, 0.6, 0.6}, {1.0, 0.5, 0.6}, 0.5}}),
                 1.0 - (0.9 + 0.8 + 0.9) / 3.0, 0.0, 0.0});
  return out;
}

// Largest drop below the trace's own first value: the self-referenced
// measure the joint-normalized metric is contrasted with.
inline double self_relative_drop(const std::vector<double>& trace) {
  double worst = 0.0;
  for (double a : trace) worst = std::max(worst, trace.front() - a);
  return worst;
}

}  // namespace testing
